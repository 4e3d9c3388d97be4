# trilayer_magic/core_engine/birman_schwinger.py
"""
Magic parameters from the Birman-Schwinger operator

    B_k = L V_-(p) L V_+(p) + r^2 L V_+(pt) L V_-(pt),    L = (omega^2 (m+k1) - omega (n+k2))^{-1}

on the mode class (1,1). alpha12 is magic iff 1/alpha12^2 is an eigenvalue.
"""
import logging
from dataclasses import dataclass, asdict
from functools import partial
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, sparse

from ..config import EXCLUSION_RADIUS, MAGIC_TOL, NULLSPACE_REL, parse_fraction
from ..errors import (
    ConfigError,
    EigensolveError,
    FloquetExclusionError,
    NotMagicError,
    TrilayerError,
    UnresolvedMultiplicityError,
)
from .fourier_ops import (
    Basis,
    OperatorMatrix,
    Truncation,
    as_rect_k,
    assemble_D,
    dirac_diagonal,
    multiplication_block,
)
from .lattice import TwistConfig, derive_config, distance_to_integer_lattice
from .potential import PotentialCoeffs
from .utils import parallel_map

logger = logging.getLogger(__name__)

# Generic Floquet point used for discovery; far from Z^2 and the protected points
DISCOVERY_K = (0.37, 0.61)

# Relative distance under which two alphas are counted as one cluster
CLUSTER_REL = 1e-5

SWEEP_HEADER = ["ratio_num", "ratio_den", "hop_ratio_re", "hop_ratio_im",
                "alpha_re", "alpha_im", "multiplicity", "residual", "N"]


@dataclass
class MagicParameter:
    alpha12: complex
    ratio_r: complex = 1.0
    multiplicity: int = 1
    verified: bool = False
    residual: Optional[float] = None
    eigenvalue: Optional[complex] = None

    @property
    def alpha23(self) -> complex:
        return self.alpha12 * self.ratio_r

    def to_dict(self) -> dict:
        return asdict(self)


# --- Helper functions ---
def offset_k_grid(n: int = 5, offset: float = 0.5) -> List[Tuple[float, float]]:
    """n x n rectangular Floquet points over [0, 3)^2, shifted off the lattice by `offset` cells."""
    step = 3.0 / n
    return [((i + offset) * step, (j + offset) * step) for i in range(n) for j in range(n)]


def effective_alpha(twist: TwistConfig, alpha12: complex, hop_ratio: complex) -> Tuple[complex, complex]:
    """(alpha12, alpha23) in the orientation the operators are assembled in."""
    a12, a23 = complex(alpha12), complex(alpha12) * complex(hop_ratio)
    if twist.flipped:
        return a23, a12
    return a12, a23


def _check_exclusion(k, radius: float = EXCLUSION_RADIUS) -> Tuple[float, float]:
    k1, k2 = as_rect_k(k)
    if distance_to_integer_lattice(k1, k2) < radius:
        raise FloquetExclusionError(f"k=({k1}, {k2}) lies within {radius} of the dual lattice")
    return k1, k2


def _near_protected(k, twist: TwistConfig, radius: float = 0.2) -> bool:
    k1, k2 = as_rect_k(k)
    for c1, c2 in twist.protected_points():
        d1 = (k1 - c1 + 1.5) % 3 - 1.5
        d2 = (k2 - c2 + 1.5) % 3 - 1.5
        if np.hypot(d1, d2) < radius:
            return True
    return False


# --- Assembly ---
def assemble_Bk(hop_ratio: complex, k, twist: TwistConfig, pot: PotentialCoeffs,
                truncation: Truncation, exclusion: float = EXCLUSION_RADIUS) -> OperatorMatrix:
    """
    B_k on the (1,1) class. `hop_ratio` is alpha23/alpha12 in the input
    orientation; flipped trilayers use its inverse. Intermediate modes
    use the whole box, so only out-of-box couplings are lost.
    """
    k = _check_exclusion(k, exclusion)
    r = twist.effective_hop_ratio(hop_ratio) if hop_ratio != 0 else 0j
    modes = truncation.modes()
    lam = sparse.diags(1.0 / dirac_diagonal(modes, k), format="csr")
    p, pt = twist.p, twist.p_tilde
    B = lam @ multiplication_block(pot, -p, modes, modes) @ lam @ multiplication_block(pot, p, modes, modes)
    if r != 0:
        B = B + r ** 2 * (lam @ multiplication_block(pot, pt, modes, modes)
                          @ lam @ multiplication_block(pot, -pt, modes, modes))
    keep = np.array([i for i, (m, n) in enumerate(modes) if m % 3 == 1 and n % 3 == 1], dtype=int)
    data = B.tocsr()[keep][:, keep].toarray()
    basis = Basis(components=(tuple(modes[i] for i in keep),), labels=("(1,1)",))
    logger.debug("assembled B_k at k=%s, dim %d", k, len(keep))
    return OperatorMatrix(data=data, basis=basis, k=k, label="B_k", scale=1.0)


def bk_eigenvalues(Bk: OperatorMatrix) -> np.ndarray:
    if not np.all(np.isfinite(Bk.data)):
        raise EigensolveError(f"{Bk.label} has non-finite entries")
    try:
        evals = linalg.eigvals(Bk.data)
    except linalg.LinAlgError as exc:
        cond = np.linalg.cond(Bk.data)
        raise EigensolveError(f"eigensolve of {Bk.label} (dim {Bk.dim}) failed, condition {cond:.3e}") from exc
    norm = np.linalg.norm(Bk.data)
    return evals[np.abs(evals) > NULLSPACE_REL * norm]


def _alpha_order(alpha: complex):
    return round(abs(alpha), 12), round(float(np.angle(alpha)), 12)


def is_canonical(alpha: complex, tol: float = 1e-12) -> bool:
    """True for exactly one of alpha, -alpha: positive real part, or positive imaginary part on the imaginary axis."""
    alpha = complex(alpha)
    if abs(alpha.real) > tol * max(1.0, abs(alpha)):
        return alpha.real > 0
    return alpha.imag > 0


def cluster_alphas(alphas: Sequence[complex], eigen: Sequence[complex], rel: float = CLUSTER_REL):
    """Merge numerically coincident alphas. Returns [(mean alpha, count, eigenvalue)]."""
    order = sorted(range(len(alphas)), key=lambda i: _alpha_order(alphas[i]))
    clusters: List[List[int]] = []
    for i in order:
        for cl in clusters:
            ref = alphas[cl[0]]
            if abs(alphas[i] - ref) < rel * max(1.0, abs(ref)):
                cl.append(i)
                break
        else:
            clusters.append([i])
    out = []
    for cl in clusters:
        out.append((complex(np.mean([alphas[i] for i in cl])), len(cl), complex(eigen[cl[0]])))
    out.sort(key=lambda item: _alpha_order(item[0]))
    return out


def magic_from_Bk(Bk: OperatorMatrix, count: Optional[int] = None, hop_ratio: complex = 1.0,
                  twist: Optional[TwistConfig] = None) -> List[MagicParameter]:
    """
    alpha12 = +-1/sqrt(lambda) for every eigenvalue above the nullspace
    threshold, clustered, sorted by |alpha| then argument. With a flipped
    twist the effective alpha is mapped back to the input orientation.
    """
    evals = bk_eigenvalues(Bk)
    alphas, eigen = [], []
    for lam in evals:
        root = 1.0 / np.sqrt(complex(lam))
        alphas.extend([root, -root])
        eigen.extend([lam, lam])
    found = []
    for alpha, size, lam in cluster_alphas(alphas, eigen):
        if twist is not None and twist.flipped:
            alpha = twist.original_alpha(alpha, hop_ratio)[0]
        found.append(MagicParameter(alpha12=alpha, ratio_r=complex(hop_ratio), multiplicity=size, eigenvalue=lam))
    found.sort(key=lambda m: _alpha_order(m.alpha12))
    logger.info("found %d magic candidates from %s", len(found), Bk.label)
    return found[:count] if count else found


def _smin_at(k, alpha, twist, pot, truncation) -> float:
    D = assemble_D(alpha, k, twist, pot, truncation, sector=0)
    return float(D.singular_values()[0])


def _svals_at(k, alpha, twist, pot, truncation, count) -> np.ndarray:
    D = assemble_D(alpha, k, twist, pot, truncation, sector=0)
    return D.singular_values()[:count]


def verify_magic(alpha, twist: TwistConfig, pot: PotentialCoeffs, truncation: Truncation,
                 k_samples: Optional[Iterable] = None, tol: float = MAGIC_TOL,
                 workers: int = 1) -> Tuple[bool, float]:
    """verified iff sigma_min(D(alpha) + k) < tol at every sampled k (alpha in operator orientation)."""
    ks = list(k_samples) if k_samples is not None else offset_k_grid(5)
    smins = parallel_map(partial(_smin_at, alpha=alpha, twist=twist, pot=pot, truncation=truncation),
                         ks, workers=workers, desc="verify")
    residual = float(max(smins))
    logger.info("alpha=%s residual %.3e over %d k-points", alpha, residual, len(ks))
    return residual < tol, residual


def multiplicity(alpha, twist: TwistConfig, pot: PotentialCoeffs, truncation: Truncation,
                 tol: float = MAGIC_TOL, k_samples: Optional[Iterable] = None, workers: int = 1) -> int:
    """min over k (away from the protected points) of the number of singular values below tol."""
    ks = [k for k in (k_samples if k_samples is not None else offset_k_grid(4, 0.31))
          if not _near_protected(k, twist)]
    if not ks:
        raise ConfigError(f"no admissible k samples for alpha={alpha}: every sample lies near a protected point")
    count = 8
    svals = parallel_map(partial(_svals_at, alpha=alpha, twist=twist, pot=pot, truncation=truncation, count=count),
                         ks, workers=workers, desc="multiplicity")
    dims = []
    for k, s in zip(ks, svals):
        below = int(np.sum(s < tol))
        ambiguous = np.sum((s >= tol) & (s < 10 * tol))
        if ambiguous:
            raise UnresolvedMultiplicityError(
                f"alpha={alpha}: singular values {s[below:below + int(ambiguous)]} at k={k} "
                f"fall between tol={tol:.1e} and 10*tol")
        dims.append(below)
    result = min(dims) if dims else 0
    if result == 0:
        raise NotMagicError(f"alpha={alpha} has no kernel at sampled k (min sigma {min(s[0] for s in svals):.3e})")
    return result


# --- Sweeps ---
def discover(twist: TwistConfig, pot: PotentialCoeffs, hop_ratio: complex, truncation: Truncation,
             count: Optional[int] = None, k=DISCOVERY_K) -> List[MagicParameter]:
    Bk = assemble_Bk(hop_ratio, k, twist, pot, truncation)
    return magic_from_Bk(Bk, count, hop_ratio, twist)


def _sweep_row(item, zeta1, pot, truncation, count, verify, tol):
    ratio, hop_ratio = item
    rows = []
    try:
        twist = derive_config(zeta1, ratio)
        for magic in discover(twist, pot, hop_ratio, truncation, count):
            if verify:
                pair = effective_alpha(twist, magic.alpha12, hop_ratio)
                magic.verified, magic.residual = verify_magic(pair, twist, pot, truncation, offset_k_grid(3), tol)
            rows.append({"ratio": twist.input_ratio, "hop_ratio": complex(hop_ratio), "magic": magic, "error": None})
    except TrilayerError as exc:
        logger.warning("sweep row ratio=%s hop=%s failed: %s", ratio, hop_ratio, exc)
        rows.append({"ratio": ratio, "hop_ratio": complex(hop_ratio), "magic": None, "error": str(exc)})
    return rows


def sweep(items: Sequence[Tuple[object, complex]], pot: PotentialCoeffs, truncation: Truncation,
          count: int = 6, zeta1: float = 1.0, verify: bool = False, tol: float = MAGIC_TOL,
          workers: int = 1, progress: bool = False) -> List[dict]:
    """
    One discovery per (twist ratio, hop ratio). Failed rows are kept with
    their error; results are ordered by (ratio, hop ratio, |alpha|, arg alpha).
    """
    func = partial(_sweep_row, zeta1=zeta1, pot=pot, truncation=truncation, count=count, verify=verify, tol=tol)
    nested = parallel_map(func, list(items), workers=workers, desc="sweep", progress=progress)
    rows = [row for chunk in nested for row in chunk]

    def key(row):
        alpha = row["magic"].alpha12 if row["magic"] else 0j
        return (parse_fraction(row["ratio"]), row["hop_ratio"].real, row["hop_ratio"].imag) + _alpha_order(alpha)

    rows.sort(key=key)
    return rows


def sweep_csv_rows(rows: Sequence[dict], N: int) -> List[list]:
    out = []
    for row in rows:
        ratio = parse_fraction(row["ratio"])
        magic = row["magic"]
        if magic is None:
            out.append([ratio.numerator, ratio.denominator, row["hop_ratio"].real, row["hop_ratio"].imag,
                        "", "", "", "error", N])
            continue
        out.append([ratio.numerator, ratio.denominator, row["hop_ratio"].real, row["hop_ratio"].imag,
                    magic.alpha12.real, magic.alpha12.imag, magic.multiplicity,
                    "" if magic.residual is None else magic.residual, N])
    return out


# --- Cross-checks ---
def assemble_tbg(k, truncation: Truncation, pot: PotentialCoeffs) -> OperatorMatrix:
    """T_k = (2Dzb + k)^{-1} [[0, U(z)], [U(-z), 0]] on both layers of the bilayer."""
    k = _check_exclusion(k)
    modes = truncation.modes()
    lam = sparse.diags(1.0 / dirac_diagonal(modes, k), format="csr")
    upper = lam @ multiplication_block(pot, 1, modes, modes)
    lower = lam @ multiplication_block(pot, -1, modes, modes)
    data = sparse.bmat([[None, upper], [lower, None]], format="csr").toarray()
    basis = Basis(components=(modes, modes), labels=("L1", "L2"))
    return OperatorMatrix(data=data, basis=basis, k=k, label="T_k", scale=1.0)


def bilayer_magic(pot: PotentialCoeffs, truncation: Truncation, count: int = 4,
                  k=DISCOVERY_K) -> List[complex]:
    """Bilayer magic parameters alpha = 1/mu, mu in Spec T_k, deduplicated, sorted by |alpha|."""
    T = assemble_tbg(k, truncation, pot)
    evals = bk_eigenvalues(T)
    alphas = [1.0 / complex(mu) for mu in evals]
    merged = cluster_alphas(alphas, evals)
    return [alpha for alpha, _, _ in merged][:count]


def symmetry_closure(magics: Sequence[complex], tol: float = 1e-6) -> dict:
    """Checks that the found set is closed under alpha -> -alpha and alpha -> conj(alpha)."""
    values = np.array([complex(m.alpha12 if isinstance(m, MagicParameter) else m) for m in magics])
    reasons = []
    worst = {"negation": 0.0, "conjugation": 0.0}
    for a in values:
        for name, image in (("negation", -a), ("conjugation", np.conj(a))):
            dist = float(np.min(np.abs(values - image))) if values.size else 0.0
            worst[name] = max(worst[name], dist / max(1.0, abs(a)))
    for name, value in worst.items():
        if value > tol:
            reasons.append(f"{name} closure defect {value:.3e}")
    return {"passed": not reasons, "reasons": reasons, "indicators": worst}


def hs_norm_study(hop_ratio: complex, twist: TwistConfig, pot: PotentialCoeffs,
                  sizes: Sequence[int], k=DISCOVERY_K) -> dict:
    """Hilbert-Schmidt norm of B_k against the truncation radius."""
    norms = []
    for N in sizes:
        Bk = assemble_Bk(hop_ratio, k, twist, pot, Truncation(N))
        norms.append(float(np.linalg.norm(Bk.data)))
    diffs = [abs(norms[i + 1] - norms[i]) for i in range(len(norms) - 1)]
    return {"sizes": list(sizes), "hs_norm": norms, "differences": diffs}


__all__ = [
    "DISCOVERY_K",
    "SWEEP_HEADER",
    "MagicParameter",
    "offset_k_grid",
    "effective_alpha",
    "assemble_Bk",
    "bk_eigenvalues",
    "cluster_alphas",
    "is_canonical",
    "magic_from_Bk",
    "verify_magic",
    "multiplicity",
    "discover",
    "sweep",
    "sweep_csv_rows",
    "assemble_tbg",
    "bilayer_magic",
    "symmetry_closure",
    "hs_norm_study",
]
