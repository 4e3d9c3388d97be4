# trilayer_magic/core_engine/bands.py
"""
Band structures, protected states, the Wronskian, band touching and zeros
of kernel functions. Hopping pairs here are in operator orientation
(see birman_schwinger.effective_alpha for flipped trilayers).
"""
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize

from ..config import BAND_GRID, MAGIC_TOL
from ..errors import BandTouchError
from .fourier_ops import (
    HEX,
    Basis,
    Truncation,
    as_alpha_pair,
    as_rect_k,
    assemble_antichiral,
    assemble_D,
    assemble_H,
    sector_kernel,
    synthesize_position,
)
from .lattice import TwistConfig, rect_to_k, stacking_point, y_from_z, z_from_y
from .potential import PotentialCoeffs
from .utils import parallel_map

logger = logging.getLogger(__name__)

CELL = 2 * np.pi / 3
ZERO_GRID = 48
JIGGLE = ((0.0, 0.0), (0.137, 0.291), (0.419, 0.073), (0.251, 0.367))


@dataclass
class BandGrid:
    ks: List[Tuple[float, float]]
    bands: np.ndarray
    metadata: Dict = field(default_factory=dict)

    @property
    def j_max(self) -> int:
        return self.bands.shape[1] if self.bands.ndim == 2 else 0

    def header(self) -> List[str]:
        return ["k_re", "k_im"] + [f"E{j + 1}" for j in range(self.j_max)]

    def csv_rows(self) -> List[list]:
        rows = []
        for (k1, k2), energies in zip(self.ks, self.bands):
            k = rect_to_k(k1, k2)
            rows.append([k.real, k.imag] + list(energies))
        return rows

    def to_dict(self) -> dict:
        return {"metadata": self.metadata, "k": [list(k) for k in self.ks], "bands": self.bands.tolist()}


@dataclass
class WronskianResult:
    value: complex
    degenerate: bool
    sector_svals: Dict[int, List[float]]

    @property
    def modulus(self) -> float:
        return abs(self.value)


@dataclass
class KernelFunction:
    vector: np.ndarray
    basis: Basis
    sigma: float
    translation_class: Optional[int]
    rotation_weight: Optional[int]
    k: Tuple[float, float] = (0.0, 0.0)


@dataclass
class ZeroLocation:
    z: complex
    order: int
    residual: float
    label: Optional[str] = None


# --- Helper functions ---
def default_k_grid(n: int = BAND_GRID, twist: Optional[TwistConfig] = None) -> List[Tuple[float, float]]:
    """n x n nodes i*3/n over [0, 3)^2, with the protected points added when they are not nodes."""
    ks = [(i * 3.0 / n, j * 3.0 / n) for i in range(n) for j in range(n)]
    extra = twist.protected_points() if twist is not None else [(0, 0), (1, 1), (2, 2)]
    for c1, c2 in extra:
        point = (float(c1 % 3), float(c2 % 3))
        if not any(abs(a - point[0]) < 1e-12 and abs(b - point[1]) < 1e-12 for a, b in ks):
            ks.append(point)
    return ks


def fix_phase(vec: np.ndarray) -> np.ndarray:
    """Unit norm, largest-magnitude entry real positive."""
    vec = np.asarray(vec, dtype=complex)
    norm = np.linalg.norm(vec)
    if norm == 0:
        return vec
    vec = vec / norm
    pivot = vec[int(np.argmax(np.abs(vec)))]
    return vec * (abs(pivot) / pivot)


def _energies_at(k, alpha, alpha_tilde, twist, pot_u, pot_v, truncation, j_max, sector):
    t12, t23 = as_alpha_pair(alpha_tilde)
    if t12 == 0 and t23 == 0:
        D = assemble_D(alpha, k, twist, pot_u, truncation, sector=sector)
        return D.singular_values()[:j_max]
    H = assemble_H(alpha, alpha_tilde, k, twist, pot_u, pot_v, truncation, sector=sector)
    evals = np.sort(linalg.eigvalsh(H.data)) / H.scale
    return evals[evals >= -1e-12][:j_max]


def band_structure(alpha, alpha_tilde, twist: TwistConfig, pot_u: PotentialCoeffs, pot_v: Optional[PotentialCoeffs],
                   k_grid: Optional[Sequence] = None, j_max: int = 6, truncation: Truncation = Truncation(12),
                   sector: Optional[int] = 0, workers: int = 1, progress: bool = False) -> BandGrid:
    """
    E_j(k) >= 0 at each k: singular values of D(alpha) + k in the chiral case,
    nonnegative eigenvalues of H_k otherwise. sector=None works on the full
    box, i.e. over Gamma instead of Gamma_3, and folds every band nine times.
    """
    ks = [as_rect_k(k) for k in (k_grid if k_grid is not None else default_k_grid(BAND_GRID, twist))]
    func = partial(_energies_at, alpha=alpha, alpha_tilde=alpha_tilde, twist=twist, pot_u=pot_u,
                   pot_v=pot_v, truncation=truncation, j_max=j_max, sector=sector)
    energies = parallel_map(func, ks, workers=workers, desc="bands", progress=progress)
    width = min(len(e) for e in energies) if energies else 0
    bands = np.array([e[:width] for e in energies]).reshape(len(ks), width)
    metadata = {
        "alpha": as_alpha_pair(alpha),
        "alpha_tilde": as_alpha_pair(alpha_tilde),
        "twist": twist.to_dict(),
        "N": truncation.N,
        "cell": "Gamma_3" if sector is not None else "Gamma (bands folded 9x)",
    }
    return BandGrid(ks=ks, bands=bands, metadata=metadata)


def _hex(truncation: Truncation) -> Truncation:
    return truncation if truncation.shape == HEX else Truncation(truncation.N, HEX)


def _sector_multiplicities(twist: TwistConfig) -> Dict[int, int]:
    """How many of the protected classes p, 0, -q fall into each sector."""
    counts: Dict[int, int] = {}
    for c in (twist.p % 3, 0, (-twist.q) % 3):
        counts[c] = counts.get(c, 0) + 1
    return counts


def protected_states(alpha, twist: TwistConfig, pot: PotentialCoeffs, truncation: Truncation,
                     tol: float = MAGIC_TOL) -> dict:
    """Kernel dimensions of D(alpha) on L^2_{r,0} for r in {p, 0, -q} (k = 0, hexagonal modes)."""
    hexagon = _hex(truncation)
    dims, svals = {}, {}
    for r in twist.distinct_classes:
        D = assemble_D(alpha, (0.0, 0.0), twist, pot, hexagon, sector=r)
        s, _ = sector_kernel(D, twist, None, 0, count=6)
        dims[r] = int(np.sum(s < tol))
        svals[r] = s.tolist()
    expected = _sector_multiplicities(twist)
    reasons = [f"sector {r}: kernel dimension {dims[r]} < {m}" for r, m in expected.items() if dims[r] < m]
    return {
        "case": twist.case_tag,
        "dims": dims,
        "expected_min": expected,
        "singular_values": svals,
        "passed": not reasons,
        "reasons": reasons,
    }


def wronskian(alpha, twist: TwistConfig, pot: PotentialCoeffs, truncation: Truncation,
              tol: float = MAGIC_TOL) -> WronskianResult:
    """det of the protected states of the sectors p, 0, -q evaluated at z_S."""
    hexagon = _hex(truncation)
    zs = stacking_point()
    columns, degenerate, svals = [], False, {}
    for r, m in _sector_multiplicities(twist).items():
        D = assemble_D(alpha, (0.0, 0.0), twist, pot, hexagon, sector=r)
        s, vecs = sector_kernel(D, twist, None, 0, count=m + 1)
        svals[r] = s.tolist()
        if len(s) > m and s[m] < 10 * tol:
            degenerate = True
            logger.warning("sector %d kernel is ambiguous: singular values %s", r, s)
        for i in range(min(m, vecs.shape[1])):
            vec = fix_phase(vecs[:, i])
            columns.append(synthesize_position(vec, D.basis, np.array([zs]))[:, 0])
    if len(columns) < 3:
        degenerate = True
        return WronskianResult(value=0j, degenerate=True, sector_svals=svals)
    return WronskianResult(value=complex(np.linalg.det(np.column_stack(columns[:3]))),
                           degenerate=degenerate, sector_svals=svals)


def _wronskian_modulus(t, hop_ratio, twist, pot, truncation, tol):
    return wronskian((t, t * hop_ratio), twist, pot, truncation, tol).modulus


def wronskian_scan(alphas: Sequence[float], hop_ratio: complex, twist: TwistConfig, pot: PotentialCoeffs,
                   truncation: Truncation, tol: float = MAGIC_TOL, workers: int = 1,
                   progress: bool = False) -> List[Tuple[float, float]]:
    """|W| along alpha12 = t, alpha23 = t * hop_ratio."""
    func = partial(_wronskian_modulus, hop_ratio=complex(hop_ratio), twist=twist, pot=pot,
                   truncation=truncation, tol=tol)
    values = parallel_map(func, list(alphas), workers=workers, desc="wronskian", progress=progress)
    return [(float(t), float(w)) for t, w in zip(alphas, values)]


def band_touch_locator(alpha, twist: TwistConfig, pot: PotentialCoeffs, truncation: Truncation,
                       tol: float = MAGIC_TOL) -> dict:
    """The unique protected point where E2 vanishes at a simple magic alpha."""
    gaps = {}
    for point in twist.protected_points():
        D = assemble_D(alpha, point, twist, pot, truncation, sector=0)
        s = D.singular_values()[:3]
        gaps[point] = float(s[1])
        logger.info("protected point %s: E1=%.3e E2=%.3e", point, s[0], s[1])
    touching = [pt for pt, gap in gaps.items() if gap < tol]
    if len(touching) != 1:
        raise BandTouchError(
            f"expected one touching point, found {len(touching)}: gaps {gaps}; "
            "alpha may not be simple or N too small")
    k0 = touching[0]
    return {
        "k0": k0,
        "k0_complex": rect_to_k(*k0),
        "index": twist.protected_points().index(k0),
        "gaps": {str(pt): gap for pt, gap in gaps.items()},
    }


def kernel_function(alpha, twist: TwistConfig, pot: PotentialCoeffs, truncation: Truncation,
                    translation_class: int = 0, rotation_weight: Optional[int] = 0,
                    k=(0.0, 0.0)) -> KernelFunction:
    """
    Smallest singular vector of D(alpha) + k on a sector. At k = 0 the
    rotation sector is taken on the hexagonal modes; elsewhere only the
    translation sector applies.
    """
    k = as_rect_k(k)
    if rotation_weight is not None and k == (0.0, 0.0):
        trunc = _hex(truncation)
    else:
        trunc, rotation_weight = truncation, None
    D = assemble_D(alpha, k, twist, pot, trunc, sector=translation_class)
    s, vecs = sector_kernel(D, twist, None, rotation_weight, count=1)
    return KernelFunction(vector=fix_phase(vecs[:, 0]), basis=D.basis, sigma=float(s[0]),
                          translation_class=translation_class, rotation_weight=rotation_weight, k=k)


# --- Zeros ---
def _label_point(z: complex, tol: float = 1e-3) -> Optional[str]:
    zs = stacking_point()
    for name, w in (("0", 0j), ("+z_S", zs), ("-z_S", -zs)):
        y1, y2 = y_from_z(complex(z) - w)
        d1 = (y1 / CELL) - np.round(y1 / CELL)
        d2 = (y2 / CELL) - np.round(y2 / CELL)
        if np.hypot(d1, d2) * CELL < tol:
            return name
    return None


def _winding(values: np.ndarray) -> np.ndarray:
    """Winding number around each grid square of a (G+1) x (G+1) node array."""
    def step(a, b):
        return np.angle(b / a)
    total = (step(values[:-1, :-1], values[1:, :-1]) + step(values[1:, :-1], values[1:, 1:])
             + step(values[1:, 1:], values[:-1, 1:]) + step(values[:-1, 1:], values[:-1, :-1]))
    return np.rint(total / (2 * np.pi)).astype(int)


def zero_locator(vector: np.ndarray, basis: Basis, grid: int = ZERO_GRID, confirm: float = 1e-5,
                 component: Optional[int] = None) -> List[ZeroLocation]:
    """
    Zeros over C/Gamma_3 from phase winding of the dominant component on
    grid squares, polished with a root solve and confirmed on all
    components. Orders are winding numbers. If a node lands on a zero the
    grid is shifted and the count repeated.
    """
    t = np.arange(grid + 1) / grid * CELL
    for shift in JIGGLE:
        Y1, Y2 = np.meshgrid(t + shift[0] * CELL / grid, t + shift[1] * CELL / grid, indexing="ij")
        values = synthesize_position(vector, basis, z_from_y(Y1, Y2))
        sup = float(np.max(np.abs(values)))
        if sup == 0:
            return []
        comp = component if component is not None else int(np.argmax(np.max(np.abs(values), axis=(1, 2))))
        f = values[comp]
        if np.min(np.abs(f)) > 1e-9 * sup:
            break
        logger.debug("grid node within 1e-9 of a zero; shifting grid by %s", shift)
    else:
        logger.warning("zero search could not avoid grid nodes; results may be incomplete")

    wind = _winding(f)

    def residual(y):
        v = synthesize_position(vector, basis, z_from_y(np.array([y[0]]), np.array([y[1]])))[comp, 0]
        return [v.real, v.imag]

    zeros: List[ZeroLocation] = []
    for i, j in zip(*np.nonzero(wind)):
        y0 = np.array([(Y1[i, j] + Y1[i + 1, j + 1]) / 2, (Y2[i, j] + Y2[i + 1, j + 1]) / 2])
        sol = optimize.root(residual, y0, method="hybr", tol=1e-14)
        y = np.mod(sol.x if sol.success else y0, CELL)
        z = complex(z_from_y(y[0], y[1]))
        res = float(np.max(np.abs(synthesize_position(vector, basis, np.array([z]))[:, 0]))) / sup
        for zero in zeros:
            dy = np.subtract(y_from_z(zero.z), y)
            dy = (dy + CELL / 2) % CELL - CELL / 2
            if np.hypot(*dy) < 1e-6:
                zero.order += int(wind[i, j])
                break
        else:
            zeros.append(ZeroLocation(z=z, order=int(wind[i, j]), residual=res))
    confirmed = [zero for zero in zeros if zero.order != 0 and zero.residual < confirm]
    for zero in confirmed:
        zero.label = _label_point(zero.z)
    dropped = len(zeros) - len(confirmed)
    if dropped:
        logger.debug("%d winding candidates were zeros of one component only", dropped)
    confirmed.sort(key=lambda zero: (-abs(zero.order), zero.z.real, zero.z.imag))
    return confirmed


def _antichiral_smin(k, alpha_tilde, twist, pot_v, truncation):
    return float(assemble_antichiral(alpha_tilde, k, twist, pot_v, truncation).singular_values()[0])


def antichiral_gap_scan(alpha_tilde, twist: TwistConfig, pot_v: PotentialCoeffs,
                        k_grid: Optional[Sequence] = None, truncation: Truncation = Truncation(10),
                        workers: int = 1) -> dict:
    """min over the grid of sigma_min(D_ac,k), with its argmin."""
    ks = [as_rect_k(k) for k in (k_grid if k_grid is not None
                                 else [((i + 0.5) * 3 / 11, (j + 0.5) * 3 / 11) for i in range(11) for j in range(11)])]
    values = parallel_map(partial(_antichiral_smin, alpha_tilde=alpha_tilde, twist=twist, pot_v=pot_v,
                                  truncation=truncation), ks, workers=workers, desc="antichiral")
    i = int(np.argmin(values))
    return {"min": float(values[i]), "argmin": ks[i], "values": [float(v) for v in values]}


__all__ = [
    "BandGrid",
    "WronskianResult",
    "KernelFunction",
    "ZeroLocation",
    "default_k_grid",
    "fix_phase",
    "band_structure",
    "protected_states",
    "wronskian",
    "wronskian_scan",
    "band_touch_locator",
    "kernel_function",
    "zero_locator",
    "antichiral_gap_scan",
]
