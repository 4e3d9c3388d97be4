# trilayer_magic/core_engine/traces.py
"""
Traces of the Birman-Schwinger operator.

tr(B_k^l) is a sum over closed hopping words pi of length l. Each word
contributes coeff(pi) * T_pi(K) with

    T_pi(K) = sum_{lambda in 3Z[omega]} prod_j 1 / (lambda + c_j),
    c_j = omega^2 - omega + K + gamma(s_j),   gamma(a, b) = omega^2 a - omega b,

where s_j are the partial displacements of the word and K = omega^2 k1 - omega k2.
Lattice sums are evaluated with the residue theorem against the
Weierstrass zeta function of 3Z[omega].
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import POLE_TOL, parse_fraction
from ..errors import ConfigError, PoleClusterError
from .birman_schwinger import DISCOVERY_K, MagicParameter, assemble_Bk
from .fourier_ops import OperatorMatrix, Truncation, as_rect_k
from .lattice import TwistConfig, derive_config
from .potential import PotentialCoeffs, standard_potential
from .theta import weierstrass_zeta
from .utils import OMEGA, OMEGA_BAR, SQRT3, parallel_map

logger = logging.getLogger(__name__)

Mode = Tuple[int, int]

STEP_P = "p"
STEP_PT = "pt"

# residue lattice 3Z[omega]
LATTICE_SCALE = 3.0
MU = OMEGA ** 2 - OMEGA

CONTOUR_POINTS = 64
RATIONAL_TOL = 1e-9

# The (1,1)-class matrix carries the whole-space trace; one sector holds 1/9 of it
SECTOR_COUNT = 9
CLOSED_FORM_TOL = 1e-8


@dataclass(frozen=True)
class HopStep:
    """
    One factor L V L V of B_k. For kind "p", (alpha, beta) is the mode
    of V_+(p) and -(gamma, delta) the mode of V_-(p); for kind "pt",
    -(alpha, beta) is the mode of V_-(pt) and (gamma, delta) that of V_+(pt).
    """
    kind: str
    first: Mode
    second: Mode

    @property
    def modes(self) -> Tuple[Mode, Mode]:
        if self.kind == STEP_P:
            return self.first, (-self.second[0], -self.second[1])
        return (-self.first[0], -self.first[1]), self.second


@dataclass(frozen=True)
class AdmissibleTuple:
    steps: Tuple[HopStep, ...]
    p: int
    p_tilde: int

    @property
    def ell(self) -> int:
        return len(self.steps)

    def weight(self, i: int) -> int:
        return self.p if self.steps[i].kind == STEP_P else self.p_tilde

    @property
    def pairs(self) -> List[Tuple[Mode, Mode]]:
        return [(s.first, s.second) for s in self.steps]

    @property
    def s_pi(self) -> int:
        return sum(1 for s in self.steps if s.kind == STEP_PT)

    @property
    def m_pi(self) -> int:
        return sum(2 * (s.second[0] + s.first[1]) for s in self.steps) // 3

    def displacements(self) -> List[Mode]:
        """Partial sums after each of the 2l multiplications; the last one is (0, 0)."""
        out = []
        a = b = 0
        for i, step in enumerate(self.steps):
            n = self.weight(i)
            for mode in (step.first, step.second):
                a += n * mode[0]
                b += n * mode[1]
                out.append((a, b))
        return out

    def prefix_sums(self) -> List[Mode]:
        """Position after each complete step; closure means the last entry is (0, 0)."""
        return self.displacements()[1::2]

    def coefficient(self, pot: PotentialCoeffs, hop_ratio: complex = 1.0) -> complex:
        table = dict(pot.rect_modes(1))
        value = complex(3 ** self.ell) * complex(hop_ratio) ** (2 * self.s_pi)
        for step in self.steps:
            u1, u2 = step.modes
            value *= table[u1] * table[u2]
        return value

    def rotated(self) -> "AdmissibleTuple":
        """Image under sigma(m, n) = (-(m+n), m) applied to every couple."""
        def rot(mode):
            return -(mode[0] + mode[1]), mode[0]
        steps = tuple(HopStep(s.kind, rot(s.first), rot(s.second)) for s in self.steps)
        return AdmissibleTuple(steps=steps, p=self.p, p_tilde=self.p_tilde)


# --- Helper functions ---
def gamma(mode: Mode) -> complex:
    return complex(OMEGA ** 2 * mode[0] - OMEGA * mode[1])


def k_symbol(k) -> complex:
    k1, k2 = as_rect_k(k)
    return complex(OMEGA ** 2 * k1 - OMEGA * k2)


def _step_options(pot: PotentialCoeffs) -> List[HopStep]:
    modes = [mode for mode, _ in pot.rect_modes(1)]
    options = []
    for kind in (STEP_P, STEP_PT):
        for u1, u2 in product(modes, modes):
            if kind == STEP_P:
                options.append(HopStep(kind, u1, (-u2[0], -u2[1])))
            else:
                options.append(HopStep(kind, (-u1[0], -u1[1]), u2))
    return options


def _net(step: HopStep, p: int, p_tilde: int) -> Mode:
    n = p if step.kind == STEP_P else p_tilde
    return n * (step.first[0] + step.second[0]), n * (step.first[1] + step.second[1])


@lru_cache(maxsize=None)
def _zeta_derivative(c: complex, order: int) -> complex:
    return complex(weierstrass_zeta(c, LATTICE_SCALE, order))


def lattice_power_sum(c: complex, m: int) -> complex:
    """sum_{lambda in 3Z[omega]} (lambda + c)^{-m}, regularised through zeta for m <= 2."""
    return (-1) ** (m - 1) / math.factorial(m - 1) * _zeta_derivative(complex(c), m - 1)


# --- Traces ---
def numeric_trace(Bk: OperatorMatrix, ell: int, per_sector: bool = True) -> complex:
    """tr(B_k^l), per sector unless per_sector=False."""
    if ell < 2:
        raise ConfigError(f"trace power must be at least 2, got {ell}")
    value = complex(np.trace(np.linalg.matrix_power(Bk.data, ell)))
    return value / SECTOR_COUNT if per_sector else value


def trace_convergence(hop_ratio: complex, twist: TwistConfig, pot: PotentialCoeffs, sizes: Sequence[int],
                      ell: int = 2, k=DISCOVERY_K, workers: int = 1) -> List[Tuple[int, complex]]:
    """(N, tr B_k^l) for every truncation radius in sizes."""
    def one(N):
        return N, numeric_trace(assemble_Bk(hop_ratio, k, twist, pot, Truncation(N)), ell)
    return parallel_map(one, list(sizes), workers=workers, desc="trace")


def _shape_factor(h) -> Fraction:
    h = parse_fraction(h)
    if h == 0:
        raise ConfigError("twist ratio h must be nonzero")
    return h


def _real_if_real(value: complex):
    value = complex(value)
    return value.real if value.imag == 0 else value


def _generic_shape(r2: complex, h) -> complex:
    hf = float(h)
    return r2 ** 2 / hf ** 2 + 3 * r2 / (1 - hf + hf ** 2) + 1


def closed_form_S4(hop_ratio, h, p: int = 1, zeta1: float = 1.0, rescaled: bool = True):
    """
    tr(B_k^2) per sector; the fourth power sum of the magic parameters is
    SECTOR_COUNT times this. With rescaled=False it carries the factor (p/zeta1)^4.
    Real for real hop_ratio, complex otherwise.
    """
    h = _shape_factor(h)
    r2 = complex(hop_ratio) ** 2
    base = 4 * np.pi / (9 * SQRT3 * p ** 2)
    if h == -1:
        shape = (1 + r2) ** 2
    elif h == 1:
        shape = 1 - r2 + r2 ** 2
    else:
        shape = _generic_shape(r2, h)
    value = base * shape
    if not rescaled:
        value *= p ** 4 / zeta1 ** 4
    return _real_if_real(value)


def enumerate_Theta(ell: int, p: int, p_tilde: int,
                    pot: Optional[PotentialCoeffs] = None) -> List[AdmissibleTuple]:
    """Closed admissible words of length ell, found depth first with reachability pruning."""
    if ell < 2:
        raise ConfigError(f"word length must be at least 2, got {ell}")
    options = _step_options(pot or standard_potential())
    nets = [_net(s, p, p_tilde) for s in options]
    reach = max(max(abs(a), abs(b)) for a, b in nets) if nets else 0
    found: List[AdmissibleTuple] = []

    def walk(prefix, a, b):
        left = ell - len(prefix)
        if left == 0:
            if a == 0 and b == 0:
                found.append(AdmissibleTuple(steps=tuple(prefix), p=p, p_tilde=p_tilde))
            return
        if max(abs(a), abs(b)) > left * reach:
            return
        for step, (da, db) in zip(options, nets):
            walk(prefix + [step], a + da, b + db)

    walk([], 0, 0)
    logger.info("enumerated %d closed words of length %d for p=%d, pt=%d", len(found), ell, p, p_tilde)
    return found


def brute_force_Theta(ell: int, p: int, p_tilde: int, pot: Optional[PotentialCoeffs] = None) -> List[AdmissibleTuple]:
    options = _step_options(pot or standard_potential())
    out = []
    for steps in product(options, repeat=ell):
        a = sum(_net(s, p, p_tilde)[0] for s in steps)
        b = sum(_net(s, p, p_tilde)[1] for s in steps)
        if a == 0 and b == 0:
            out.append(AdmissibleTuple(steps=tuple(steps), p=p, p_tilde=p_tilde))
    return out


def _pole_groups(shifts: Sequence[Mode], K: complex) -> Dict[Mode, Tuple[complex, int]]:
    groups: Dict[Mode, Tuple[complex, int]] = {}
    for s in shifts:
        c, m = groups.get(s, (MU + K + gamma(s), 0))
        groups[s] = (c, m + 1)
    return groups


def word_lattice_sum(word: AdmissibleTuple, K: complex) -> complex:
    """T_pi(K) by residues: simple poles in closed form, repeated poles by a circular contour."""
    groups = list(_pole_groups(word.displacements(), K).values())
    centers = np.array([c for c, _ in groups])

    def f(lam):
        out = np.ones_like(lam)
        for c, m in groups:
            out = out / (lam + c) ** m
        return out

    total = 0j
    for g, (c_g, m_g) in enumerate(groups):
        others = [(c, m) for i, (c, m) in enumerate(groups) if i != g]
        if m_g == 1:
            coeff = 1.0 + 0j
            for c, m in others:
                coeff /= (c - c_g) ** m
            total += coeff * lattice_power_sum(c_g, 1)
            continue
        sep = np.min(np.abs(np.delete(centers, g) - c_g)) if others else 1.0
        radius = 0.5 * float(sep)
        if radius < POLE_TOL:
            raise PoleClusterError(f"poles at {c_g} and a neighbour closer than {2 * POLE_TOL:.1e}; "
                                   f"multiplicities {[m for _, m in groups]}")
        theta = 2 * np.pi * np.arange(CONTOUR_POINTS) / CONTOUR_POINTS
        circle = radius * np.exp(1j * theta)
        values = f(-c_g + circle)
        logger.debug("contour radius %.3e for a pole of order %d", radius, m_g)
        for m in range(1, m_g + 1):
            coeff = complex(np.mean(values * circle ** m))
            total += coeff * lattice_power_sum(c_g, m)
    return total


def combinatorial_trace(ell: int, p: int, p_tilde: int, hop_ratio: complex = 1.0,
                        pot: Optional[PotentialCoeffs] = None, k=DISCOVERY_K,
                        words: Optional[Sequence[AdmissibleTuple]] = None, per_sector: bool = True) -> complex:
    """tr(B_k^l) as a finite sum of lattice sums over closed words, per sector unless per_sector=False."""
    pot = pot or standard_potential()
    words = words if words is not None else enumerate_Theta(ell, p, p_tilde, pot)
    K = k_symbol(k)
    total = 0j
    for word in words:
        if hop_ratio == 0 and word.s_pi:
            continue
        total += word.coefficient(pot, hop_ratio) * word_lattice_sum(word, K)
    if ell > 2:
        logger.info("combinatorial trace for l=%d has no closed form to compare against", ell)
    return complex(total) / SECTOR_COUNT if per_sector else complex(total)


def orbit_contribution(word: AdmissibleTuple, k=DISCOVERY_K, pot: Optional[PotentialCoeffs] = None,
                       hop_ratio: complex = 1.0) -> complex:
    """
    Sum over the sigma-orbit of a word using only the word's own lattice
    sum: T_{sigma pi}(K) = omega-bar^{2l} T_pi(omega-bar (mu + K) - mu).
    """
    pot = pot or standard_potential()
    K = k_symbol(k)
    twist = OMEGA_BAR ** (2 * word.ell)
    total = 0j
    image = word
    for i in range(3):
        total += image.coefficient(pot, hop_ratio) * twist ** i * word_lattice_sum(word, K)
        K = OMEGA_BAR * (MU + K) - MU
        image = image.rotated()
    return complex(total)


def rationality_check(tau: complex, max_denominator: int = 1000) -> Tuple[Fraction, float]:
    """Nearest rational q with tau = q pi / sqrt3, and the distance to it."""
    x = complex(tau) * SQRT3 / np.pi
    q = Fraction(x.real).limit_denominator(max_denominator)
    return q, float(abs(x - float(q)))


def is_rational_multiple(tau: complex, max_denominator: int = 1000, tol: float = RATIONAL_TOL) -> bool:
    return rationality_check(tau, max_denominator)[1] < tol


def discontinuity_sequence(zeta1: float, zeta2: float, n_max: int = 4, hop_ratio: complex = 1.0) -> List[dict]:
    """
    Rows for zeta2^(n) = (zeta2/zeta1) 3^n/(3^n - 1) zeta1, n = 1..n_max: the
    twist integer p_n, the unrescaled S4 and S4 / p_n^2.
    """
    h = Fraction(zeta2).limit_denominator(10 ** 6) / Fraction(zeta1).limit_denominator(10 ** 6)
    rows = []
    for n in range(1, n_max + 1):
        h_n = h * Fraction(3 ** n, 3 ** n - 1)
        twist = derive_config(zeta1, h_n)
        r = twist.effective_hop_ratio(hop_ratio)
        s4 = closed_form_S4(r, twist.ratio, twist.p, zeta1, rescaled=False)
        rows.append({"n": n, "h": str(h_n), "zeta2": float(h_n) * zeta1, "p": twist.p,
                     "S4": s4, "S4_over_p2": s4 / twist.p ** 2})
    return rows


def discontinuity_limit(zeta1: float, h, hop_ratio: complex = 1.0):
    """Limit of S4 / p_n^2: the h != +-1 branch evaluated at the limiting ratio h."""
    shape = _generic_shape(complex(hop_ratio) ** 2, _shape_factor(h))
    return _real_if_real(4 * np.pi * shape / (9 * SQRT3 * zeta1 ** 4))


def magic_power_sums(magics: Sequence, ell: int = 2) -> complex:
    """
    sum alpha^{-2l} weighted by multiplicity. Lists produced by discovery hold
    both alpha and -alpha for every eigenvalue, so the sum is halved. This is
    the whole-space trace: compare with numeric_trace(..., per_sector=False).
    """
    total = 0j
    for m in magics:
        if isinstance(m, MagicParameter):
            total += m.multiplicity * complex(m.alpha12) ** (-2 * ell)
        else:
            total += complex(m) ** (-2 * ell)
    return total / 2


def partial_sum_profile(magics: Sequence, tau: complex, ell: int = 2) -> List[Tuple[float, complex, float]]:
    """(R, partial sum over |alpha| <= R, |tau - partial|) at every distinct |alpha|."""
    items = sorted(magics, key=lambda m: abs(m.alpha12 if isinstance(m, MagicParameter) else m))
    rows = []
    for i, item in enumerate(items):
        radius = abs(item.alpha12 if isinstance(item, MagicParameter) else item)
        if i + 1 < len(items):
            nxt = items[i + 1]
            if abs(abs(nxt.alpha12 if isinstance(nxt, MagicParameter) else nxt) - radius) < 1e-9:
                continue
        partial_sum = magic_power_sums(items[:i + 1], ell)
        rows.append((float(radius), partial_sum, float(abs(tau - partial_sum))))
    return rows


def trace_report(ell: int, h, hop_ratio: complex, N: Optional[int] = None,
                 k=DISCOVERY_K, pot: Optional[PotentialCoeffs] = None) -> dict:
    """
    Numeric, combinatorial and closed-form values side by side, all per
    sector. closed_form_ratio is combinatorial / closed_form; anything other
    than 1 is flagged through closed_form_agrees instead of rescaled away.
    """
    h = _shape_factor(h)
    pot = pot or standard_potential()
    twist = derive_config(1.0, h)
    report = {"ell": ell, "h_num": h.numerator, "h_den": h.denominator, "r": hop_ratio,
              "p": twist.p, "p_tilde": twist.p_tilde, "N": N,
              "convention": "per_sector", "sector_count": SECTOR_COUNT,
              "numeric": None, "combinatorial": None, "closed_form": None, "q_rational": None,
              "closed_form_ratio": None, "closed_form_agrees": None}
    if N:
        report["numeric"] = numeric_trace(assemble_Bk(hop_ratio, k, twist, pot, Truncation(N)), ell)
    r_eff = twist.effective_hop_ratio(hop_ratio)
    report["combinatorial"] = combinatorial_trace(ell, twist.p, twist.p_tilde, r_eff, pot, k)
    if ell == 2:
        closed = closed_form_S4(r_eff, twist.ratio, twist.p)
        report["closed_form"] = closed
        if closed != 0:
            ratio = complex(report["combinatorial"]) / complex(closed)
            report["closed_form_ratio"] = ratio if abs(ratio.imag) > CLOSED_FORM_TOL else ratio.real
            report["closed_form_agrees"] = bool(abs(ratio - 1) < CLOSED_FORM_TOL)
            if not report["closed_form_agrees"]:
                logger.warning("combinatorial trace is %.6g times the closed form", abs(ratio))
    q, dist = rationality_check(report["combinatorial"])
    report["q_rational"] = str(q)
    report["rational_distance"] = dist
    return report


__all__ = [
    "SECTOR_COUNT",
    "HopStep",
    "AdmissibleTuple",
    "gamma",
    "k_symbol",
    "lattice_power_sum",
    "numeric_trace",
    "trace_convergence",
    "closed_form_S4",
    "enumerate_Theta",
    "brute_force_Theta",
    "word_lattice_sum",
    "combinatorial_trace",
    "orbit_contribution",
    "rationality_check",
    "is_rational_multiple",
    "discontinuity_sequence",
    "discontinuity_limit",
    "magic_power_sums",
    "partial_sum_profile",
    "trace_report",
]
