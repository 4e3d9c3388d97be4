# trilayer_magic/core_engine/lattice.py
"""
Lattices of the trilayer model and the arithmetic of the twist ratio.

    Gamma    = 4 pi i (omega Z + omega^2 Z)        moire lattice
    Gamma_3  = Gamma / 3                           a = (4 pi i/3)(omega a1 + omega^2 a2)
    Gamma^*  = (1/sqrt 3)(omega^2 k1 - omega k2)   dual lattice, k1, k2 integers
    Gamma_3^* = 3 Gamma^*

Operators are assembled in rectangular coordinates y = (y1, y2) with
z = 2i(omega y1 + omega^2 y2). Gamma is 2 pi Z^2 in y and Gamma_3 is
(2 pi / 3) Z^2. Floquet parameters use the same rectangular form,
sqrt(3) k = omega^2 k1 - omega k2, so Gamma^* is Z^2 and the Brillouin zone
of C / Gamma_3^* is [0, 3)^2.
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Sequence, Tuple, Union

import numpy as np

from ..config import parse_fraction
from ..errors import ConfigError
from .utils import OMEGA, SQRT3

logger = logging.getLogger(__name__)

CASE_I = "CaseI"
CASE_II = "CaseII"

# Hopping directions of the standard potential, closed under sigma
HOP_DIRECTIONS = ((1, 1), (-2, 1), (1, -2))


@dataclass(frozen=True)
class CellIndex:
    """a = (4 pi i / 3)(omega a1 + omega^2 a2) in Gamma_3."""
    a1: int
    a2: int

    def embed(self) -> complex:
        return complex(4j * np.pi / 3 * (OMEGA * self.a1 + OMEGA ** 2 * self.a2))

    def rect(self) -> Tuple[float, float]:
        """The same translation in rectangular y coordinates."""
        return (2 * np.pi * self.a1 / 3, 2 * np.pi * self.a2 / 3)


@dataclass(frozen=True)
class DualIndex:
    """k = (1/sqrt 3)(omega^2 k1 - omega k2) in Gamma^*."""
    k1: int
    k2: int

    def embed(self) -> complex:
        return complex((OMEGA ** 2 * self.k1 - OMEGA * self.k2) / SQRT3)

    @property
    def in_gamma3_dual(self) -> bool:
        return self.k1 % 3 == 0 and self.k2 % 3 == 0


@dataclass(frozen=True)
class TwistConfig:
    """
    Twist ratio zeta2/zeta1 = 3^j r1/r2 with the derived integers

        j > 0:  (p, q) = (r2, 0)
        j <= 0: (p, q) = (3^{-j} r2, r1)

    and p_tilde = p * zeta2/zeta1. When p = 0 mod 3 the trilayer is
    flipped (ratio inverted, hopping roles swapped) so that the stored
    p is never divisible by 3.
    """
    zeta1: float
    ratio: Fraction
    j: int
    r1: int
    r2: int
    p: int
    q: int
    p_tilde: int
    flipped: bool
    case_tag: str
    input_ratio: Fraction

    @property
    def distinct_classes(self) -> List[int]:
        """Residues of the protected sectors p, 0, -q (mod 3), deduplicated."""
        seen = []
        for r in (self.p % 3, 0, (-self.q) % 3):
            if r not in seen:
                seen.append(r)
        return seen

    def protected_points(self) -> List[Tuple[int, int]]:
        """Rectangular Floquet points of -ip, 0, iq reduced to [0, 3)^2, deduplicated."""
        points = []
        for c in (self.p % 3, 0, (-self.q) % 3):
            pt = (c, c)
            if pt not in points:
                points.append(pt)
        return points

    def effective_hop_ratio(self, hop_ratio: complex) -> complex:
        """alpha23/alpha12 in the orientation the operators are built in."""
        if not self.flipped:
            return complex(hop_ratio)
        if hop_ratio == 0:
            raise ConfigError("a flipped trilayer needs a nonzero hopping ratio")
        return 1.0 / complex(hop_ratio)

    def original_alpha(self, alpha12_eff: complex, hop_ratio: complex) -> Tuple[complex, complex]:
        """Map an effective alpha12 back to (alpha12, alpha23) of the input orientation."""
        if not self.flipped:
            return complex(alpha12_eff), complex(alpha12_eff) * complex(hop_ratio)
        alpha23 = complex(alpha12_eff)
        return alpha23 / complex(hop_ratio), alpha23

    def to_dict(self) -> dict:
        return {
            "zeta1": self.zeta1,
            "ratio": str(self.ratio),
            "input_ratio": str(self.input_ratio),
            "j": self.j,
            "r1": self.r1,
            "r2": self.r2,
            "p": self.p,
            "q": self.q,
            "p_tilde": self.p_tilde,
            "flipped": self.flipped,
            "case": self.case_tag,
        }


# --- Twist arithmetic ---
def parse_ratio(ratio) -> Tuple[int, int, int]:
    """Write a nonzero rational as 3^j r1/r2 with r1, r2 prime to 3 and r2 > 0."""
    value = parse_fraction(ratio)
    if value == 0:
        raise ConfigError("twist ratio zeta2/zeta1 must be nonzero")
    num, den = value.numerator, value.denominator
    j = 0
    while num % 3 == 0:
        num //= 3
        j += 1
    while den % 3 == 0:
        den //= 3
        j -= 1
    return j, num, den


def _classify(p: int, q: int) -> str:
    residues = {(-q) % 3, p % 3, 0}
    return CASE_II if len(residues) == 3 else CASE_I


def _raw_pq(j: int, r1: int, r2: int) -> Tuple[int, int]:
    if j > 0:
        return r2, 0
    return 3 ** (-j) * r2, r1


def derive_config(zeta1: float, ratio) -> TwistConfig:
    value = parse_fraction(ratio)
    j, r1, r2 = parse_ratio(value)
    p, q = _raw_pq(j, r1, r2)
    flipped = False
    zeta1_eff = float(zeta1)
    stored_ratio = value
    if p % 3 == 0:
        # view the stack from the other side: zeta1' = -zeta2, zeta2' = -zeta1
        stored_ratio = 1 / value
        zeta1_eff = -float(zeta1) * float(value)
        j, r1, r2 = parse_ratio(stored_ratio)
        p, q = _raw_pq(j, r1, r2)
        flipped = True
        logger.info("ratio %s has p divisible by 3; flipped to %s", value, stored_ratio)
    p_tilde_exact = p * stored_ratio
    if p_tilde_exact.denominator != 1:
        raise ConfigError(f"p * ratio is not an integer for ratio {stored_ratio}")
    p_tilde = int(p_tilde_exact)
    return TwistConfig(
        zeta1=zeta1_eff,
        ratio=stored_ratio,
        j=j,
        r1=r1,
        r2=r2,
        p=p,
        q=q,
        p_tilde=p_tilde,
        flipped=flipped,
        case_tag=_classify(p, q),
        input_ratio=value,
    )


# --- Embeddings ---
def embed(index: Union[CellIndex, DualIndex]) -> complex:
    return index.embed()


def stacking_point() -> complex:
    """z_S = (gamma2 - gamma1)/3 for the generators gamma_i of Gamma_3."""
    g1 = CellIndex(1, 0).embed()
    g2 = CellIndex(0, 1).embed()
    return (g2 - g1) / 3


def stacking_points() -> Tuple[complex, complex, complex]:
    zs = stacking_point()
    return 0j, zs, -zs


def sigma(m: int, n: int) -> Tuple[int, int]:
    return -(m + n), m


def sigma_orbit(m: int, n: int) -> List[Tuple[int, int]]:
    first = (m, n)
    second = sigma(*first)
    return [first, second, sigma(*second)]


# --- Coordinate changes ---
def y_from_z(z):
    z = np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    y1 = -y / 2 - x / (2 * SQRT3)
    y2 = -y / 2 + x / (2 * SQRT3)
    return y1, y2


def z_from_y(y1, y2):
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    return 2j * (OMEGA * y1 + OMEGA ** 2 * y2)


def rect_to_k(k1: float, k2: float) -> complex:
    return complex((OMEGA ** 2 * k1 - OMEGA * k2) / SQRT3)


def k_to_rect(k: complex) -> Tuple[float, float]:
    k = complex(k)
    k1 = -k.imag - SQRT3 * k.real
    k2 = -k.imag + SQRT3 * k.real
    return float(k1), float(k2)


def reduce_mod_gamma3(z):
    """Representative of z in the cell y in [0, 2 pi/3)^2."""
    period = 2 * np.pi / 3
    y1, y2 = y_from_z(z)
    return z_from_y(np.mod(y1, period), np.mod(y2, period))


def equivalent_mod_gamma3(z: complex, w: complex, tol: float = 1e-8) -> bool:
    period = 2 * np.pi / 3
    y1, y2 = y_from_z(complex(z) - complex(w))
    d1 = (y1 / period) - np.round(y1 / period)
    d2 = (y2 / period) - np.round(y2 / period)
    return bool(math.hypot(float(d1), float(d2)) * period < tol)


def distance_to_integer_lattice(k1: float, k2: float) -> float:
    """Distance of a rectangular Floquet point to Gamma^* (which is Z^2 here)."""
    return math.hypot(k1 - round(k1), k2 - round(k2))


def hop_directions() -> Sequence[Tuple[int, int]]:
    return HOP_DIRECTIONS


__all__ = [
    "CASE_I",
    "CASE_II",
    "CellIndex",
    "DualIndex",
    "TwistConfig",
    "parse_ratio",
    "derive_config",
    "embed",
    "stacking_point",
    "stacking_points",
    "sigma",
    "sigma_orbit",
    "y_from_z",
    "z_from_y",
    "rect_to_k",
    "k_to_rect",
    "reduce_mod_gamma3",
    "equivalent_mod_gamma3",
    "distance_to_integer_lattice",
    "hop_directions",
]
