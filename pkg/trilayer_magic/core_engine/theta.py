# trilayer_magic/core_engine/theta.py
"""
Theta function with zeros at Z + omega Z,

    theta(zeta) = -sum_n exp(pi i (n+1/2)^2 omega + 2 pi i (n+1/2)(zeta + 1/2)),

the multipliers F_k, G_k built from it, Weierstrass functions of
lattices lambda (Z + omega Z), and the theta function construction of
flat-band Bloch functions.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..config import MAGIC_TOL
from ..errors import KernelRejectedError
from .fourier_ops import (
    Basis,
    Truncation,
    analyze_grid,
    as_alpha_pair,
    as_rect_k,
    assemble_D,
    synthesize_grid,
    synthesize_position,
    y_grid,
)
from .lattice import TwistConfig, rect_to_k, z_from_y
from .potential import PotentialCoeffs
from .utils import OMEGA, SQRT3

logger = logging.getLogger(__name__)

# Terms kept on each side of the dominant index
THETA_HALF_WIDTH = 25
THETA_TERM_FLOOR = 1e-16
THETA_MAX_TERMS = 200

# z = GAMMA3_SCALE * zeta maps Z + omega Z onto Gamma_3
GAMMA3_SCALE = 4j * np.pi * OMEGA / 3

POLE_RADIUS = 1e-8


@dataclass
class ThetaValue:
    value: complex
    terms_used: int


# --- Helper functions ---
def _center(zeta) -> np.ndarray:
    """Index n whose term dominates: n + 1/2 close to -2 Im(zeta)/sqrt3."""
    return np.floor(-2 * np.imag(zeta) / SQRT3)


def _terms(zeta, order: int = 0) -> np.ndarray:
    """Series terms (with the k-th derivative factor) on the window around the dominant index."""
    zeta = np.asarray(zeta, dtype=complex)
    offsets = np.arange(-THETA_HALF_WIDTH, THETA_HALF_WIDTH + 1)
    x = (_center(zeta)[..., np.newaxis] + offsets) + 0.5
    z = zeta[..., np.newaxis]
    terms = -np.exp(np.pi * 1j * x ** 2 * OMEGA + 2j * np.pi * x * (z + 0.5))
    if order:
        terms = terms * (2j * np.pi * x) ** order
    return terms


def theta1(zeta):
    """theta(zeta) for scalar or array input."""
    values = _terms(zeta).sum(axis=-1)
    return complex(values) if np.ndim(values) == 0 else values


def theta_value(zeta: complex) -> ThetaValue:
    """Scalar theta summed outward from the dominant index until terms drop below 1e-16."""
    zeta = complex(zeta)
    center = int(_center(zeta))
    total, used = 0j, 0
    scale = 0.0

    def term(n):
        x = n + 0.5
        return -np.exp(np.pi * 1j * x ** 2 * OMEGA + 2j * np.pi * x * (zeta + 0.5))

    for step in range(THETA_MAX_TERMS // 2):
        pair = [term(center + step)] if step == 0 else [term(center + step), term(center - step)]
        for t in pair:
            total += t
            used += 1
        scale = max(scale, max(abs(t) for t in pair))
        if step > 2 and max(abs(t) for t in pair) < THETA_TERM_FLOOR * scale:
            break
    return ThetaValue(value=complex(total), terms_used=used)


def theta_derivatives(u, order: int) -> np.ndarray:
    """[theta(u), theta'(u), ..., theta^(order)(u)], stacked on the first axis."""
    return np.stack([_terms(u, j).sum(axis=-1) for j in range(order + 1)])


def log_derivatives(u, order: int) -> np.ndarray:
    """[phi(u), phi'(u), ..., phi^(order-1)(u)] for phi = (log theta)'."""
    derivs = theta_derivatives(u, order)
    a = np.array([derivs[k] / math.factorial(k) for k in range(order + 1)])
    b = np.zeros_like(a)
    for k in range(1, order + 1):
        acc = k * a[k]
        for j in range(1, k):
            acc = acc - j * b[j] * a[k - j]
        b[k] = acc / (k * a[0])
    return np.array([math.factorial(j + 1) * b[j + 1] for j in range(order)])


def _zeta_linear_coefficient() -> complex:
    """-theta'''(0) / (3 theta'(0)): removes the linear part of phi at the origin."""
    d = theta_derivatives(0j, 3)
    return complex(-d[3] / (3 * d[1]))


def lattice_distance(z, scale: complex = GAMMA3_SCALE):
    """Distance from z to the lattice scale (Z + omega Z)."""
    u = np.asarray(z, dtype=complex) / scale
    # u = s + t omega with s, t real
    t = u.imag / OMEGA.imag
    s = u.real - t * OMEGA.real
    ds, dt = s - np.round(s), t - np.round(t)
    return np.abs((ds + dt * OMEGA) * scale)


def weierstrass_zeta(z, scale: complex = GAMMA3_SCALE, derivative: int = 0):
    """
    Weierstrass zeta of the lattice scale (Z + omega Z), or its derivative
    of the given order, through theta log-derivatives.
    """
    z = np.asarray(z, dtype=complex)
    u = z / scale
    phi = log_derivatives(u, derivative + 1)[derivative]
    c = _zeta_linear_coefficient()
    if derivative == 0:
        value = phi + c * u
    elif derivative == 1:
        value = phi + c
    else:
        value = phi
    out = value / scale ** (derivative + 1)
    return complex(out) if out.ndim == 0 else out


def weierstrass_p(z, scale: complex = GAMMA3_SCALE, with_flag: bool = False):
    """(wp(z), wp'(z)); with_flag adds whether z is within 1e-8 of a pole."""
    value = -weierstrass_zeta(z, scale, 1)
    deriv = -weierstrass_zeta(z, scale, 2)
    if with_flag:
        return value, deriv, np.asarray(lattice_distance(z, scale) < POLE_RADIUS)
    return value, deriv


# --- Multipliers ---
def _quotient(z, k):
    zeta = np.asarray(z, dtype=complex) / GAMMA3_SCALE
    return theta1(zeta + k / (SQRT3 * OMEGA)) / theta1(zeta)


def F_k(z, k: complex):
    """Gamma_3-periodic, (2 Dzb + k) F_k = 0, simple pole at Gamma_3 (F_0 = 1)."""
    z = np.asarray(z, dtype=complex)
    k = complex(k)
    if k == 0:
        return np.ones_like(z) if z.ndim else 1.0 + 0j
    out = np.exp(-0.5j * k * (np.conj(z) + OMEGA * z)) * _quotient(z, k)
    return complex(out) if np.ndim(out) == 0 else out


def G_k(z, k: complex):
    """2 Dzb G_k = 0 and G_k(z + a) = e^{i<a, k>} G_k(z)."""
    z = np.asarray(z, dtype=complex)
    k = complex(k)
    out = np.exp(0.5j * (np.conj(k) - OMEGA * k) * z) * _quotient(z, k)
    return complex(out) if np.ndim(out) == 0 else out


def tau(k: complex, z):
    """Multiplication by e^{i<z, k>}; tau(k) F_k = G_k."""
    return np.exp(1j * np.real(np.asarray(z, dtype=complex) * np.conj(complex(k))))


def multiplier_e(a: Tuple[int, int], k: complex) -> complex:
    """e_a(k) for a = sqrt3 (omega^2 a1 - omega a2) in Gamma_3^*; F_{k+a} = tau(a) F_k / e_a(k)."""
    a1, a2 = a
    sign = -1.0 if (a1 - a2) % 2 else 1.0
    return sign * np.exp(np.pi * 1j * a1 ** 2 * OMEGA + 2j * np.pi * a1 * complex(k) / (SQRT3 * OMEGA))


def dual_shift(a: Tuple[int, int]) -> Tuple[int, int]:
    """Rectangular Floquet shift of a in Gamma_3^*."""
    return 3 * a[0], 3 * a[1]


# --- Flat-band construction ---
@dataclass
class BlochResult:
    vector: np.ndarray
    basis: Basis
    residual: float
    k: Tuple[float, float]


def _grid_size(basis: Basis, minimum: int = 128) -> int:
    extent = max(int(np.max(np.abs(basis.mode_array(c)))) for c in range(basis.n_components))
    M = minimum
    while M <= 4 * extent:
        M *= 2
    return M


def bloch_from_kernel(u: np.ndarray, basis: Basis, z_star: complex, k_target, k_prime,
                      alpha, twist: TwistConfig, pot: PotentialCoeffs, truncation: Truncation,
                      tol: float = MAGIC_TOL, grid: Optional[int] = None) -> BlochResult:
    """
    F_{k - k'}(z - z_*) u(z), re-projected onto the basis, and the residual
    |(D(alpha) + k) w| / |w| in physical units. u must be a kernel element
    of D(alpha) + k' on the translation sector 0 that vanishes at z_*.
    """
    k_target, k_prime = as_rect_k(k_target), as_rect_k(k_prime)
    kappa = rect_to_k(k_target[0] - k_prime[0], k_target[1] - k_prime[1])
    u = np.asarray(u, dtype=complex)

    if kappa != 0:
        M = grid or _grid_size(basis)
        values = synthesize_grid(u, basis, M)
        sup = float(np.max(np.abs(values)))
        at_star = float(np.max(np.abs(synthesize_position(u, basis, np.array([z_star]))[:, 0])))
        if at_star > tol * sup:
            raise KernelRejectedError(f"kernel function does not vanish at z_*={z_star}: "
                                      f"|u(z_*)|/|u| = {at_star / sup:.3e}")
        Y1, Y2 = y_grid(M)
        mult = F_k(z_from_y(Y1, Y2) - z_star, kappa)
        w = analyze_grid(values * mult[np.newaxis, :, :], basis)
    else:
        w = u.copy()

    D = assemble_D(as_alpha_pair(alpha), k_target, twist, pot, truncation, sector=0)
    if D.basis != basis:
        raise KernelRejectedError("kernel vector basis does not match the truncation")
    residual = float(np.linalg.norm(D.data @ w) / (np.linalg.norm(w) * D.scale))
    logger.info("theta construction at k=%s: residual %.3e", k_target, residual)
    return BlochResult(vector=w, basis=basis, residual=residual, k=k_target)


def frame_values(u: np.ndarray, basis: Basis, z_star: complex, kappa: complex, Y1, Y2,
                 base_values: Optional[np.ndarray] = None) -> np.ndarray:
    """Grid values of F_kappa(z - z_*) u(z); base_values caches u on the grid."""
    z = z_from_y(Y1, Y2)
    values = base_values if base_values is not None else synthesize_position(u, basis, z)
    return values * F_k(z - z_star, kappa)[np.newaxis, ...]


def gramian_check(u: np.ndarray, basis: Basis, z_star: complex, kappa: complex,
                  a: Tuple[int, int] = (1, 0), grid: int = 40) -> dict:
    """
    log g(kappa + a) - log g(kappa) against -2 log|e_a(kappa)|, with g the
    squared norm of F_kappa(z - z_*) u over one cell.
    """
    t = (np.arange(grid) + 0.5) / grid * 2 * np.pi
    Y1, Y2 = np.meshgrid(t, t, indexing="ij")
    base = synthesize_position(u, basis, z_from_y(Y1, Y2))
    shift = rect_to_k(*dual_shift(a))
    g0 = float(np.mean(np.sum(np.abs(frame_values(u, basis, z_star, kappa, Y1, Y2, base)) ** 2, axis=0)))
    g1 = float(np.mean(np.sum(np.abs(frame_values(u, basis, z_star, kappa + shift, Y1, Y2, base)) ** 2, axis=0)))
    lhs = np.log(g1) - np.log(g0)
    rhs = -2 * np.log(abs(multiplier_e(a, kappa)))
    return {"lhs": float(lhs), "rhs": float(rhs), "residual": float(abs(lhs - rhs)),
            "passed": bool(abs(lhs - rhs) < 1e-8)}


__all__ = [
    "GAMMA3_SCALE",
    "ThetaValue",
    "theta1",
    "theta_value",
    "theta_derivatives",
    "log_derivatives",
    "lattice_distance",
    "weierstrass_zeta",
    "weierstrass_p",
    "F_k",
    "G_k",
    "tau",
    "multiplier_e",
    "dual_shift",
    "BlochResult",
    "bloch_from_kernel",
    "frame_values",
    "gramian_check",
]
