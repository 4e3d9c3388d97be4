# trilayer_magic/core_engine/potential.py
"""
Finite Fourier tunnelling potentials

    u(z) = sum c_nm exp((i/2)(-sqrt3 (n+m) Re z - (2j + 3(n-m)) Im z))

whose coefficients are closed under the three-cycle
rho(n, m) = (-m, n - m + j) with c_rho(n,m) = omega^ell c_nm.
Translations by a in Gamma_3 act by omega^{j(a1+a2)}, rotation z -> omega z
by omega-bar^ell. The standard potential U0 is (j, ell) = (-1, -1) seeded
with c_00 = 1.
"""
import os
import json
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from ..config import POTENTIAL_DIR
from ..errors import ConfigError, PotentialConsistencyError
from .lattice import CellIndex, TwistConfig, y_from_z
from .utils import OMEGA, SQRT3, halton_points, omega_power

logger = logging.getLogger(__name__)

ORBIT_TOL = 1e-12

Mode = Tuple[int, int]


@dataclass(frozen=True)
class PotentialCoeffs:
    sym_j: int
    sym_ell: int
    coeffs: Dict[Mode, complex] = field(default_factory=dict)
    reflection: bool = False
    label: str = ""

    def __post_init__(self):
        if self.sym_j not in (-1, 0, 1) or self.sym_ell not in (-1, 0, 1):
            raise ConfigError(f"symmetry labels must lie in {{-1,0,1}}: j={self.sym_j}, ell={self.sym_ell}")

    @property
    def is_zero(self) -> bool:
        return all(abs(c) == 0 for c in self.coeffs.values())

    def rect_modes(self, scale: int = 1) -> List[Tuple[Mode, complex]]:
        """Plane waves e^{i(a y1 + b y2)} of u(scale z), as ((a, b), c), in sorted order."""
        out = []
        for (n, m), c in sorted(self.coeffs.items()):
            if c == 0:
                continue
            a = scale * (3 * n + self.sym_j)
            b = scale * (self.sym_j - 3 * m)
            out.append(((a, b), complex(c)))
        return out

    def times(self, factor: complex) -> "PotentialCoeffs":
        return replace(self, coeffs={k: complex(factor) * v for k, v in self.coeffs.items()})


@dataclass(frozen=True)
class GeneralizedPotential:
    """
    Slot potentials of the matrix
        [[W1, U+, X+], [U-, W2, Y+], [X-, Y-, W3]]
    with rotation weight omega in every slot. Missing slots are zero.
    """
    slots: Dict[str, PotentialCoeffs]
    translation_weights: Dict[str, int]

    # matrix position of each slot
    POSITIONS = {
        "W1": (0, 0), "U+": (0, 1), "X+": (0, 2),
        "U-": (1, 0), "W2": (1, 1), "Y+": (1, 2),
        "X-": (2, 0), "Y-": (2, 1), "W3": (2, 2),
    }


# --- Helper functions ---
def orbit_step(n: int, m: int, j: int) -> Mode:
    return -m, n - m + j


def orbit_of(n: int, m: int, j: int) -> List[Mode]:
    first = (n, m)
    second = orbit_step(*first, j)
    third = orbit_step(*second, j)
    if second == first:
        return [first]
    return [first, second, third]


def _gaussian_rational(value) -> float:
    return float(Fraction(str(value)))


def close_symmetry(seed: Dict[Mode, complex], sym_j: int, sym_ell: int,
                   reflection: bool = False, label: str = "",
                   tol: float = ORBIT_TOL) -> PotentialCoeffs:
    """
    Fill each seeded rotation orbit with c_rho(x) = omega^ell c_x.
    Conflicting seeds (or a nonzero fixed point with ell != 0) raise
    PotentialConsistencyError naming the orbit.
    """
    coeffs: Dict[Mode, complex] = {}
    for mode, value in sorted(seed.items()):
        value = complex(value)
        orbit = orbit_of(mode[0], mode[1], sym_j)
        if len(orbit) == 1 and sym_ell % 3 != 0 and abs(value) > tol:
            raise PotentialConsistencyError(orbit, f"fixed mode {mode} must vanish for ell={sym_ell}")
        for i, target in enumerate(orbit):
            forced = value * omega_power(i * sym_ell)
            if target in coeffs and abs(coeffs[target] - forced) > tol:
                raise PotentialConsistencyError(
                    orbit, f"orbit {tuple(orbit)}: seed {mode}={value} forces {target}={forced}, "
                           f"but {coeffs[target]} is already set")
            if target in seed and abs(complex(seed[target]) - forced) > tol:
                raise PotentialConsistencyError(
                    orbit, f"orbit {tuple(orbit)}: seeds {mode} and {target} disagree")
            coeffs[target] = forced
    return PotentialCoeffs(sym_j=sym_j, sym_ell=sym_ell, coeffs=coeffs,
                           reflection=reflection, label=label)


def _exponent(pot: PotentialCoeffs, n: int, m: int, z, scale: int):
    z = scale * np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    return 0.5j * (-SQRT3 * (n + m) * x - (2 * pot.sym_j + 3 * (n - m)) * y)


def eval_potential(pot: PotentialCoeffs, z, scale: int = 1):
    """u(scale * z) by direct summation. Accepts scalars or arrays."""
    z_arr = np.asarray(z, dtype=complex)
    total = np.zeros(z_arr.shape, dtype=complex)
    for (n, m), c in pot.coeffs.items():
        total = total + c * np.exp(_exponent(pot, n, m, z_arr, scale))
    return total if total.shape else complex(total)


def eval_dz(pot: PotentialCoeffs, z, scale: int = 1):
    """Holomorphic derivative d/dz of u(scale * z)."""
    z_arr = np.asarray(z, dtype=complex)
    total = np.zeros(z_arr.shape, dtype=complex)
    for (n, m), c in pot.coeffs.items():
        a = -SQRT3 * (n + m) / 2
        b = -(2 * pot.sym_j + 3 * (n - m)) / 2
        factor = 0.5 * (1j * a + b) * scale
        total = total + c * factor * np.exp(_exponent(pot, n, m, z_arr, scale))
    return total if total.shape else complex(total)


def eval_dzbar(pot: PotentialCoeffs, z, scale: int = 1):
    z_arr = np.asarray(z, dtype=complex)
    total = np.zeros(z_arr.shape, dtype=complex)
    for (n, m), c in pot.coeffs.items():
        a = -SQRT3 * (n + m) / 2
        b = -(2 * pot.sym_j + 3 * (n - m)) / 2
        factor = 0.5 * (1j * a - b) * scale
        total = total + c * factor * np.exp(_exponent(pot, n, m, z_arr, scale))
    return total if total.shape else complex(total)


def eval_rect(pot: PotentialCoeffs, y1, y2, scale: int = 1):
    """Same function evaluated through its rectangular plane waves."""
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    total = np.zeros(np.broadcast(y1, y2).shape, dtype=complex)
    for (a, b), c in pot.rect_modes(scale):
        total = total + c * np.exp(1j * (a * y1 + b * y2))
    return total


def sample_points(count: int = 64, radius: float = 6.0) -> np.ndarray:
    pts = halton_points(count, low=(-radius, -radius), high=(radius, radius))
    return pts[:, 0] + 1j * pts[:, 1]


def validate_symmetries(pot: PotentialCoeffs, scale: int = 1, tolerance: float = 1e-12,
                        samples: int = 64) -> dict:
    """
    Check translation, rotation and (if flagged) reflection weights on
    deterministic sample points. Returns a report; never raises.
    """
    z = sample_points(samples)
    u = eval_potential(pot, z, scale)
    norm = max(1.0, float(np.max(np.abs(u))) if u.size else 1.0)
    residuals = {}

    worst = 0.0
    for a1, a2 in ((1, 0), (0, 1), (1, 1), (-1, 2), (2, -1)):
        a = CellIndex(a1, a2).embed()
        weight = omega_power(pot.sym_j * scale * (a1 + a2))
        shifted = eval_potential(pot, z + a, scale)
        worst = max(worst, float(np.max(np.abs(shifted - weight * u))))
    residuals["translation"] = worst / norm

    rotated = eval_potential(pot, OMEGA * z, scale)
    residuals["rotation"] = float(np.max(np.abs(rotated - omega_power(-pot.sym_ell) * u))) / norm

    if pot.reflection:
        mirrored = eval_potential(pot, np.conj(z), scale)
        residuals["reflection"] = float(np.max(np.abs(np.conj(mirrored) - u))) / norm
    if pot.sym_ell == 0:
        inverted = eval_potential(pot, -z, scale)
        residuals["inversion"] = float(np.max(np.abs(inverted - np.conj(u)))) / norm

    reasons = [f"{name} residual {value:.3e} exceeds {tolerance:.1e}"
               for name, value in residuals.items() if value > tolerance]
    return {
        "label": pot.label,
        "passed": not reasons,
        "residuals": residuals,
        "reasons": reasons,
    }


# --- Loading ---
BUILTIN_POTENTIALS = {
    "U0": {
        "label": "U0", "sym_j": -1, "sym_ell": -1, "reflection": True,
        "entries": [{"n": 0, "m": 0, "re": "1", "im": "0", "omega_power": 0}],
    },
    "V0": {
        "label": "V0", "sym_j": -1, "sym_ell": 0, "reflection": True,
        "entries": [{"n": 0, "m": 0, "re": "1", "im": "0", "omega_power": 0}],
    },
}


def potential_from_dict(data: dict) -> PotentialCoeffs:
    try:
        seed = {}
        for entry in data.get("entries", []):
            if isinstance(entry, dict):
                n, m = int(entry["n"]), int(entry["m"])
                value = complex(_gaussian_rational(entry.get("re", 0)), _gaussian_rational(entry.get("im", 0)))
                value *= omega_power(int(entry.get("omega_power", 0)))
            else:
                n, m, re, im = entry
                n, m = int(n), int(m)
                value = complex(_gaussian_rational(re), _gaussian_rational(im))
            seed[(n, m)] = value
        return close_symmetry(seed, int(data["sym_j"]), int(data["sym_ell"]),
                              reflection=bool(data.get("reflection", False)),
                              label=str(data.get("label", "")))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed potential definition: {exc}") from exc


def load_potential(path: str) -> PotentialCoeffs:
    with open(path, "r") as f:
        data = json.load(f)
    pot = potential_from_dict(data)
    logger.info("loaded potential %s from %s (%d coefficients)", pot.label, path, len(pot.coeffs))
    return pot


def builtin_potential(name: str) -> PotentialCoeffs:
    """Read data/potentials/<name>.json, falling back to the packaged definition."""
    key = name.upper()
    if key not in BUILTIN_POTENTIALS:
        raise ConfigError(f"unknown builtin potential {name!r}")
    path = os.path.join(POTENTIAL_DIR, f"{key.lower()}.json")
    try:
        return load_potential(path)
    except FileNotFoundError:
        return potential_from_dict(BUILTIN_POTENTIALS[key])


def resolve_potential(spec: str) -> PotentialCoeffs:
    """'U0' / 'V0' or a path to a potential definition file."""
    if spec.upper() in BUILTIN_POTENTIALS:
        return builtin_potential(spec)
    if not os.path.exists(spec):
        raise ConfigError(f"potential file not found: {spec}")
    return load_potential(spec)


def standard_potential() -> PotentialCoeffs:
    return builtin_potential("U0")


def reference_v() -> PotentialCoeffs:
    return builtin_potential("V0")


# --- Generalized potentials ---
def _j_for_weight(t: int) -> int:
    """sym_j for a translation weight omega-bar^{t(a1+a2)}."""
    j = (-t) % 3
    return j - 3 if j == 2 else j


def generalized_weights(twist: TwistConfig) -> Dict[str, int]:
    p, pt = twist.p, twist.p_tilde
    return {
        "U+": p, "U-": -p,
        "Y+": pt, "Y-": -pt,
        "W1": 0, "W2": 0, "W3": 0,
        "X+": p + pt, "X-": -(p + pt),
    }


def generalized_potential(twist: TwistConfig, seeds: Optional[Dict[str, Dict[Mode, complex]]] = None,
                          slots: Iterable[str] = ("U+", "U-", "Y+", "Y-"),
                          rng: Optional[np.random.Generator] = None) -> GeneralizedPotential:
    """
    Build the slot potentials. Each slot is closed with rotation weight
    omega (ell = -1) and the sym_j of its translation weight. Without
    explicit seeds a slot gets random Gaussian seeds on two orbits.
    """
    weights = generalized_weights(twist)
    rng = rng or np.random.default_rng(0)
    built = {}
    for name in slots:
        if name not in weights:
            raise ConfigError(f"unknown slot {name!r}")
        j = _j_for_weight(weights[name])
        if seeds and name in seeds:
            seed = seeds[name]
        else:
            seed = {}
            for mode in ((1, 0), (1, 1)):
                if len(orbit_of(*mode, j)) == 3:
                    seed[mode] = complex(rng.normal(), rng.normal())
        built[name] = close_symmetry(seed, j, -1, reflection=False, label=name)
    return GeneralizedPotential(slots=built, translation_weights={k: weights[k] for k in built})


def validate_generalized(gp: GeneralizedPotential, tolerance: float = 1e-12) -> dict:
    """Per-slot symmetry report. Translation weights are checked against the slot's own weight."""
    reports = {}
    for name, pot in gp.slots.items():
        report = validate_symmetries(pot, tolerance=tolerance)
        expected_j = _j_for_weight(gp.translation_weights[name])
        if pot.sym_j != expected_j:
            report["passed"] = False
            report["reasons"].append(f"slot {name} carries j={pot.sym_j}, weight needs j={expected_j}")
        reports[name] = report
    return {
        "passed": all(r["passed"] for r in reports.values()),
        "slots": reports,
    }


__all__ = [
    "PotentialCoeffs",
    "GeneralizedPotential",
    "orbit_step",
    "orbit_of",
    "close_symmetry",
    "eval_potential",
    "eval_dz",
    "eval_dzbar",
    "eval_rect",
    "sample_points",
    "validate_symmetries",
    "potential_from_dict",
    "load_potential",
    "builtin_potential",
    "resolve_potential",
    "standard_potential",
    "reference_v",
    "generalized_weights",
    "generalized_potential",
    "validate_generalized",
]
