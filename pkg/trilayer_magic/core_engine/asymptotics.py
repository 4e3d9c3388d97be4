# trilayer_magic/core_engine/asymptotics.py
"""
Small-angle asymptotics: exponential squeezing of the lowest bands along a
ray alpha = t beta, and the bracket field 8 |V| |Im(conj(V)^{1/2} dV/dz)| of

    V(z) = b12^2 U(pz) U(-pz) + b23^2 U(pt z) U(-pt z).
"""
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import parse_fraction
from ..errors import ConfigError
from .birman_schwinger import DISCOVERY_K
from .fourier_ops import Truncation, as_alpha_pair, assemble_D
from .lattice import TwistConfig, z_from_y
from .potential import PotentialCoeffs, eval_dz, eval_potential
from .utils import parallel_map

logger = logging.getLogger(__name__)

NOISE_FLOOR = 1e-14
FIT_START = 3.0
MONOTONE_SLACK = 0.01
NONDEGENERACY_TOL = 1e-10


@dataclass
class SqueezeReport:
    alphas: List[float]
    energies: np.ndarray
    slope: Optional[float] = None
    intercept: Optional[float] = None
    r_squared: Optional[float] = None
    fit_range: Tuple[float, float] = (0.0, 0.0)
    excluded: List[Dict] = field(default_factory=list)
    monotone: bool = True

    @property
    def rate(self) -> Optional[float]:
        return None if self.slope is None else -self.slope

    def header(self) -> List[str]:
        return ["alpha_abs"] + [f"E{j + 1}" for j in range(self.energies.shape[1])]

    def csv_rows(self) -> List[list]:
        return [[a] + list(e) for a, e in zip(self.alphas, self.energies)]

    def to_dict(self) -> dict:
        return {
            "alphas": self.alphas,
            "energies": self.energies.tolist(),
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "fit_range": list(self.fit_range),
            "excluded": self.excluded,
            "monotone": self.monotone,
        }


# --- Helper functions ---
def _bands_at(t, beta, k, twist, pot, truncation, j_max):
    b12, b23 = beta
    D = assemble_D((t * b12, t * b23), k, twist, pot, truncation, sector=0)
    return D.singular_values()[:j_max]


def _fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    ss_res = float(np.sum((y - predicted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r_squared


def squeeze_experiment(beta, twist: TwistConfig, pot: PotentialCoeffs, t_values: Sequence[float],
                       k=DISCOVERY_K, j_max: int = 6, truncation: Truncation = Truncation(12),
                       fit_start: float = FIT_START, workers: int = 1, progress: bool = False) -> SqueezeReport:
    """
    Lowest j_max singular values of D(t beta) + k for every t, and a least
    squares line through log E1 against |alpha| for |alpha| >= fit_start.
    Values under the double precision floor are left out of the fit.
    """
    beta = as_alpha_pair(beta)
    norm = float(np.hypot(abs(beta[0]), abs(beta[1]))) or 1.0
    ts = sorted(float(t) for t in t_values)
    energies = parallel_map(partial(_bands_at, beta=beta, k=k, twist=twist, pot=pot,
                                    truncation=truncation, j_max=j_max),
                            ts, workers=workers, desc="squeeze", progress=progress)
    alphas = [t * norm for t in ts]
    energies = np.array(energies)

    report = SqueezeReport(alphas=alphas, energies=energies)
    xs, ys = [], []
    for a, e in zip(alphas, energies):
        if a < fit_start:
            report.excluded.append({"alpha_abs": a, "reason": "pre-asymptotic"})
        elif e[0] <= NOISE_FLOOR:
            report.excluded.append({"alpha_abs": a, "reason": "below noise floor"})
        else:
            xs.append(a)
            ys.append(np.log(e[0]))
    if len(xs) >= 2:
        report.slope, report.intercept, report.r_squared = _fit(np.array(xs), np.array(ys))
        report.fit_range = (min(xs), max(xs))
        e1 = np.exp(ys)
        report.monotone = bool(np.all(e1[1:] <= e1[:-1] * (1 + MONOTONE_SLACK)))
        logger.info("squeezing fit: slope %.4f, R^2 %.5f over %d samples", report.slope, report.r_squared, len(xs))
    else:
        logger.warning("only %d samples in the fit window; no fit", len(xs))
    return report


def band_count_below(report: SqueezeReport, rate: Optional[float] = None, c0: float = 1.0) -> List[Tuple[float, int]]:
    """
    Number of E_j under c0 exp(-rate |alpha|) at each sample. The default rate
    is half the fitted one, so the envelope sits above E1 and collects the
    bands squeezed alongside it.
    """
    if rate is None:
        if report.rate is None:
            raise ConfigError("no fitted rate to build the envelope from")
        rate = report.rate / 2
    out = []
    for a, e in zip(report.alphas, report.energies):
        envelope = c0 * np.exp(-rate * a)
        out.append((a, int(np.sum(e <= envelope))))
    return out


def _commensurate(p: int, ratio) -> int:
    pr = p * parse_fraction(ratio)
    if pr.denominator != 1:
        raise ConfigError(f"p * r = {pr} is not an integer")
    return int(pr)


def bracket_potential(beta, p: int, ratio, pot: PotentialCoeffs, z):
    """(V(z), dV/dz) on an array of points."""
    b12, b23 = as_alpha_pair(beta)
    pr = _commensurate(p, ratio)
    z = np.asarray(z, dtype=complex)
    value = np.zeros(z.shape, dtype=complex)
    deriv = np.zeros(z.shape, dtype=complex)
    for weight, s in ((b12 ** 2, p), (b23 ** 2, pr)):
        up, um = eval_potential(pot, z, s), eval_potential(pot, z, -s)
        value = value + weight * up * um
        deriv = deriv + weight * (eval_dz(pot, z, s) * um + up * eval_dz(pot, z, -s))
    return value, deriv


def bracket_field(beta, p: int, ratio, pot: PotentialCoeffs, z, branch: int = 1):
    """8 |V| |Im(conj(V)^{1/2} dV/dz)|; branch=-1 takes the other square root."""
    value, deriv = bracket_potential(beta, p, ratio, pot, z)
    root = branch * np.sqrt(np.conj(value))
    out = 8 * np.abs(value) * np.abs(np.imag(root * deriv))
    return out if np.ndim(out) else float(out)


def bracket_grid(beta, p: int, ratio, pot: PotentialCoeffs, n: int = 64) -> List[Tuple[float, float, float]]:
    """(Re z, Im z, field) over an n x n grid of the Gamma cell."""
    t = np.arange(n) / n * 2 * np.pi
    Y1, Y2 = np.meshgrid(t, t, indexing="ij")
    z = z_from_y(Y1, Y2)
    values = bracket_field(beta, p, ratio, pot, z)
    return [(float(w.real), float(w.imag), float(v)) for w, v in zip(z.ravel(), np.ravel(values))]


def nondegeneracy_check(pot: PotentialCoeffs) -> Tuple[float, bool]:
    """Re dU/dz at the origin; the squeezing argument needs it nonzero."""
    value = float(np.real(eval_dz(pot, 0j)))
    return value, abs(value) > NONDEGENERACY_TOL


__all__ = [
    "SqueezeReport",
    "squeeze_experiment",
    "band_count_below",
    "bracket_potential",
    "bracket_field",
    "bracket_grid",
    "nondegeneracy_check",
]
