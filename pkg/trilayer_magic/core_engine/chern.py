# trilayer_magic/core_engine/chern.py
"""
Chern number of the flat-band bundle from link variables on a k-grid.

Frames are either the m smallest right singular vectors of D(alpha) + k
on the translation sector 0, or (m = 1) the theta multiplied kernel
function F_k(z - z_*) u(z) sampled in position space.
"""
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg

from ..errors import ChernFrameError, NotMagicError
from .bands import kernel_function, zero_locator
from .fourier_ops import HEX, Basis, Truncation, assemble_D, synthesize_position
from .lattice import TwistConfig, rect_to_k, z_from_y
from .potential import PotentialCoeffs
from .theta import frame_values
from .utils import parallel_map

logger = logging.getLogger(__name__)

# sigma_m above this is not a kernel frame; sigma_{m+1} below FRAME_GAP makes it ambiguous
FRAME_TOL = 1e-4
FRAME_GAP = 1e-6
RETRY_OFFSETS = (0.5, 0.37, 0.21)
THETA_GRID = 32


@dataclass
class ChernResult:
    alpha: complex
    multiplicity: int
    grid: int
    raw_curvature_sum: float
    chern: int
    drift: float
    method: str = "kernel"
    offset: float = 0.5
    notes: Dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "multiplicity": self.multiplicity,
            "grid": self.grid,
            "raw_curvature_sum": self.raw_curvature_sum,
            "chern": self.chern,
            "drift": self.drift,
            "method": self.method,
            "offset": self.offset,
            "notes": self.notes,
        }


# --- Helper functions ---
def _grid_points(n: int, offset: float) -> List[Tuple[float, float]]:
    step = 3.0 / n
    return [((i + offset) * step, (j + offset) * step) for i in range(n) for j in range(n)]


def kernel_frame(k, alpha, twist: TwistConfig, pot: PotentialCoeffs, truncation: Truncation, m: int):
    """(frame with m orthonormal columns, singular values) of D(alpha) + k on sector 0."""
    D = assemble_D(alpha, k, twist, pot, truncation, sector=0)
    _, s, vh = linalg.svd(D.data)
    s = s[::-1] / D.scale
    frame = vh[::-1][:m].conj().T
    return frame, s[:m + 1]


def shift_frame(frame: np.ndarray, basis: Basis, a: Tuple[int, int]) -> np.ndarray:
    """Frame at k + a from the frame at k: w_x = v_{x+a}, zero when x + a leaves the box."""
    out = np.zeros_like(frame)
    for row, (c, mode) in enumerate(basis.entries()):
        src = basis.index(c, (mode[0] + a[0], mode[1] + a[1]))
        if src is not None:
            out[row] = frame[src]
    return out


def link(left: np.ndarray, right: np.ndarray) -> complex:
    overlap = np.linalg.det(left.conj().T @ right)
    if abs(overlap) < 1e-12:
        raise ChernFrameError(f"link variable vanishes (|det| = {abs(overlap):.3e})")
    return complex(overlap / abs(overlap))


def plaquette_sum(frames: Dict[Tuple[int, int], np.ndarray], n: int) -> float:
    """Sum of plaquette phases over an (n+1) x (n+1) node table, in a fixed row-major order."""
    total = 0.0
    for i in range(n):
        for j in range(n):
            u1 = link(frames[(i, j)], frames[(i + 1, j)])
            u2 = link(frames[(i + 1, j)], frames[(i + 1, j + 1)])
            u3 = link(frames[(i, j + 1)], frames[(i + 1, j + 1)])
            u4 = link(frames[(i, j)], frames[(i, j + 1)])
            total += float(np.angle(u1 * u2 * np.conj(u3) * np.conj(u4)))
    return total


def _kernel_frames(alpha, twist, pot, truncation, m, n, offset, workers):
    points = _grid_points(n, offset)
    results = parallel_map(partial(kernel_frame, alpha=alpha, twist=twist, pot=pot, truncation=truncation, m=m),
                           points, workers=workers, desc="chern frames")
    frames = {}
    basis = assemble_D(alpha, points[0], twist, pot, truncation, sector=0).basis
    for idx, (frame, s) in enumerate(results):
        if s[m - 1] > FRAME_TOL:
            raise ChernFrameError(f"sigma_{m}={s[m - 1]:.3e} at k={points[idx]} is not a kernel frame")
        if len(s) > m and s[m] < FRAME_GAP:
            raise ChernFrameError(f"kernel dimension exceeds {m} at k={points[idx]} (sigma_{m + 1}={s[m]:.3e})")
        frames[(idx // n, idx % n)] = frame
    # closing row and column through the Floquet shift by 3
    for i in range(n):
        frames[(n, i)] = shift_frame(frames[(0, i)], basis, (3, 0))
        frames[(i, n)] = shift_frame(frames[(i, 0)], basis, (0, 3))
    frames[(n, n)] = shift_frame(frames[(0, 0)], basis, (3, 3))
    return frames


def chern_number(alpha, multiplicity: int, twist: TwistConfig, pot: PotentialCoeffs,
                 truncation: Truncation, grid_size: int = 24, offset: float = 0.5,
                 workers: int = 1) -> ChernResult:
    """
    c1 = -(1/2 pi) sum of plaquette phases over [0, 3)^2. The grid sits half
    a cell off the nodes so the touching points are never sampled; a frame
    failure retries with other offsets before giving up.
    """
    if multiplicity < 1:
        raise NotMagicError(f"alpha={alpha} has no flat band (multiplicity {multiplicity})")
    offsets = [offset] + [o for o in RETRY_OFFSETS if o != offset]
    last_error = None
    for trial in offsets:
        try:
            frames = _kernel_frames(alpha, twist, pot, truncation, multiplicity, grid_size, trial, workers)
        except ChernFrameError as exc:
            logger.warning("frame failure at offset %.2f: %s", trial, exc)
            last_error = exc
            continue
        raw = -plaquette_sum(frames, grid_size) / (2 * np.pi)
        chern = int(np.rint(raw))
        result = ChernResult(alpha=complex(alpha[0] if isinstance(alpha, tuple) else alpha),
                             multiplicity=multiplicity, grid=grid_size, raw_curvature_sum=float(raw),
                             chern=chern, drift=float(abs(raw - chern)), offset=trial,
                             notes={"case": twist.case_tag})
        logger.info("Chern number %d (drift %.2e) on a %dx%d grid", chern, result.drift, grid_size, grid_size)
        return result
    raise ChernFrameError(f"no usable kernel frames at offsets {offsets}: {last_error}")


def _pick_zero(zeros) -> Tuple[complex, str]:
    for zero in zeros:
        if zero.label in ("+z_S", "-z_S"):
            return zero.z, zero.label
    if not zeros:
        raise ChernFrameError("kernel function has no zeros to build theta frames from")
    return zeros[0].z, zeros[0].label or "generic"


def theta_frame_chern(alpha, twist: TwistConfig, pot: PotentialCoeffs, truncation: Truncation,
                      grid_size: int = 24, offset: float = 0.5, z_star: Optional[complex] = None,
                      sample_grid: int = THETA_GRID) -> ChernResult:
    """
    Chern number of the simple flat band from frames F_k(z - z_*) u(z), u the
    protected kernel function at k = 0. The nodes cover the closed square
    [0, 3]^2, so the result carries a drift that measures the grid error.
    """
    hex_trunc = Truncation(truncation.N, HEX)
    kernel = kernel_function(alpha, twist, pot, hex_trunc, 0, 0)
    label = "given"
    if z_star is None:
        z_star, label = _pick_zero(zero_locator(kernel.vector, kernel.basis))
    logger.info("theta frames built on the zero %s (%s)", z_star, label)

    t = (np.arange(sample_grid) + 0.5) / sample_grid * 2 * np.pi
    Y1, Y2 = np.meshgrid(t, t, indexing="ij")
    base = synthesize_position(kernel.vector, kernel.basis, z_from_y(Y1, Y2))

    frames = {}
    step = 3.0 / grid_size
    for i in range(grid_size + 1):
        for j in range(grid_size + 1):
            kappa = rect_to_k((i + offset) * step, (j + offset) * step)
            values = frame_values(kernel.vector, kernel.basis, z_star, kappa, Y1, Y2, base).ravel()
            norm = np.linalg.norm(values)
            if norm == 0 or not np.isfinite(norm):
                raise ChernFrameError(f"theta frame degenerate at node ({i}, {j})")
            frames[(i, j)] = (values / norm)[:, np.newaxis]
    raw = -plaquette_sum(frames, grid_size) / (2 * np.pi)
    chern = int(np.rint(raw))
    return ChernResult(alpha=complex(alpha[0] if isinstance(alpha, tuple) else alpha), multiplicity=1,
                       grid=grid_size, raw_curvature_sum=float(raw), chern=chern,
                       drift=float(abs(raw - chern)), method="theta", offset=offset,
                       notes={"z_star": z_star, "zero": label, "case": twist.case_tag})


__all__ = [
    "ChernResult",
    "kernel_frame",
    "shift_frame",
    "link",
    "plaquette_sum",
    "chern_number",
    "theta_frame_chern",
]
