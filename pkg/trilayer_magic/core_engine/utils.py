# trilayer_magic/core_engine/utils.py
import os
import csv
import json
import logging
from typing import Callable, Iterable, List, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import qmc
from tqdm import tqdm

from ..config import CSV_DIGITS

logger = logging.getLogger(__name__)

OMEGA = np.exp(2j * np.pi / 3)
OMEGA_BAR = np.conj(OMEGA)
SQRT3 = np.sqrt(3.0)

# Rectangular operators are this factor times the physical ones
RECT_SCALE = SQRT3

# Exact cube roots of unity indexed by exponent mod 3
OMEGA_POWERS = np.array([1.0 + 0.0j, OMEGA, OMEGA ** 2])


# --- Helper functions ---
def omega_power(e) -> complex:
    """omega^e for an integer exponent, without rounding drift."""
    return OMEGA_POWERS[int(e) % 3]


def fmt(x, digits: int = CSV_DIGITS) -> str:
    """Fixed significant-digit formatting so reruns are byte-identical."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (complex, np.complexfloating)) and x.imag != 0:
        im = fmt(abs(x.imag), digits)
        return f"{fmt(x.real, digits)}{'-' if x.imag < 0 else '+'}{im}j"
    value = float(np.real(x))
    if value == 0.0:
        value = 0.0  # drop the sign of negative zero
    return f"{value:.{digits}g}"


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    logger.info("wrote %s", path)
    return path


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(np.real(obj)), "im": float(np.imag(obj))}
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: str, payload: dict) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(to_jsonable(payload), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("wrote %s", path)
    return path


def halton_points(n: int, low=(0.0, 0.0), high=(1.0, 1.0)) -> np.ndarray:
    """Deterministic 2D low-discrepancy sample, shape (n, 2)."""
    sampler = qmc.Halton(d=2, scramble=False)
    sampler.fast_forward(1)  # skip the origin
    pts = sampler.random(n)
    return qmc.scale(pts, low, high)


def parallel_map(func: Callable, items: Sequence, workers: int = 1,
                 desc: str = "", progress: bool = False) -> List:
    """Order-preserving map over items, fanned out with joblib when workers > 1."""
    iterator = tqdm(items, desc=desc, disable=not progress, total=len(items))
    if workers <= 1:
        return [func(item) for item in iterator]
    return Parallel(n_jobs=workers, backend="loky")(delayed(func)(item) for item in iterator)


__all__ = [
    "OMEGA",
    "OMEGA_BAR",
    "SQRT3",
    "RECT_SCALE",
    "OMEGA_POWERS",
    "omega_power",
    "fmt",
    "write_csv",
    "write_json",
    "to_jsonable",
    "halton_points",
    "parallel_map",
]
