import os
import json
import hashlib
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from typing import Dict, Optional

from dotenv import load_dotenv, dotenv_values

from .errors import ConfigError

load_dotenv()

BASE_DIR = os.path.dirname(os.path.abspath(__file__))
DATA_DIR = os.path.join(os.path.dirname(BASE_DIR), "data")
POTENTIAL_DIR = os.path.join(DATA_DIR, "potentials")

OUTPUT_DIR = os.getenv("TRILAYER_OUTPUT_DIR", os.path.join(os.getcwd(), "runs"))
WORKERS = int(os.getenv("TRILAYER_WORKERS", "1"))
LOG_LEVEL = os.getenv("TRILAYER_LOG_LEVEL", "INFO")

# Truncation radii
DEFAULT_N_DISCOVERY = 16
DEFAULT_N_VERIFY = 24

# Tolerances
EXCLUSION_RADIUS = 1e-6
MAGIC_TOL = 1e-6
NULLSPACE_REL = 1e-10
POLE_TOL = 1e-8

BAND_GRID = 15
CSV_DIGITS = 12

# Run-config keys and the RunConfig attribute each one sets
CONFIG_KEYS = {
    "twist.zeta1": "zeta1",
    "twist.ratio": "ratio",
    "hop.ratio": "hop_ratio",
    "potential.u": "potential_u",
    "potential.v": "potential_v",
    "trunc.n": "n",
    "tol.magic": "tol",
    "grid.n": "grid_n",
    "out.dir": "out_dir",
    "workers": "workers",
}


@dataclass
class RunConfig:
    """Resolved settings of one CLI run. Written next to every output."""
    zeta1: float = 1.0
    ratio: str = "1"
    hop_ratio: complex = 1.0
    potential_u: str = "U0"
    potential_v: str = "V0"
    n: int = DEFAULT_N_DISCOVERY
    tol: float = MAGIC_TOL
    grid_n: int = BAND_GRID
    out_dir: str = OUTPUT_DIR
    workers: int = WORKERS
    extra: Dict[str, str] = field(default_factory=dict)

    @property
    def ratio_fraction(self) -> Fraction:
        return parse_fraction(self.ratio)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["hop_ratio"] = [self.hop_ratio.real, self.hop_ratio.imag]
        return data

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# --- Helper functions ---
def parse_fraction(text) -> Fraction:
    """Parse '7/4', '3', '-1' or a Fraction into an exact rational."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    try:
        value = Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a rational number: {text!r}") from exc
    return value


def parse_complex(text) -> complex:
    if isinstance(text, (int, float, complex)):
        return complex(text)
    try:
        return complex(str(text).replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise ConfigError(f"not a complex number: {text!r}") from exc


def _coerce(attr: str, raw):
    if attr in ("zeta1", "tol"):
        return float(raw)
    if attr in ("n", "grid_n", "workers"):
        value = int(raw)
        if value <= 0:
            raise ConfigError(f"{attr} must be positive, got {value}")
        return value
    if attr == "hop_ratio":
        return parse_complex(raw)
    if attr == "ratio":
        parse_fraction(raw)
        return str(raw).strip()
    return str(raw)


def load_run_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """
    Build a RunConfig from a flat key=value file (dotted keys such as
    `trunc.n=24`) and CLI overrides. Overrides use the same dotted keys
    and win over file values. Unknown keys raise ConfigError.
    """
    values = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        values.update({k: v for k, v in dotenv_values(path).items() if v is not None})
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    cfg = RunConfig()
    for key, raw in values.items():
        if key.startswith("extra."):
            cfg.extra[key[len("extra."):]] = str(raw)
            continue
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key: {key}")
        try:
            setattr(cfg, CONFIG_KEYS[key], _coerce(CONFIG_KEYS[key], raw))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc

    if cfg.ratio_fraction == 0:
        raise ConfigError("twist ratio must be nonzero")
    if cfg.zeta1 == 0:
        raise ConfigError("zeta1 must be nonzero")
    return cfg


__all__ = [
    "BASE_DIR",
    "DATA_DIR",
    "POTENTIAL_DIR",
    "OUTPUT_DIR",
    "WORKERS",
    "LOG_LEVEL",
    "DEFAULT_N_DISCOVERY",
    "DEFAULT_N_VERIFY",
    "EXCLUSION_RADIUS",
    "MAGIC_TOL",
    "NULLSPACE_REL",
    "POLE_TOL",
    "BAND_GRID",
    "CSV_DIGITS",
    "RunConfig",
    "parse_fraction",
    "parse_complex",
    "load_run_config",
]
