# trilayer_magic/errors.py
"""
Exception hierarchy shared by the engine and the command line.

Every error carries the process exit code the CLI should return:
2 for invalid configuration, 3 for a violated numerical contract.
"""


class TrilayerError(Exception):
    exit_code = 1


class ConfigError(TrilayerError):
    """Invalid twist ratio, run configuration or potential file."""
    exit_code = 2


class PotentialConsistencyError(ConfigError):
    """Seed coefficients disagree on one rotation orbit."""

    def __init__(self, orbit, message: str = ""):
        self.orbit = tuple(orbit)
        super().__init__(message or f"conflicting coefficients on orbit {self.orbit}")


class NumericalContractError(TrilayerError):
    exit_code = 3


class FloquetExclusionError(NumericalContractError):
    """Floquet parameter too close to the dual lattice."""


class EigensolveError(NumericalContractError):
    pass


class NotMagicError(NumericalContractError):
    pass


class UnresolvedMultiplicityError(NumericalContractError):
    pass


class BandTouchError(NumericalContractError):
    pass


class PoleClusterError(NumericalContractError):
    pass


class KernelRejectedError(NumericalContractError):
    """Kernel function does not vanish where it is required to."""


class ChernFrameError(NumericalContractError):
    pass


__all__ = [
    "TrilayerError",
    "ConfigError",
    "PotentialConsistencyError",
    "NumericalContractError",
    "FloquetExclusionError",
    "EigensolveError",
    "NotMagicError",
    "UnresolvedMultiplicityError",
    "BandTouchError",
    "PoleClusterError",
    "KernelRejectedError",
    "ChernFrameError",
]
