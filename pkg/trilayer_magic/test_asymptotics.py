import numpy as np
import pytest

from trilayer_magic.core_engine.asymptotics import (
    band_count_below,
    bracket_field,
    bracket_grid,
    nondegeneracy_check,
    squeeze_experiment,
)
from trilayer_magic.core_engine.fourier_ops import Truncation
from trilayer_magic.core_engine.lattice import derive_config
from trilayer_magic.core_engine.potential import standard_potential
from trilayer_magic.core_engine.utils import OMEGA
from trilayer_magic.errors import ConfigError

U0 = standard_potential()
BETA = (1.0, 1.0)


def test_nondegeneracy():
    value, passed = nondegeneracy_check(U0)
    assert value == pytest.approx(1.5)
    assert passed
    assert not nondegeneracy_check(U0.times(1j))[1]


def test_bracket_vanishes_at_origin():
    assert bracket_field(BETA, 1, "2", U0, 0j) == 0.0


def test_bracket_quartic_near_origin():
    # V(z) ~ A z^2 with A = -(9/4)(b12^2 p^2 + b23^2 (p r)^2)
    A = 9 / 4 * (1 + 4)
    z = 0.01 * np.exp(0.4j)
    value = bracket_field(BETA, 1, "2", U0, z)
    assert value > 0
    assert value == pytest.approx(16 * A ** 2.5 * abs(z) ** 4, rel=0.1)


def test_bracket_branch_and_rotation():
    z = 0.7 - 0.3j
    field = bracket_field(BETA, 1, "2", U0, z)
    assert bracket_field(BETA, 1, "2", U0, z, branch=-1) == pytest.approx(field)
    assert bracket_field(BETA, 1, "2", U0, OMEGA * z) == pytest.approx(field, rel=1e-9)


def test_bracket_needs_commensurate_ratio():
    with pytest.raises(ConfigError):
        bracket_field(BETA, 1, "3/2", U0, 0.2j)


def test_bracket_grid_size():
    rows = bracket_grid(BETA, 1, "2", U0, n=8)
    assert len(rows) == 64
    assert all(v >= 0 for _, _, v in rows)


def test_short_ray_has_no_fit():
    report = squeeze_experiment(BETA, derive_config(1.0, "1"), U0, [0.5, 1.0], j_max=3, truncation=Truncation(4))
    assert report.slope is None and report.rate is None
    assert [item["reason"] for item in report.excluded] == ["pre-asymptotic"] * 2
    with pytest.raises(ConfigError):
        band_count_below(report)
    counts = band_count_below(report, rate=1.0)
    assert len(counts) == 2


@pytest.mark.slow
def test_lowest_band_squeezes_exponentially():
    ts = np.linspace(3.0, 8.0, 11) / np.sqrt(2)
    report = squeeze_experiment(BETA, derive_config(1.0, "1"), U0, ts, truncation=Truncation(24))
    assert report.slope < 0
    assert report.r_squared > 0.9
