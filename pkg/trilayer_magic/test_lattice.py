from fractions import Fraction

import numpy as np
import pytest

from trilayer_magic.core_engine.lattice import (
    CASE_I,
    CASE_II,
    CellIndex,
    derive_config,
    equivalent_mod_gamma3,
    k_to_rect,
    parse_ratio,
    rect_to_k,
    reduce_mod_gamma3,
    sigma,
    sigma_orbit,
    stacking_point,
    stacking_points,
    y_from_z,
    z_from_y,
)
from trilayer_magic.core_engine.utils import OMEGA
from trilayer_magic.errors import ConfigError


TWIST_CASES = [
    # (ratio, p, q, p_tilde, flipped, case, description)
    ("1", 1, 1, 1, False, CASE_II, "equal angles"),
    ("7/4", 4, 7, 7, False, CASE_II, "ratio 7/4"),
    ("2", 1, 2, 2, False, CASE_I, "ratio 2"),
    ("-1", 1, -1, -1, False, CASE_I, "opposite angles"),
    ("3", 1, 0, 3, False, CASE_I, "power of three"),
    ("3/2", 2, 0, 3, False, CASE_I, "ratio 3/2"),
    ("4", 1, 4, 4, False, CASE_II, "ratio 4"),
    ("1/2", 2, 1, 1, False, CASE_I, "ratio 1/2"),
    ("1/3", 1, 0, 3, True, CASE_I, "p divisible by 3 flips"),
    ("5/6", 5, 0, 6, True, CASE_I, "flip through 6/5"),
]


@pytest.mark.parametrize("ratio, p, q, pt, flipped, case, desc", TWIST_CASES, ids=[c[-1] for c in TWIST_CASES])
def test_derive_config(ratio, p, q, pt, flipped, case, desc):
    twist = derive_config(1.0, ratio)
    assert (twist.p, twist.q, twist.p_tilde) == (p, q, pt)
    assert twist.flipped is flipped
    assert twist.case_tag == case
    assert twist.p % 3 != 0
    # p_tilde and q agree mod 3
    assert (twist.p_tilde - twist.q) % 3 == 0


def test_flip_swaps_orientation():
    twist = derive_config(2.0, "5/6")
    assert twist.ratio == Fraction(6, 5)
    assert twist.input_ratio == Fraction(5, 6)
    assert twist.zeta1 == pytest.approx(-2.0 * 5 / 6)
    assert twist.effective_hop_ratio(0.5) == pytest.approx(2.0)
    assert twist.original_alpha(1.5, 0.5) == (pytest.approx(3.0), pytest.approx(1.5))
    with pytest.raises(ConfigError):
        twist.effective_hop_ratio(0)


RATIO_PARTS = [
    ("18/5", (2, 2, 5), "positive power of three"),
    ("5/6", (-1, 5, 2), "negative power of three"),
    ("-7/4", (0, -7, 4), "sign on the numerator"),
]


@pytest.mark.parametrize("ratio, expected, desc", RATIO_PARTS, ids=[c[2] for c in RATIO_PARTS])
def test_parse_ratio(ratio, expected, desc):
    assert parse_ratio(ratio) == expected


@pytest.mark.parametrize("ratio", ["0", "0/5", "pi"])
def test_rejects_bad_ratio(ratio):
    with pytest.raises(ConfigError):
        derive_config(1.0, ratio)


def test_protected_points_deduplicate():
    assert derive_config(1.0, "1").protected_points() == [(1, 1), (0, 0), (2, 2)]
    assert derive_config(1.0, "2").protected_points() == [(1, 1), (0, 0)]


def test_stacking_point_value_and_rotation():
    zs = stacking_point()
    assert zs == pytest.approx(4 * np.pi * np.sqrt(3) / 9)
    # fixed by the rotation modulo Gamma_3, and -z_S is not equivalent to z_S
    assert equivalent_mod_gamma3(OMEGA * zs, zs)
    assert equivalent_mod_gamma3(OMEGA * -zs, -zs)
    assert not equivalent_mod_gamma3(zs, -zs)


def test_coordinate_changes():
    rng = np.random.default_rng(3)
    z = rng.normal(size=20) + 1j * rng.normal(size=20)
    assert np.allclose(z_from_y(*y_from_z(z)), z)
    # Gamma_3 generators are (2 pi / 3) Z^2 in y
    y1, y2 = y_from_z(CellIndex(1, 0).embed())
    assert (y1, y2) == (pytest.approx(2 * np.pi / 3), pytest.approx(0.0, abs=1e-12))


def test_floquet_rect_form():
    assert rect_to_k(1, 1) == pytest.approx(-1j)
    k = 0.3 - 0.7j
    assert rect_to_k(*k_to_rect(k)) == pytest.approx(k)


def test_reduce_mod_gamma3():
    z = 0.4 + 0.9j
    shifted = z + CellIndex(2, -1).embed()
    assert reduce_mod_gamma3(shifted) == pytest.approx(reduce_mod_gamma3(z))


def test_sigma_has_order_three():
    mode = (2, -5)
    assert sigma(*sigma(*sigma(*mode))) == mode


def test_sigma_orbit_and_stacking_points():
    assert sigma_orbit(1, 0) == [(1, 0), (-1, 1), (0, -1)]
    origin, plus, minus = stacking_points()
    assert origin == 0 and plus == -minus == stacking_point()
