import numpy as np
import pytest

from trilayer_magic.core_engine.bands import (
    antichiral_gap_scan,
    band_structure,
    band_touch_locator,
    default_k_grid,
    fix_phase,
    kernel_function,
    protected_states,
    wronskian,
    wronskian_scan,
    zero_locator,
)
from trilayer_magic.core_engine.birman_schwinger import discover, effective_alpha
from trilayer_magic.core_engine.fourier_ops import HEX, Basis, Truncation
from trilayer_magic.core_engine.lattice import derive_config
from trilayer_magic.core_engine.potential import reference_v, standard_potential
from trilayer_magic.errors import BandTouchError

U0 = standard_potential()


def test_fix_phase():
    vec = fix_phase(np.array([0.1j, -2.0, 0.5]))
    assert np.linalg.norm(vec) == pytest.approx(1.0)
    assert vec[1].real > 0 and vec[1].imag == pytest.approx(0.0)
    assert fix_phase(np.zeros(3)).tolist() == [0, 0, 0]


def test_default_grid_adds_protected_points():
    ks = default_k_grid(4, derive_config(1.0, "1"))
    assert len(ks) == 18
    assert (1.0, 1.0) in ks and (2.0, 2.0) in ks


def test_chiral_bands_sorted_and_nonnegative():
    grid = band_structure(0.4, 0.0, derive_config(1.0, "2"), U0, None,
                          k_grid=[(0.3, 0.7), (1.2, 2.1)], j_max=4, truncation=Truncation(5))
    assert grid.bands.shape == (2, 4)
    assert np.all(grid.bands >= 0)
    assert np.all(np.diff(grid.bands, axis=1) >= 0)
    assert grid.header() == ["k_re", "k_im", "E1", "E2", "E3", "E4"]
    assert len(grid.csv_rows()[0]) == 6


def test_bands_with_antichiral_coupling():
    grid = band_structure(0.4, (0.3, 0.3), derive_config(1.0, "1"), U0, reference_v(),
                          k_grid=[(0.3, 0.7)], j_max=3, truncation=Truncation(4))
    assert np.all(grid.bands >= -1e-12)
    assert grid.metadata["cell"] == "Gamma_3"


PROTECTED_CASES = [
    # (ratio, alpha, description)
    ("3", 0.3, "case I, power of three"),
    ("3/2", 0.55 + 0.2j, "case I, ratio 3/2"),
    ("1", 0.3, "case II, equal angles"),
    ("4", 0.55 + 0.2j, "case II, ratio 4"),
]


@pytest.mark.parametrize("ratio, alpha, desc", PROTECTED_CASES, ids=[c[2] for c in PROTECTED_CASES])
def test_protected_states(ratio, alpha, desc):
    twist = derive_config(1.0, ratio)
    report = protected_states((alpha, alpha), twist, U0, Truncation(7, HEX))
    assert report["passed"], report["reasons"]
    assert report["case"] == twist.case_tag


def test_kernel_at_zero_coupling():
    kf = kernel_function(0.0, derive_config(1.0, "1"), U0, Truncation(6))
    assert kf.sigma < 1e-12
    assert kf.rotation_weight == 0


def test_kernel_away_from_zero_drops_rotation():
    kf = kernel_function(0.0, derive_config(1.0, "1"), U0, Truncation(4), k=(0.3, 0.4))
    assert kf.rotation_weight is None


def test_zero_of_standard_potential():
    modes = U0.rect_modes(1)
    basis = Basis(components=(tuple(mode for mode, _ in modes),))
    vector = np.array([c for _, c in modes])
    zeros = zero_locator(vector, basis, grid=32)
    at_origin = [zero for zero in zeros if zero.label == "0"]
    assert len(at_origin) == 1
    assert abs(at_origin[0].order) == 1
    assert at_origin[0].residual < 1e-5


def test_wronskian_scan_shape():
    rows = wronskian_scan([0.1, 0.2], 1.0, derive_config(1.0, "2"), U0, Truncation(5, HEX))
    assert [t for t, _ in rows] == [0.1, 0.2]
    assert all(w >= 0 for _, w in rows)


def test_band_touch_needs_a_magic():
    with pytest.raises(BandTouchError):
        band_touch_locator((0.3, 0.3), derive_config(1.0, "1"), U0, Truncation(5))


@pytest.mark.slow
def test_wronskian_vanishes_at_magic():
    twist = derive_config(1.0, "1")
    magic = min(discover(twist, U0, 1.0, Truncation(20)), key=lambda m: abs(m.alpha12 - 0.82825))
    pair = effective_alpha(twist, magic.alpha12, 1.0)
    assert wronskian(pair, twist, U0, Truncation(20)).modulus < 1e-6
    assert wronskian((0.5, 0.5), twist, U0, Truncation(20)).modulus > 1e-4


@pytest.mark.slow
def test_simple_magics_touch_at_one_point():
    twist = derive_config(4.0, "7/4")
    found = discover(twist, U0, 1.0, Truncation(24))
    for target in (1.8999, 1.9288):
        magic = min(found, key=lambda m: abs(m.alpha12 - target))
        pair = effective_alpha(twist, magic.alpha12, 1.0)
        touch = band_touch_locator(pair, twist, U0, Truncation(24), tol=1e-5)
        assert touch["k0"] in twist.protected_points()


@pytest.mark.slow
@pytest.mark.parametrize("alpha_tilde", [(1.0, 1.0), (5.0, 5.0)], ids=["unit", "strong"])
def test_antichiral_stays_gapped(alpha_tilde):
    report = antichiral_gap_scan(alpha_tilde, derive_config(1.0, "1"), reference_v())
    assert report["min"] > 0.01
