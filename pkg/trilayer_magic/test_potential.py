import json

import numpy as np
import pytest

from trilayer_magic.core_engine.lattice import derive_config, stacking_point, y_from_z
from trilayer_magic.core_engine.potential import (
    BUILTIN_POTENTIALS,
    PotentialCoeffs,
    close_symmetry,
    eval_dz,
    eval_dzbar,
    eval_potential,
    eval_rect,
    generalized_potential,
    load_potential,
    potential_from_dict,
    resolve_potential,
    standard_potential,
    reference_v,
    validate_generalized,
    validate_symmetries,
)
from trilayer_magic.core_engine.utils import OMEGA, omega_power
from trilayer_magic.errors import ConfigError, PotentialConsistencyError


def u0_direct(z):
    """Three exponentials of the standard potential, summed by hand."""
    z = np.asarray(z, dtype=complex)
    return sum(OMEGA ** k * np.exp(0.5 * (z * np.conj(OMEGA) ** k - np.conj(z) * OMEGA ** k)) for k in range(3))


def test_standard_coefficients():
    pot = standard_potential()
    assert set(pot.coeffs) == {(0, 0), (0, -1), (1, 0)}
    assert pot.coeffs[(0, 0)] == pytest.approx(1)
    assert pot.coeffs[(0, -1)] == pytest.approx(np.conj(OMEGA))
    assert pot.coeffs[(1, 0)] == pytest.approx(OMEGA)


@pytest.mark.parametrize("e, expected", [(0, 1.0), (1, OMEGA), (2, OMEGA ** 2), (-1, OMEGA ** 2), (5, OMEGA ** 2)])
def test_omega_power_reduces_exponent(e, expected):
    assert omega_power(e) == pytest.approx(expected)


POINTS = [
    (0j, "origin"),
    (stacking_point(), "stacking point"),
    (-stacking_point(), "opposite stacking point"),
    (0.37 - 1.21j, "generic point"),
]


@pytest.mark.parametrize("z, desc", POINTS, ids=[c[1] for c in POINTS])
def test_standard_matches_direct_sum(z, desc):
    assert eval_potential(standard_potential(), z) == pytest.approx(u0_direct(z), abs=1e-12)


def test_vanishes_at_origin():
    assert abs(eval_potential(standard_potential(), 0j)) < 1e-14


def test_rect_evaluation_agrees():
    pot = standard_potential()
    z = np.array([0.2 + 0.1j, -1.3 + 2.2j, 3.1 - 0.4j])
    for scale in (1, 2, -1):
        y1, y2 = y_from_z(z)
        assert np.allclose(eval_rect(pot, y1, y2, scale), eval_potential(pot, z, scale), atol=1e-12)


def test_wirtinger_derivatives():
    pot = standard_potential()
    z, h = 0.31 + 0.47j, 1e-6
    dx = (eval_potential(pot, z + h) - eval_potential(pot, z - h)) / (2 * h)
    dy = (eval_potential(pot, z + 1j * h) - eval_potential(pot, z - 1j * h)) / (2 * h)
    assert eval_dz(pot, z) == pytest.approx((dx - 1j * dy) / 2, abs=1e-7)
    assert eval_dzbar(pot, z) == pytest.approx((dx + 1j * dy) / 2, abs=1e-7)


@pytest.mark.parametrize("pot", [standard_potential(), reference_v()], ids=["U0", "V0"])
def test_builtin_symmetries(pot):
    report = validate_symmetries(pot)
    assert report["passed"], report["reasons"]
    assert report["residuals"]["translation"] < 1e-12


def test_scaled_symmetries():
    report = validate_symmetries(standard_potential(), scale=2)
    assert report["passed"], report["reasons"]


def test_broken_potential_is_reported():
    pot = PotentialCoeffs(sym_j=-1, sym_ell=-1, coeffs={(0, 0): 1.0}, label="bad")
    report = validate_symmetries(pot)
    assert not report["passed"]
    assert any("rotation" in reason for reason in report["reasons"])


CONFLICTS = [
    # (seed, j, ell, description)
    ({(0, 0): 1.0, (0, -1): 1.0}, -1, -1, "seeds disagree on one orbit"),
    ({(0, 0): 1.0}, 0, -1, "fixed mode with nonzero rotation weight"),
]


@pytest.mark.parametrize("seed, j, ell, desc", CONFLICTS, ids=[c[3] for c in CONFLICTS])
def test_close_symmetry_conflicts(seed, j, ell, desc):
    with pytest.raises(PotentialConsistencyError) as info:
        close_symmetry(seed, j, ell)
    assert (0, 0) in info.value.orbit


def test_symmetry_labels_checked():
    with pytest.raises(ConfigError):
        PotentialCoeffs(sym_j=2, sym_ell=0)


def test_malformed_definition():
    with pytest.raises(ConfigError):
        potential_from_dict({"entries": [{"n": 0, "m": 0}]})


def test_load_from_file(tmp_path):
    path = tmp_path / "u.json"
    path.write_text(json.dumps(BUILTIN_POTENTIALS["U0"]))
    pot = load_potential(str(path))
    assert pot.coeffs == pytest.approx(standard_potential().coeffs)
    assert resolve_potential(str(path)).label == "U0"


def test_resolve_unknown_file():
    with pytest.raises(ConfigError):
        resolve_potential("no_such_potential.json")


def test_generalized_slots_validate():
    gp = generalized_potential(derive_config(1.0, "2"))
    report = validate_generalized(gp)
    assert report["passed"], report
    assert set(report["slots"]) == {"U+", "U-", "Y+", "Y-"}
    assert gp.translation_weights["Y+"] == 2
