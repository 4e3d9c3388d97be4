import numpy as np
import pytest

from trilayer_magic.core_engine.birman_schwinger import DISCOVERY_K, assemble_Bk, magic_from_Bk
from trilayer_magic.core_engine.fourier_ops import Truncation
from trilayer_magic.core_engine.lattice import derive_config
from trilayer_magic.core_engine.potential import standard_potential
from trilayer_magic.core_engine.traces import (
    SECTOR_COUNT,
    brute_force_Theta,
    closed_form_S4,
    combinatorial_trace,
    discontinuity_limit,
    discontinuity_sequence,
    enumerate_Theta,
    is_rational_multiple,
    k_symbol,
    lattice_power_sum,
    magic_power_sums,
    numeric_trace,
    orbit_contribution,
    partial_sum_profile,
    rationality_check,
    trace_convergence,
    trace_report,
    word_lattice_sum,
)
from trilayer_magic.core_engine.utils import OMEGA
from trilayer_magic.errors import ConfigError

U0 = standard_potential()


@pytest.mark.parametrize("p, pt, count", [(1, 2, 48), (1, 1, 60)], ids=["distinct weights", "equal weights"])
def test_word_counts(p, pt, count):
    assert len(enumerate_Theta(2, p, pt)) == count


@pytest.mark.parametrize("p, pt", [(1, 2), (1, 1), (1, -1), (2, 3)])
def test_enumeration_matches_brute_force(p, pt):
    fast = {w.steps for w in enumerate_Theta(2, p, pt)}
    slow = {w.steps for w in brute_force_Theta(2, p, pt)}
    assert fast == slow


def test_short_words_rejected():
    with pytest.raises(ConfigError):
        enumerate_Theta(1, 1, 1)


CLOSED_FORM_CASES = [
    # (h, p, p_tilde, description)
    ("1", 1, 1, "equal angles"),
    ("-1", 1, -1, "opposite angles"),
    ("2", 1, 2, "ratio 2"),
    ("3/2", 2, 3, "ratio 3/2"),
]


@pytest.mark.parametrize("h, p, pt, desc", CLOSED_FORM_CASES, ids=[c[3] for c in CLOSED_FORM_CASES])
@pytest.mark.parametrize("r", [0.0, 0.5, 1.0])
def test_combinatorial_matches_closed_form(h, p, pt, desc, r):
    value = combinatorial_trace(2, p, pt, r)
    assert abs(value - closed_form_S4(r, h, p)) < 1e-9


def test_sector_convention():
    per_sector = combinatorial_trace(2, 1, 2, 1.0)
    assert abs(per_sector - np.pi / np.sqrt(3)) < 1e-10
    assert combinatorial_trace(2, 1, 2, 1.0, per_sector=False) == pytest.approx(SECTOR_COUNT * per_sector)
    Bk = assemble_Bk(1.0, DISCOVERY_K, derive_config(1.0, "2"), U0, Truncation(4))
    assert numeric_trace(Bk, 2, per_sector=False) == pytest.approx(SECTOR_COUNT * numeric_trace(Bk, 2))


@pytest.mark.parametrize("r", [0.5 + 0.5j, 0.3 - 0.8j, 1j], ids=["0.5+0.5i", "0.3-0.8i", "i"])
@pytest.mark.parametrize("h, p, pt, desc", CLOSED_FORM_CASES, ids=[c[3] for c in CLOSED_FORM_CASES])
def test_complex_hop_ratio_matches_closed_form(h, p, pt, desc, r):
    value = closed_form_S4(r, h, p)
    assert abs(combinatorial_trace(2, p, pt, r) - value) < 1e-9


def test_closed_form_keeps_imaginary_part():
    value = closed_form_S4(0.5 + 0.5j, 2)
    assert isinstance(value, complex) and abs(value.imag) > 0.1
    assert isinstance(closed_form_S4(1.0, 2), float)
    assert isinstance(discontinuity_limit(1.0, 1, 0.5 + 0.5j), complex)
    rows = discontinuity_sequence(1.0, 1.0, 2, 0.5 + 0.5j)
    assert all(isinstance(row["S4"], complex) for row in rows)


REPORT_CASES = [
    # (h, r, q_rational, description)
    ("2", 1.0, "1", "ratio 2"),
    ("1", 1.0, "4/9", "equal angles"),
    ("3/2", 0.5 + 0.5j, None, "complex hopping"),
]


@pytest.mark.parametrize("h, r, q, desc", REPORT_CASES, ids=[c[3] for c in REPORT_CASES])
def test_trace_report_flags_agreement(h, r, q, desc):
    report = trace_report(2, h, r)
    assert report["convention"] == "per_sector"
    assert report["sector_count"] == SECTOR_COUNT
    assert report["closed_form_agrees"] is True
    assert report["closed_form_ratio"] == pytest.approx(1.0)
    if q is not None:
        assert report["q_rational"] == q


def test_closed_form_values():
    base = 4 * np.pi / (9 * np.sqrt(3))
    assert closed_form_S4(1.0, 1) == pytest.approx(base)
    assert closed_form_S4(1.0, -1) == pytest.approx(4 * base)
    assert closed_form_S4(0.0, 2) == pytest.approx(base)
    assert closed_form_S4(1.0, 2) == pytest.approx(base * (0.25 + 1 + 1))
    assert closed_form_S4(1.0, 1, p=1, zeta1=2.0, rescaled=False) == pytest.approx(base / 16)


def test_closed_form_rejects_zero_ratio():
    with pytest.raises(ConfigError):
        closed_form_S4(1.0, 0)


def test_equal_angle_trace_is_rational():
    q, dist = rationality_check(np.pi / np.sqrt(3))
    assert q == 1 and dist < 1e-12
    assert str(rationality_check(4 * np.pi / (9 * np.sqrt(3)))[0]) == "4/9"
    assert not is_rational_multiple(1.0)


def test_orbit_shortcut():
    word = enumerate_Theta(2, 1, 2)[0]
    K = k_symbol(DISCOVERY_K)
    direct, image = 0j, word
    for _ in range(3):
        direct += image.coefficient(U0, 0.7) * word_lattice_sum(image, K)
        image = image.rotated()
    assert orbit_contribution(word, DISCOVERY_K, U0, 0.7) == pytest.approx(direct, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("m", [4, 5])
def test_lattice_power_sum_direct(m):
    c = 0.7 + 0.4j
    a, b = np.meshgrid(np.arange(-40, 41), np.arange(-40, 41), indexing="ij")
    keep = np.abs(a - b) <= 40
    lam = 3 * (a[keep] + b[keep] * OMEGA)
    direct = np.sum(1.0 / (lam + c) ** m)
    assert abs(lattice_power_sum(c, m) - direct) < 1e-7


def test_numeric_trace_rejects_low_power():
    Bk = assemble_Bk(1.0, DISCOVERY_K, derive_config(1.0, "1"), U0, Truncation(3))
    with pytest.raises(ConfigError):
        numeric_trace(Bk, 1)


def test_discontinuity_at_equal_angles():
    rows = discontinuity_sequence(1.0, 1.0, 4)
    assert [row["p"] for row in rows] == [2, 8, 26, 80]
    ratios = [row["S4_over_p2"] for row in rows]
    assert ratios[3] / ratios[2] - 1 < 0.05
    limit = discontinuity_limit(1.0, 1)
    assert abs(ratios[3] - limit) / limit < 0.05
    # the limit differs from the value at h = 1 itself
    assert limit == pytest.approx(5 * closed_form_S4(1.0, 1))


def test_magic_power_sums_halve_pairs():
    assert magic_power_sums([2, -2]) == pytest.approx(0.0625)
    rows = partial_sum_profile([1, -1, 2, -2], 0.0)
    assert [(r, s.real) for r, s, _ in rows] == [(1.0, pytest.approx(1.0)), (2.0, pytest.approx(1.0625))]


def test_power_sums_match_numeric_trace():
    Bk = assemble_Bk(1.0, DISCOVERY_K, derive_config(1.0, "2"), U0, Truncation(6))
    found = magic_from_Bk(Bk)
    assert magic_power_sums(found) == pytest.approx(numeric_trace(Bk, 2, per_sector=False), rel=1e-4)


@pytest.mark.slow
def test_numeric_trace_converges_to_closed_form():
    tau = np.pi / np.sqrt(3)
    rows = trace_convergence(1.0, derive_config(1.0, "2"), U0, [12, 16, 20])
    errors = [abs(value - tau) for _, value in rows]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] / tau < 0.01


@pytest.mark.slow
def test_numeric_trace_independent_of_k():
    twist = derive_config(1.0, "2")
    values = [numeric_trace(assemble_Bk(0.5, k, twist, U0, Truncation(16)), 2)
              for k in (DISCOVERY_K, (0.4, 1.7))]
    assert values[0] == pytest.approx(values[1], rel=1e-2)
