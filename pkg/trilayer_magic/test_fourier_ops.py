import numpy as np
import pytest

from trilayer_magic.core_engine.fourier_ops import (
    BOX,
    HEX,
    Basis,
    Truncation,
    analyze_grid,
    antichiral_from_H,
    assemble_antichiral,
    assemble_dirac,
    assemble_D,
    assemble_H,
    assemble_multiplication,
    commutator_defect,
    derived_layer_offsets,
    hamiltonian_symmetry_report,
    layer_basis,
    rotation_operator,
    rotation_sector_basis,
    sector_kernel,
    synthesize_grid,
    synthesize_position,
    y_grid,
)
from trilayer_magic.core_engine.lattice import derive_config, z_from_y
from trilayer_magic.core_engine.potential import eval_rect, reference_v, standard_potential
from trilayer_magic.core_engine.utils import OMEGA, SQRT3
from trilayer_magic.errors import ConfigError

U0 = standard_potential()
K_GENERIC = (0.37, 0.61)


def hand_assembled_D(alpha, k, twist, pot, N):
    """Entry by entry assembly of D(alpha) + k on the full box, times sqrt 3."""
    modes = [(m, n) for m in range(-N, N + 1) for n in range(-N, N + 1)]
    size = len(modes)
    out = np.zeros((3 * size, 3 * size), dtype=complex)
    a12, a23 = alpha
    couplings = [(0, 1, twist.p, a12), (1, 0, -twist.p, a12),
                 (1, 2, twist.p_tilde, a23), (2, 1, -twist.p_tilde, a23)]
    for layer in range(3):
        for i, (m, n) in enumerate(modes):
            out[layer * size + i, layer * size + i] = OMEGA ** 2 * (m + k[0]) - OMEGA * (n + k[1])
    for row_layer, col_layer, scale, a in couplings:
        shifts = dict(pot.rect_modes(scale))
        for i, x in enumerate(modes):
            for j, y in enumerate(modes):
                c = shifts.get((x[0] - y[0], x[1] - y[1]))
                if c is not None:
                    out[row_layer * size + i, col_layer * size + j] += SQRT3 * a * c
    return out


def test_truncation_sizes():
    assert Truncation(3).size == 49
    assert Truncation(3, HEX).size == 37
    total = sum(len(Truncation(5).modes((a, b))) for a in range(3) for b in range(3))
    assert total == Truncation(5).size


@pytest.mark.parametrize("kwargs", [{"N": 0}, {"N": 3, "shape": "circle"}], ids=["zero radius", "unknown shape"])
def test_truncation_rejects(kwargs):
    with pytest.raises(ConfigError):
        Truncation(**kwargs)


ASSEMBLY_CASES = [
    # (ratio, alpha, description)
    ("1", (1.0, 1.0), "equal angles"),
    ("2", (0.7 + 0.2j, 1.3), "ratio 2 with complex hopping"),
    ("-1", (0.5, 0.9), "opposite angles"),
]


@pytest.mark.parametrize("ratio, alpha, desc", ASSEMBLY_CASES, ids=[c[2] for c in ASSEMBLY_CASES])
def test_D_matches_hand_assembly(ratio, alpha, desc):
    twist = derive_config(1.0, ratio)
    D = assemble_D(alpha, K_GENERIC, twist, U0, Truncation(3))
    assert D.scale == pytest.approx(SQRT3)
    assert np.allclose(D.data, hand_assembled_D(alpha, K_GENERIC, twist, U0, 3), atol=1e-13)


def test_multiplication_matches_quadrature():
    trunc = Truncation(4)
    M = assemble_multiplication(U0, 1, trunc)
    basis = M.basis
    Y1, Y2 = y_grid(64)
    col = basis.index(0, (0, 0))
    unit = np.zeros(basis.dim, dtype=complex)
    unit[col] = 1.0
    values = synthesize_grid(unit, basis, 64) * eval_rect(U0, Y1, Y2)[np.newaxis]
    projected = analyze_grid(values, basis)
    assert np.max(np.abs(projected - M.data[:, col] / SQRT3)) < 1e-10


def test_dirac_singular_values_at_zero_coupling():
    twist = derive_config(1.0, "1")
    D = assemble_D(0.0, K_GENERIC, twist, U0, Truncation(4), sector=0)
    expected = []
    for c in range(3):
        modes = D.basis.mode_array(c)
        expected.extend(np.abs(OMEGA ** 2 * (modes[:, 0] + K_GENERIC[0]) - OMEGA * (modes[:, 1] + K_GENERIC[1])))
    assert np.allclose(D.singular_values(), np.sort(expected) / SQRT3)


@pytest.mark.parametrize("ratio", ["1", "2", "7/4", "3/2"])
def test_translation_commutes(ratio):
    twist = derive_config(1.0, ratio)
    D = assemble_D((0.8, 1.1), K_GENERIC, twist, U0, Truncation(4))
    for a in ((1, 0), (0, 1), (1, 1)):
        assert commutator_defect(D, a, twist) == 0.0


def test_layer_offsets_follow_twist():
    twist = derive_config(1.0, "2")
    offsets = derived_layer_offsets(assemble_D((1.0, 1.0), K_GENERIC, twist, U0, Truncation(4)))
    assert offsets[(0, 1)] == [(-twist.p) % 3]
    assert offsets[(1, 0)] == [twist.p % 3]
    assert offsets[(1, 2)] == [(-twist.q) % 3]
    assert offsets[(2, 1)] == [twist.q % 3]


def test_sector_basis_classes():
    twist = derive_config(1.0, "1")
    basis = layer_basis(Truncation(4), twist, sector=0)
    for c, cls in enumerate(((-twist.p) % 3, 0, twist.q % 3)):
        modes = basis.mode_array(c)
        assert np.all(modes % 3 == cls)


def test_rotation_sectors_partition_hexagon():
    basis = layer_basis(Truncation(4, HEX))
    C = rotation_operator(basis)
    assert np.allclose(np.linalg.matrix_power(C, 3), np.eye(basis.dim))
    dims = 0
    for ell in range(3):
        V = rotation_sector_basis(basis, ell)
        assert np.allclose(V.conj().T @ V, np.eye(V.shape[1]))
        assert np.allclose(C @ V, np.conj(OMEGA) ** ell * V)
        dims += V.shape[1]
    assert dims == basis.dim


def test_rotation_sector_needs_hexagon():
    with pytest.raises(ConfigError):
        rotation_sector_basis(layer_basis(Truncation(3, BOX)), 1)


def test_protected_kernel_at_zero_coupling():
    twist = derive_config(1.0, "1")
    D = assemble_D(0.0, (0.0, 0.0), twist, U0, Truncation(4, HEX), sector=0)
    s, vecs = sector_kernel(D, twist, None, 0, count=2)
    assert s[0] < 1e-12
    assert s[1] > 0.1
    assert abs(vecs[D.basis.index(1, (0, 0)), 0]) == pytest.approx(1.0)


def test_parseval_and_position_synthesis():
    rng = np.random.default_rng(7)
    basis = Basis(components=(Truncation(8).modes(),))
    vec = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    values = synthesize_grid(vec, basis, 128)
    assert np.mean(np.abs(values) ** 2) == pytest.approx(np.linalg.norm(vec) ** 2, rel=1e-6)
    assert np.allclose(analyze_grid(values, basis), vec)
    Y1, Y2 = y_grid(128)
    direct = synthesize_position(vec, basis, z_from_y(Y1[::16, ::16], Y2[::16, ::16]))
    assert np.allclose(direct, values[:, ::16, ::16], atol=1e-9)


def test_grid_aliasing_rejected():
    basis = Basis(components=(Truncation(8).modes(),))
    with pytest.raises(ConfigError):
        synthesize_grid(np.ones(basis.dim), basis, 16)


def test_hamiltonian_hermitian_and_chiral():
    twist = derive_config(1.0, "2")
    H = assemble_H((0.6, 0.9), (0.4, 0.4), K_GENERIC, twist, U0, reference_v(), Truncation(4), sector=0)
    assert H.hermiticity_defect() < 1e-12
    report = hamiltonian_symmetry_report((0.6, 0.9), 0.0, K_GENERIC, twist, U0, reference_v(), Truncation(4))
    assert report["chiral"]
    assert report["passed"], report["reasons"]


def test_antichiral_reshuffle():
    twist = derive_config(1.0, "1")
    H = assemble_H(0.0, (1.0, 1.0), K_GENERIC, twist, U0, reference_v(), Truncation(3))
    D_ac = assemble_antichiral((1.0, 1.0), K_GENERIC, twist, reference_v(), Truncation(3))
    assert np.allclose(antichiral_from_H(H), D_ac.data)


def test_free_dirac_is_diagonal():
    D = assemble_dirac(K_GENERIC, Truncation(2), components=2)
    assert D.basis.dim == 50
    assert np.allclose(D.data, np.diag(np.diag(D.data)))
    assert D.data[0, 0] == pytest.approx(OMEGA ** 2 * (-2 + K_GENERIC[0]) - OMEGA * (-2 + K_GENERIC[1]))
