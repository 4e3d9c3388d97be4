import numpy as np
import pytest

from trilayer_magic.core_engine.birman_schwinger import discover, effective_alpha
from trilayer_magic.core_engine.chern import chern_number, link, plaquette_sum, shift_frame, theta_frame_chern
from trilayer_magic.core_engine.fourier_ops import Basis, Truncation
from trilayer_magic.core_engine.lattice import derive_config
from trilayer_magic.core_engine.potential import standard_potential
from trilayer_magic.errors import ChernFrameError, NotMagicError

U0 = standard_potential()
PAULI = (np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.array([[1, 0], [0, -1]]))


def qwz_frames(mass, n):
    """Lower-band frames of the two-band lattice model sin kx sx + sin ky sy + (m + cos kx + cos ky) sz."""
    frames = {}
    for i in range(n):
        for j in range(n):
            kx, ky = 2 * np.pi * (i + 0.5) / n, 2 * np.pi * (j + 0.5) / n
            h = np.sin(kx) * PAULI[0] + np.sin(ky) * PAULI[1] + (mass + np.cos(kx) + np.cos(ky)) * PAULI[2]
            _, vecs = np.linalg.eigh(h)
            frames[(i, j)] = vecs[:, :1]
    for i in range(n):
        frames[(n, i)] = frames[(0, i)]
        frames[(i, n)] = frames[(i, 0)]
    frames[(n, n)] = frames[(0, 0)]
    return frames


def test_link_of_identical_frames():
    frame = np.array([[0.6], [0.8j]])
    assert link(frame, frame) == pytest.approx(1.0)


def test_orthogonal_frames_rejected():
    with pytest.raises(ChernFrameError):
        link(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))


def test_constant_frames_have_no_curvature():
    frame = np.array([[1.0], [1j]]) / np.sqrt(2)
    frames = {(i, j): frame for i in range(5) for j in range(5)}
    assert plaquette_sum(frames, 4) == pytest.approx(0.0)


@pytest.mark.parametrize("mass, expected", [(1.0, 1), (3.0, 0)], ids=["topological", "trivial"])
def test_two_band_model(mass, expected):
    raw = plaquette_sum(qwz_frames(mass, 20), 20) / (2 * np.pi)
    assert abs(raw - np.rint(raw)) < 1e-9
    assert abs(int(np.rint(raw))) == expected


def test_requires_flat_band():
    with pytest.raises(NotMagicError):
        chern_number(0.3, 0, derive_config(1.0, "1"), U0, Truncation(4))


def test_shift_frame_moves_modes():
    basis = Basis(components=(((0, 0), (3, 0), (1, 1)),))
    frame = np.array([[1.0], [2.0], [3.0]])
    assert shift_frame(frame, basis, (3, 0)).ravel().tolist() == [2.0, 0.0, 0.0]


@pytest.fixture(scope="module")
def simple_magic():
    twist = derive_config(4.0, "7/4")
    magic = min(discover(twist, U0, 1.0, Truncation(24)), key=lambda m: abs(m.alpha12 - 1.8999))
    return twist, effective_alpha(twist, magic.alpha12, 1.0)


@pytest.mark.slow
def test_simple_flat_band_chern(simple_magic):
    twist, pair = simple_magic
    result = chern_number(pair, 1, twist, U0, Truncation(24), grid_size=24)
    assert result.chern == -1
    assert result.drift < 0.05
    shifted = chern_number(pair, 1, twist, U0, Truncation(24), grid_size=24, offset=0.37)
    assert shifted.chern == result.chern


@pytest.mark.slow
def test_theta_frames_agree(simple_magic):
    twist, pair = simple_magic
    result = theta_frame_chern(pair, twist, U0, Truncation(24), grid_size=24)
    assert result.chern == -1
    assert result.method == "theta"
