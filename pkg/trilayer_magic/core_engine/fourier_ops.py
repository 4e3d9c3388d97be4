# trilayer_magic/core_engine/fourier_ops.py
"""
Truncated operators in rectangular Fourier coordinates.

A component of a basis is a sorted list of modes (m, n), the plane waves
e^{i(m y1 + n y2)}. Dirac blocks are diagonal with entry
omega^2 (m + k1) - omega (n + k2); multiplication by a potential is a sum of
shift matrices. Every D/H type matrix is sqrt(3) times the physical
operator, which OperatorMatrix records in `scale`.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, sparse

from ..errors import ConfigError
from .lattice import TwistConfig, k_to_rect, sigma, y_from_z
from .potential import GeneralizedPotential, PotentialCoeffs
from .utils import OMEGA, OMEGA_BAR, OMEGA_POWERS, RECT_SCALE

logger = logging.getLogger(__name__)

Mode = Tuple[int, int]
KLike = Union[complex, Tuple[float, float], Sequence[float]]

BOX = "box"
HEX = "hex"

# Rows and columns of H(0, alpha_tilde) that form the anti-chiral block
ANTICHIRAL_ROWS = (0, 4, 2)
ANTICHIRAL_COLS = (1, 3, 5)

SYNTH_CHUNK = 4096


@lru_cache(maxsize=64)
def _mode_list(N: int, shape: str, residue: Optional[Tuple[int, int]]) -> Tuple[Mode, ...]:
    modes = []
    for m in range(-N, N + 1):
        for n in range(-N, N + 1):
            if shape == HEX and abs(m + n) > N:
                continue
            if residue is not None and (m % 3 != residue[0] % 3 or n % 3 != residue[1] % 3):
                continue
            modes.append((m, n))
    return tuple(modes)


@dataclass(frozen=True)
class Truncation:
    """Mode box |m|, |n| <= N (or the hexagon |m|, |n|, |m+n| <= N) with optional residue filter."""
    N: int
    shape: str = BOX
    residue: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if self.N <= 0:
            raise ConfigError(f"truncation radius must be positive, got {self.N}")
        if self.shape not in (BOX, HEX):
            raise ConfigError(f"unknown truncation shape {self.shape!r}")

    def modes(self, residue: Optional[Tuple[int, int]] = None) -> Tuple[Mode, ...]:
        return _mode_list(self.N, self.shape, residue if residue is not None else self.residue)

    def class_modes(self, c: int) -> Tuple[Mode, ...]:
        """Modes of the diagonal class m = n = c (mod 3)."""
        return self.modes((c % 3, c % 3))

    @property
    def size(self) -> int:
        return len(self.modes())


@dataclass(frozen=True)
class Basis:
    components: Tuple[Tuple[Mode, ...], ...]
    labels: Tuple[str, ...] = ()

    @cached_property
    def offsets(self) -> List[int]:
        out, total = [], 0
        for comp in self.components:
            out.append(total)
            total += len(comp)
        return out

    @property
    def dim(self) -> int:
        return sum(len(c) for c in self.components)

    @property
    def n_components(self) -> int:
        return len(self.components)

    @cached_property
    def _lookup(self) -> Dict[Tuple[int, Mode], int]:
        table = {}
        for c, comp in enumerate(self.components):
            base = self.offsets[c]
            for i, mode in enumerate(comp):
                table[(c, mode)] = base + i
        return table

    def index(self, component: int, mode: Mode) -> Optional[int]:
        return self._lookup.get((component, tuple(mode)))

    def mode_array(self, component: int) -> np.ndarray:
        return np.array(self.components[component], dtype=int).reshape(-1, 2)

    def component_slice(self, component: int) -> slice:
        start = self.offsets[component]
        return slice(start, start + len(self.components[component]))

    def entries(self):
        """(component, mode) for every basis index, in order."""
        for c, comp in enumerate(self.components):
            for mode in comp:
                yield c, mode


@dataclass
class OperatorMatrix:
    data: np.ndarray
    basis: Basis
    k: Tuple[float, float] = (0.0, 0.0)
    label: str = ""
    scale: float = 1.0

    def __post_init__(self):
        if self.data.shape != (self.basis.dim, self.basis.dim):
            raise ValueError(f"{self.label}: matrix {self.data.shape} does not match basis dim {self.basis.dim}")

    @property
    def dim(self) -> int:
        return self.basis.dim

    def singular_values(self) -> np.ndarray:
        """Ascending singular values in physical units."""
        if self.dim == 0:
            return np.zeros(0)
        return np.sort(linalg.svdvals(self.data)) / self.scale

    def hermiticity_defect(self) -> float:
        if self.dim == 0:
            return 0.0
        return float(np.max(np.abs(self.data - self.data.conj().T)))


@dataclass
class SectorView:
    """Isometry onto a symmetry sector, and the target restricted to it."""
    isometry: np.ndarray
    data: Optional[np.ndarray]
    translation_class: Optional[int] = None
    rotation_weight: Optional[int] = None
    basis: Optional[Basis] = None

    @property
    def empty(self) -> bool:
        return self.isometry.shape[1] == 0

    def projector(self) -> np.ndarray:
        return self.isometry @ self.isometry.conj().T


# --- Helper functions ---
def as_rect_k(k: KLike) -> Tuple[float, float]:
    """Floquet parameter as rectangular (k1, k2). Complex input uses sqrt3 k = omega^2 k1 - omega k2."""
    if isinstance(k, (complex, np.complexfloating)):
        return k_to_rect(complex(k))
    if isinstance(k, (int, float, np.floating, np.integer)):
        return k_to_rect(complex(k))
    k1, k2 = k
    return float(k1), float(k2)


def as_alpha_pair(alpha) -> Tuple[complex, complex]:
    if isinstance(alpha, (tuple, list, np.ndarray)):
        a12, a23 = alpha
        return complex(a12), complex(a23)
    return complex(alpha), complex(alpha)


def layer_classes(twist: TwistConfig, r: int) -> Tuple[int, int, int]:
    """Fourier classes (c, c) of the three layers on the translation sector r."""
    return (r - twist.p) % 3, r % 3, (r + twist.q) % 3


def layer_basis(truncation: Truncation, twist: Optional[TwistConfig] = None,
                sector: Optional[int] = None, labels=("L1", "L2", "L3")) -> Basis:
    if sector is None:
        modes = truncation.modes()
        return Basis(components=(modes, modes, modes), labels=tuple(labels))
    if twist is None:
        raise ConfigError("a translation sector needs the twist configuration")
    classes = layer_classes(twist, sector)
    return Basis(components=tuple(truncation.class_modes(c) for c in classes), labels=tuple(labels))


def _lookup_grid(modes: np.ndarray):
    if len(modes) == 0:
        return np.full((1, 1), -1, dtype=int), 0
    extent = int(np.max(np.abs(modes)))
    grid = np.full((2 * extent + 1, 2 * extent + 1), -1, dtype=int)
    grid[modes[:, 0] + extent, modes[:, 1] + extent] = np.arange(len(modes))
    return grid, extent


def shift_rows(out_modes: np.ndarray, in_modes: np.ndarray, shift: Mode):
    """(rows, cols) of the shift x -> x + shift between two mode lists; out-of-box targets dropped."""
    grid, extent = _lookup_grid(out_modes)
    target = in_modes + np.array(shift, dtype=int)
    inside = np.all(np.abs(target) <= extent, axis=1)
    cols = np.nonzero(inside)[0]
    rows = grid[target[inside, 0] + extent, target[inside, 1] + extent]
    keep = rows >= 0
    return rows[keep], cols[keep]


def multiplication_block(pot: PotentialCoeffs, scale: int, out_modes: Sequence[Mode],
                         in_modes: Sequence[Mode], factor: complex = 1.0) -> sparse.csr_matrix:
    """factor * sqrt3 * u(scale z) between two mode lists, as a sparse block."""
    out_arr = np.array(out_modes, dtype=int).reshape(-1, 2)
    in_arr = np.array(in_modes, dtype=int).reshape(-1, 2)
    rows, cols, vals = [], [], []
    if factor != 0:
        for shift, c in pot.rect_modes(scale):
            r, cl = shift_rows(out_arr, in_arr, shift)
            rows.append(r)
            cols.append(cl)
            vals.append(np.full(len(r), complex(factor) * RECT_SCALE * c))
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    block = sparse.coo_matrix((vals, (rows, cols)), shape=(len(out_arr), len(in_arr)), dtype=complex)
    return block.tocsr()


def dirac_diagonal(modes: Sequence[Mode], k: KLike) -> np.ndarray:
    k1, k2 = as_rect_k(k)
    arr = np.array(modes, dtype=float).reshape(-1, 2)
    return OMEGA ** 2 * (arr[:, 0] + k1) - OMEGA * (arr[:, 1] + k2)


def _place(blocks: Dict[Tuple[int, int], sparse.spmatrix], basis: Basis) -> np.ndarray:
    grid = [[None] * basis.n_components for _ in range(basis.n_components)]
    for (i, j), block in blocks.items():
        grid[i][j] = block
    sizes = [len(c) for c in basis.components]
    for i in range(basis.n_components):
        if grid[i][i] is None:
            grid[i][i] = sparse.csr_matrix((sizes[i], sizes[i]), dtype=complex)
    return sparse.bmat(grid, format="csr", dtype=complex).toarray()


# --- Assembly ---
def assemble_dirac(k: KLike, truncation: Truncation, components: int = 1) -> OperatorMatrix:
    modes = truncation.modes()
    basis = Basis(components=tuple(modes for _ in range(components)),
                  labels=tuple(f"C{i + 1}" for i in range(components)))
    diag = np.tile(dirac_diagonal(modes, k), components)
    return OperatorMatrix(data=np.diag(diag), basis=basis, k=as_rect_k(k), label="dirac", scale=RECT_SCALE)


def assemble_multiplication(pot: PotentialCoeffs, scale: int, truncation: Truncation) -> OperatorMatrix:
    modes = truncation.modes()
    basis = Basis(components=(modes,), labels=(pot.label or "U",))
    block = multiplication_block(pot, scale, modes, modes)
    return OperatorMatrix(data=block.toarray(), basis=basis, label=f"mult[{pot.label}](x{scale})",
                          scale=RECT_SCALE)


def _d_blocks(alpha, k, twist: TwistConfig, pot: PotentialCoeffs, basis: Basis):
    a12, a23 = as_alpha_pair(alpha)
    c = basis.components
    p, pt = twist.p, twist.p_tilde
    blocks = {
        (0, 1): multiplication_block(pot, p, c[0], c[1], a12),
        (1, 0): multiplication_block(pot, -p, c[1], c[0], a12),
        (1, 2): multiplication_block(pot, pt, c[1], c[2], a23),
        (2, 1): multiplication_block(pot, -pt, c[2], c[1], a23),
    }
    for i in range(3):
        blocks[(i, i)] = sparse.diags(dirac_diagonal(c[i], k), format="csr")
    return blocks


def assemble_D(alpha, k: KLike, twist: TwistConfig, pot: PotentialCoeffs, truncation: Truncation,
               sector: Optional[int] = None) -> OperatorMatrix:
    """
    D(alpha) + k on three layers:

        [[2Dzb + k,    a12 U(pz),    0          ],
         [a12 U(-pz),  2Dzb + k,     a23 U(pt z)],
         [0,           a23 U(-pt z), 2Dzb + k   ]]

    `sector` restricts to the translation sector r (layer classes r-p, r, r+q).
    """
    basis = layer_basis(truncation, twist, sector)
    data = _place(_d_blocks(alpha, k, twist, pot, basis), basis)
    return OperatorMatrix(data=data, basis=basis, k=as_rect_k(k), label="D", scale=RECT_SCALE)


def _w_blocks(alpha_tilde, twist: TwistConfig, pot_v: PotentialCoeffs, basis: Basis):
    t12, t23 = as_alpha_pair(alpha_tilde)
    c = basis.components
    m12 = multiplication_block(pot_v, twist.p, c[0], c[1], t12)
    m23 = multiplication_block(pot_v, twist.p_tilde, c[1], c[2], t23)
    return m12, m23


def assemble_H(alpha, alpha_tilde, k: KLike, twist: TwistConfig, pot_u: PotentialCoeffs,
               pot_v: PotentialCoeffs, truncation: Truncation, sector: Optional[int] = None) -> OperatorMatrix:
    """H_k = [[W, (D + k)^*], [D + k, W]] with W built from a_tilde V(pz), a_tilde V(pt z) and adjoints."""
    layers = layer_basis(truncation, twist, sector)
    d = _place(_d_blocks(alpha, k, twist, pot_u, layers), layers)
    m12, m23 = _w_blocks(alpha_tilde, twist, pot_v, layers)
    w = _place({(0, 1): m12, (1, 0): m12.conj().T.tocsr(),
                (1, 2): m23, (2, 1): m23.conj().T.tocsr()}, layers)
    data = np.block([[w, d.conj().T], [d, w]])
    basis = Basis(components=layers.components * 2,
                  labels=("A1", "A2", "A3", "B1", "B2", "B3"))
    return OperatorMatrix(data=data, basis=basis, k=as_rect_k(k), label="H", scale=RECT_SCALE)


def assemble_antichiral(alpha_tilde, k: KLike, twist: TwistConfig, pot_v: PotentialCoeffs,
                        truncation: Truncation) -> OperatorMatrix:
    """
    D_ac,k = [[a12 V(pz),   2Dz + kb,     0           ],
              [2Dzb + k,    (a12 V(pz))*, a23 V(pt z) ],
              [(a23 V)*,    0,            2Dz + kb    ]]
    """
    layers = layer_basis(truncation)
    c = layers.components
    d = dirac_diagonal(c[0], k)
    m12, m23 = _w_blocks(alpha_tilde, twist, pot_v, layers)
    blocks = {
        (0, 0): m12,
        (0, 1): sparse.diags(np.conj(d), format="csr"),
        (1, 0): sparse.diags(d, format="csr"),
        (1, 1): m12.conj().T.tocsr(),
        (1, 2): m23,
        (2, 0): m23.conj().T.tocsr(),
        (2, 2): sparse.diags(np.conj(d), format="csr"),
    }
    return OperatorMatrix(data=_place(blocks, layers), basis=layers, k=as_rect_k(k),
                          label="D_ac", scale=RECT_SCALE)


def antichiral_from_H(H: OperatorMatrix) -> np.ndarray:
    """The off-diagonal block of the row/column reshuffle of H(0, alpha_tilde)."""
    basis = H.basis
    rows = np.concatenate([np.arange(basis.dim)[basis.component_slice(i)] for i in ANTICHIRAL_ROWS])
    cols = np.concatenate([np.arange(basis.dim)[basis.component_slice(j)] for j in ANTICHIRAL_COLS])
    return H.data[np.ix_(rows, cols)]


def assemble_generalized_D(alpha, k: KLike, gp: GeneralizedPotential, truncation: Truncation) -> OperatorMatrix:
    """
    2Dzb + k plus the slot matrix [[W1, a12 U+, X+], [a12 U-, W2, a23 Y+], [X-, a23 Y-, W3]].
    Slots are evaluated at scale 1; their own translation weights fix the mode classes.
    """
    a12, a23 = as_alpha_pair(alpha)
    layers = layer_basis(truncation)
    c = layers.components
    factors = {"U+": a12, "U-": a12, "Y+": a23, "Y-": a23}
    blocks = {(i, i): sparse.diags(dirac_diagonal(c[i], k), format="csr") for i in range(3)}
    for name, pot in gp.slots.items():
        i, j = GeneralizedPotential.POSITIONS[name]
        block = multiplication_block(pot, 1, c[i], c[j], factors.get(name, 1.0))
        blocks[(i, j)] = blocks[(i, j)] + block if (i, j) in blocks else block
    return OperatorMatrix(data=_place(blocks, layers), basis=layers, k=as_rect_k(k),
                          label="D_gen", scale=RECT_SCALE)


# --- Symmetries ---
def translation_exponents(basis: Basis, a: Tuple[int, int], twist: TwistConfig) -> np.ndarray:
    """
    Exponents e with L_a acting as omega^e on each basis vector. Layers carry
    omega^{p(a1+a2)}, 1, omega-bar^{q(a1+a2)}; six-component bases repeat them.
    """
    a1, a2 = a
    layer_phase = (twist.p * (a1 + a2), 0, -twist.q * (a1 + a2))
    out = np.empty(basis.dim, dtype=int)
    for c, comp in enumerate(basis.components):
        modes = basis.mode_array(c)
        sl = basis.component_slice(c)
        out[sl] = layer_phase[c % 3] + modes[:, 0] * a1 + modes[:, 1] * a2
    return np.mod(out, 3)


def translation_operator(basis: Basis, a: Tuple[int, int], twist: TwistConfig) -> np.ndarray:
    return np.diag(OMEGA_POWERS[translation_exponents(basis, a, twist)])


def commutator_defect(op: OperatorMatrix, a: Tuple[int, int], twist: TwistConfig) -> float:
    """max |[op, L_a]|. Phases come from a lookup table, so a commuting pair gives exactly 0."""
    phases = OMEGA_POWERS[translation_exponents(op.basis, a, twist)]
    comm = op.data * (phases[np.newaxis, :] - phases[:, np.newaxis])
    return float(np.max(np.abs(comm))) if comm.size else 0.0


def derived_layer_offsets(op: OperatorMatrix) -> Dict[Tuple[int, int], List[int]]:
    """
    Class offsets (row class - column class, mod 3) of every nonzero
    off-diagonal block of a three-layer matrix assembled on the full box.
    A translation-compatible matrix gives one offset per block.
    """
    out = {}
    basis = op.basis
    for i in range(basis.n_components):
        for j in range(basis.n_components):
            if i == j:
                continue
            block = op.data[basis.component_slice(i), basis.component_slice(j)]
            rows, cols = np.nonzero(block)
            if len(rows) == 0:
                continue
            mi, mj = basis.mode_array(i), basis.mode_array(j)
            diffs = set(np.mod(mi[rows, 0] - mj[cols, 0], 3).tolist())
            diffs |= set(np.mod(mi[rows, 1] - mj[cols, 1], 3).tolist())
            out[(i, j)] = sorted(diffs)
    return out


def _sector_columns(basis: Basis, classes: Sequence[int]) -> np.ndarray:
    idx = []
    for c, comp in enumerate(basis.components):
        cls = classes[c % len(classes)]
        base = basis.offsets[c]
        idx.extend(base + i for i, (m, n) in enumerate(comp) if m % 3 == cls and n % 3 == cls)
    return np.array(idx, dtype=int)


def rotation_sector_basis(basis: Basis, ell: int) -> np.ndarray:
    """
    Orthonormal columns spanning {C u = omega-bar^ell u} with (C c)_x = c_sigma(x).
    The basis must be sigma-closed (hexagonal truncation).
    """
    lam = OMEGA_BAR ** (ell % 3)
    cols = []
    for c, comp in enumerate(basis.components):
        seen = set()
        for mode in comp:
            if mode in seen:
                continue
            orbit = [mode, sigma(*mode), sigma(*sigma(*mode))]
            seen.update(orbit)
            if mode == (0, 0):
                if ell % 3 == 0:
                    vec = np.zeros(basis.dim, dtype=complex)
                    vec[basis.index(c, mode)] = 1.0
                    cols.append(vec)
                continue
            vec = np.zeros(basis.dim, dtype=complex)
            for i, x in enumerate(orbit):
                pos = basis.index(c, x)
                if pos is None:
                    raise ConfigError(f"mode set is not sigma-closed at {x}; use the hexagonal truncation")
                vec[pos] = lam ** i / np.sqrt(3.0)
            cols.append(vec)
    if not cols:
        return np.zeros((basis.dim, 0), dtype=complex)
    return np.column_stack(cols)


def rotation_operator(basis: Basis) -> np.ndarray:
    """Matrix of (C c)_x = c_sigma(x) on a sigma-closed basis."""
    mat = np.zeros((basis.dim, basis.dim), dtype=complex)
    for c, comp in enumerate(basis.components):
        for mode in comp:
            row = basis.index(c, mode)
            col = basis.index(c, sigma(*mode))
            if col is None:
                raise ConfigError(f"mode set is not sigma-closed at {mode}")
            mat[row, col] = 1.0
    return mat


def sector_project(target, basis: Basis, twist: Optional[TwistConfig] = None,
                   translation_class: Optional[int] = None,
                   rotation_weight: Optional[int] = None) -> SectorView:
    """
    Restrict a matrix (as domain: data = M V) or a vector (coordinates V^* v)
    to a translation sector, a rotation sector, or both. An empty sector
    comes back with a zero-column isometry.
    """
    iso = np.eye(basis.dim, dtype=complex)
    inside = np.ones(basis.dim, dtype=bool)
    if translation_class is not None:
        if twist is None:
            raise ConfigError("translation sectors need the twist configuration")
        cols = _sector_columns(basis, layer_classes(twist, translation_class))
        iso = iso[:, cols]
        inside = np.zeros(basis.dim, dtype=bool)
        inside[cols] = True
    if rotation_weight is not None:
        rot = rotation_sector_basis(basis, rotation_weight)
        # sigma preserves the diagonal classes, so each orbit vector is either in or out
        keep = ~np.any((np.abs(rot) > 0) & ~inside[:, np.newaxis], axis=0)
        iso = rot[:, keep]
    if iso.shape[1] == 0:
        logger.warning("empty sector: translation=%s rotation=%s", translation_class, rotation_weight)

    data = None
    if target is not None:
        arr = target.data if isinstance(target, OperatorMatrix) else np.asarray(target)
        data = arr @ iso if arr.ndim == 2 else iso.conj().T @ arr
    return SectorView(isometry=iso, data=data, translation_class=translation_class,
                      rotation_weight=rotation_weight, basis=basis)


def sector_kernel(op: OperatorMatrix, twist: TwistConfig, translation_class: Optional[int],
                  rotation_weight: Optional[int] = 0, count: Optional[int] = None):
    """
    Kernel candidates of op restricted to a sector: SVD of op @ V.
    Returns (ascending singular values in physical units, vectors in the ambient basis).
    """
    view = sector_project(op, op.basis, twist, translation_class, rotation_weight)
    if view.empty:
        return np.zeros(0), np.zeros((op.dim, 0), dtype=complex)
    _, s, vh = linalg.svd(view.data, full_matrices=False)
    order = np.argsort(s)
    s = s[order] / op.scale
    vecs = view.isometry @ vh.conj().T[:, order]
    if count is not None:
        s, vecs = s[:count], vecs[:, :count]
    return s, vecs


# --- Position space ---
def synthesize_position(vector: np.ndarray, basis: Basis, z, k: Optional[KLike] = None) -> np.ndarray:
    """Values of each component at the points z (any shape). Result shape (components, *z.shape)."""
    z = np.asarray(z, dtype=complex)
    y1, y2 = y_from_z(z.ravel())
    out = np.zeros((basis.n_components, y1.size), dtype=complex)
    for c in range(basis.n_components):
        modes = basis.mode_array(c)
        coeffs = np.asarray(vector)[basis.component_slice(c)]
        for start in range(0, y1.size, SYNTH_CHUNK):
            sl = slice(start, start + SYNTH_CHUNK)
            phase = np.outer(y1[sl], modes[:, 0]) + np.outer(y2[sl], modes[:, 1])
            out[c, sl] = np.exp(1j * phase) @ coeffs
    if k is not None:
        k1, k2 = as_rect_k(k)
        out *= np.exp(1j * (k1 * y1 + k2 * y2))[np.newaxis, :]
    return out.reshape((basis.n_components,) + z.shape)


def synthesize_grid(vector: np.ndarray, basis: Basis, M: int) -> np.ndarray:
    """Values on y = 2 pi (i, j)/M, i, j < M, by inverse FFT. Shape (components, M, M)."""
    out = np.zeros((basis.n_components, M, M), dtype=complex)
    for c in range(basis.n_components):
        modes = basis.mode_array(c)
        if len(modes) and 2 * int(np.max(np.abs(modes))) >= M:
            raise ConfigError(f"grid size {M} aliases modes up to {int(np.max(np.abs(modes)))}")
        spec = np.zeros((M, M), dtype=complex)
        np.add.at(spec, (modes[:, 0] % M, modes[:, 1] % M), np.asarray(vector)[basis.component_slice(c)])
        out[c] = np.fft.ifft2(spec) * M * M
    return out


def analyze_grid(values: np.ndarray, basis: Basis) -> np.ndarray:
    """Inverse of synthesize_grid: Fourier coefficients of grid values on the basis modes."""
    M = values.shape[-1]
    vec = np.zeros(basis.dim, dtype=complex)
    for c in range(basis.n_components):
        spec = np.fft.fft2(values[c]) / (M * M)
        modes = basis.mode_array(c)
        vec[basis.component_slice(c)] = spec[modes[:, 0] % M, modes[:, 1] % M]
    return vec


def y_grid(M: int) -> Tuple[np.ndarray, np.ndarray]:
    """The rectangular grid used by synthesize_grid, indexed [i, j]."""
    t = 2 * np.pi * np.arange(M) / M
    return np.meshgrid(t, t, indexing="ij")


# --- Checks ---
def hamiltonian_symmetry_report(alpha, alpha_tilde, k: KLike, twist: TwistConfig, pot_u: PotentialCoeffs,
                                pot_v: PotentialCoeffs, truncation: Truncation, tolerance: float = 1e-10) -> dict:
    """Hermiticity for real alpha_tilde, E -> -E symmetry and singular-value match when alpha_tilde = 0."""
    H = assemble_H(alpha, alpha_tilde, k, twist, pot_u, pot_v, truncation, sector=0)
    indicators = {"hermiticity": H.hermiticity_defect()}
    reasons = []
    t12, t23 = as_alpha_pair(alpha_tilde)
    if t12.imag == 0 and t23.imag == 0 and indicators["hermiticity"] > 1e-12:
        reasons.append(f"H not Hermitian: {indicators['hermiticity']:.3e}")

    chiral = t12 == 0 and t23 == 0
    if chiral:
        evals = np.sort(linalg.eigvalsh(H.data)) / H.scale
        indicators["chiral_symmetry"] = float(np.max(np.abs(evals + evals[::-1])))
        D = assemble_D(alpha, k, twist, pot_u, truncation, sector=0)
        svals = D.singular_values()
        positive = np.sort(evals[evals.size // 2:])
        indicators["singular_match"] = float(np.max(np.abs(positive - svals)))
        for name in ("chiral_symmetry", "singular_match"):
            if indicators[name] > tolerance:
                reasons.append(f"{name} residual {indicators[name]:.3e} exceeds {tolerance:.1e}")

    return {
        "passed": not reasons,
        "chiral": chiral,
        "reasons": reasons,
        "indicators": indicators,
    }


def truncation_convergence(alpha, k: KLike, twist: TwistConfig, pot: PotentialCoeffs,
                           sizes: Sequence[int], count: int = 3) -> dict:
    """Smallest singular values of D(alpha) + k on L^2_0 as N grows, with successive differences."""
    rows = []
    for N in sizes:
        s = assemble_D(alpha, k, twist, pot, Truncation(N), sector=0).singular_values()[:count]
        rows.append((N, s))
        logger.info("N=%d smallest singular values %s", N, np.array2string(s, precision=6))
    diffs = [float(np.max(np.abs(rows[i + 1][1] - rows[i][1]))) for i in range(len(rows) - 1)]
    rates = [diffs[i + 1] / diffs[i] for i in range(len(diffs) - 1) if diffs[i] > 0]
    return {
        "sizes": [N for N, _ in rows],
        "smallest": [s.tolist() for _, s in rows],
        "differences": diffs,
        "rates": rates,
    }


__all__ = [
    "BOX",
    "HEX",
    "ANTICHIRAL_ROWS",
    "ANTICHIRAL_COLS",
    "Truncation",
    "Basis",
    "OperatorMatrix",
    "SectorView",
    "as_rect_k",
    "as_alpha_pair",
    "layer_classes",
    "layer_basis",
    "shift_rows",
    "multiplication_block",
    "dirac_diagonal",
    "assemble_dirac",
    "assemble_multiplication",
    "assemble_D",
    "assemble_H",
    "assemble_antichiral",
    "antichiral_from_H",
    "assemble_generalized_D",
    "translation_exponents",
    "translation_operator",
    "commutator_defect",
    "derived_layer_offsets",
    "rotation_sector_basis",
    "rotation_operator",
    "sector_project",
    "sector_kernel",
    "synthesize_position",
    "synthesize_grid",
    "analyze_grid",
    "y_grid",
    "hamiltonian_symmetry_report",
    "truncation_convergence",
]
