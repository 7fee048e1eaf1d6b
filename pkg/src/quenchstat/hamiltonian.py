"""TAM (transverse axial next-nearest-neighbour Ising) chain on the computational basis.

States are real vectors of length ``2**L`` indexed by bitstrings; bit ``i`` is
site ``i`` and a clear bit means ``sigma^z_i = +1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DENSE_MAX_L = 12


@dataclass(frozen=True)
class HamiltonianSpec:
    """Couplings of ``H = -sum_i (sx_i sx_{i+1} - kappa sx_i sx_{i+2} + h sz_i)``."""

    L: int
    kappa: float = 0.0
    h: float = 0.0
    boundary: str = "periodic"

    def __post_init__(self):
        if not isinstance(self.L, (int, np.integer)) or self.L < 3:
            raise ValueError(f"L must be an integer >= 3, got {self.L!r}")
        if not (math.isfinite(self.kappa) and math.isfinite(self.h)):
            raise ValueError("couplings must be finite")
        if self.boundary != "periodic":
            raise ValueError("only periodic boundary conditions are supported")

    @property
    def dimension(self) -> int:
        return 1 << self.L

    def with_field(self, h: float) -> "HamiltonianSpec":
        return HamiltonianSpec(self.L, self.kappa, h, self.boundary)


def _popcount(idx: np.ndarray, L: int) -> np.ndarray:
    count = np.zeros_like(idx)
    for i in range(L):
        count += (idx >> i) & 1
    return count


def sigma_z_diagonal(L: int, site: int | None = None) -> np.ndarray:
    """Diagonal of ``sigma^z_site`` (or of the total ``sum_i sigma^z_i`` when site is None)."""
    idx = np.arange(1 << L, dtype=np.int64)
    if site is None:
        return (L - 2 * _popcount(idx, L)).astype(float)
    if not 0 <= site < L:
        raise ValueError(f"site {site} outside chain of length {L}")
    return 1.0 - 2.0 * ((idx >> site) & 1)


@dataclass(frozen=True, eq=False)
class HamiltonianOperator:
    """Matrix-free real symmetric TAM operator."""

    spec: HamiltonianSpec
    _diag: np.ndarray = field(repr=False)
    # (flip mask, amplitude) for every sx sx term, in bond order
    _flips: tuple = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def shape(self) -> tuple[int, int]:
        return (self.dimension, self.dimension)

    @property
    def dtype(self):
        return np.dtype(float)

    def matvec(self, v: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        return apply(self, v, out=out)

    def __matmul__(self, v):
        return apply(self, np.asarray(v, dtype=float))

    def to_dense(self) -> np.ndarray:
        """Materialize the matrix; refused above ``DENSE_MAX_L`` sites."""
        if self.spec.L > DENSE_MAX_L:
            raise MemoryError(f"dense matrix refused for L={self.spec.L} > {DENSE_MAX_L}")
        n = self.dimension
        idx = np.arange(n)
        mat = np.zeros((n, n))
        mat[idx, idx] = self._diag
        for mask, amp in self._flips:
            mat[idx, idx ^ mask] += amp
        return mat

    def as_linear_operator(self):
        from scipy.sparse.linalg import LinearOperator

        return LinearOperator(self.shape, matvec=self.matvec, dtype=float)


def build_tam(spec: HamiltonianSpec) -> HamiltonianOperator:
    L = spec.L
    flips = []
    for i in range(L):
        flips.append(((1 << i) | (1 << ((i + 1) % L)), -1.0))
    if spec.kappa != 0.0:
        for i in range(L):
            flips.append(((1 << i) | (1 << ((i + 2) % L)), float(spec.kappa)))
    diag = -spec.h * sigma_z_diagonal(L)
    return HamiltonianOperator(spec, diag, tuple(flips))


def apply(H: HamiltonianOperator, v: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Return ``H @ v``. ``v`` may be a vector or a ``(2**L, k)`` block of columns."""
    v = np.asarray(v)
    n = H.dimension
    if v.shape[0] != n:
        raise ValueError(f"vector length {v.shape[0]} does not match dimension {n}")
    diag = H._diag if v.ndim == 1 else H._diag[:, None]
    if out is None:
        out = diag * v
    else:
        np.multiply(diag, v, out=out)
    idx = np.arange(n)
    for mask, amp in H._flips:
        out += amp * v[idx ^ mask]
    return out


# --- observables -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ObservableOperator:
    """Real symmetric observable acting on the 2**L dimensional space.

    Use the constructors :func:`sigma_z_site`, :func:`sigma_z_total`,
    :func:`projector`, :func:`identity` and :func:`tam_observable`.
    """

    kind: str
    L: int
    diagonal: np.ndarray | None = field(default=None, repr=False)
    vector: np.ndarray | None = field(default=None, repr=False)
    hamiltonian: HamiltonianOperator | None = field(default=None, repr=False)
    site: int | None = None

    @property
    def dimension(self) -> int:
        return 1 << self.L

    @property
    def is_diagonal(self) -> bool:
        return self.diagonal is not None

    def __call__(self, v: np.ndarray) -> np.ndarray:
        """Apply the observable to a vector or a block of column vectors."""
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.dimension:
            raise ValueError(f"vector length {v.shape[0]} does not match dimension {self.dimension}")
        if self.diagonal is not None:
            return (self.diagonal if v.ndim == 1 else self.diagonal[:, None]) * v
        if self.vector is not None:
            return np.multiply.outer(self.vector, self.vector @ v)
        return apply(self.hamiltonian, v)

    def spectral_bounds(self) -> tuple[float, float]:
        """(min, max) eigenvalue; exact for diagonal and projector kinds."""
        if self.diagonal is not None:
            return float(self.diagonal.min()), float(self.diagonal.max())
        if self.vector is not None:
            return 0.0, float(self.vector @ self.vector)
        raise NotImplementedError("spectral bounds of a Hamiltonian observable require diagonalization")


def sigma_z_site(L: int, site: int) -> ObservableOperator:
    return ObservableOperator("sigma_z_site", L, diagonal=sigma_z_diagonal(L, site), site=site)


def sigma_z_total(L: int) -> ObservableOperator:
    return ObservableOperator("sigma_z_total", L, diagonal=sigma_z_diagonal(L))


def identity(L: int) -> ObservableOperator:
    return ObservableOperator("identity", L, diagonal=np.ones(1 << L))


def projector(state: np.ndarray) -> ObservableOperator:
    state = np.asarray(state, dtype=float)
    L = int(state.size).bit_length() - 1
    if state.ndim != 1 or (1 << L) != state.size:
        raise ValueError("projector state must be a vector of length 2**L")
    return ObservableOperator("projector", L, vector=state.copy())


def tam_observable(H: HamiltonianOperator) -> ObservableOperator:
    return ObservableOperator("tam_hamiltonian", H.spec.L, hamiltonian=H)


def expectation(O: ObservableOperator, v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    if v.shape != (O.dimension,):
        raise ValueError(f"vector shape {v.shape} does not match dimension {O.dimension}")
    if O.diagonal is not None:
        return float(O.diagonal @ (v * v))
    if O.vector is not None:
        return float((O.vector @ v) ** 2)
    return float(v @ apply(O.hamiltonian, v))


def matrix_element(O: ObservableOperator, u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (O.dimension,) or v.shape != (O.dimension,):
        raise ValueError("vector shapes do not match observable dimension")
    if O.vector is not None:
        return float((u @ O.vector) * (O.vector @ v))
    return float(u @ O(v))


def matrix_elements(O: ObservableOperator, vectors: np.ndarray) -> np.ndarray:
    """Matrix ``<n|O|m>`` for the columns of ``vectors`` (shape ``(2**L, k)``)."""
    vectors = np.asarray(vectors, dtype=float)
    if O.vector is not None:
        proj = O.vector @ vectors
        return np.outer(proj, proj)
    m = vectors.T @ O(vectors)
    return 0.5 * (m + m.T)


def spin_flip(v: np.ndarray) -> np.ndarray:
    """Apply ``P_z = prod_i sigma^z_i`` (sign by bitstring parity)."""
    v = np.asarray(v)
    L = v.shape[0].bit_length() - 1
    parity = _popcount(np.arange(v.shape[0], dtype=np.int64), L) & 1
    return np.where(parity == 1, -v, v)


def translate(v: np.ndarray, shift: int = 1) -> np.ndarray:
    """Cyclically relabel sites ``i -> i + shift`` (mod L)."""
    v = np.asarray(v)
    L = v.shape[0].bit_length() - 1
    shift %= L
    idx = np.arange(v.shape[0], dtype=np.int64)
    mask = (1 << L) - 1
    rotated = ((idx << shift) | (idx >> (L - shift))) & mask
    out = np.empty_like(v)
    out[rotated] = v[idx]
    return out


def reflect(v: np.ndarray) -> np.ndarray:
    """Relabel sites ``i -> L - 1 - i``."""
    v = np.asarray(v)
    L = v.shape[0].bit_length() - 1
    idx = np.arange(v.shape[0], dtype=np.int64)
    mirrored = np.zeros_like(idx)
    for i in range(L):
        mirrored |= ((idx >> i) & 1) << (L - 1 - i)
    return v[mirrored]
