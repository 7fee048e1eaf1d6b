"""Dense and Lanczos eigensolvers for :class:`HamiltonianOperator`."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .hamiltonian import DENSE_MAX_L, HamiltonianOperator, apply, reflect, spin_flip, translate

log = logging.getLogger(__name__)

GROUND_STATE_SEED = 0x5EED_7A11


class LanczosConvergenceError(RuntimeError):
    """Raised when the requested Ritz pairs do not converge within ``max_krylov``."""

    def __init__(self, message, residuals=None, energies=None):
        super().__init__(message)
        self.residuals = residuals
        self.energies = energies


@dataclass(frozen=True, eq=False)
class EigenSystem:
    energies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors, shape (2**L, k)
    residuals: np.ndarray
    source: str

    def __len__(self) -> int:
        return len(self.energies)

    def vector(self, n: int) -> np.ndarray:
        return self.vectors[:, n]


@dataclass(frozen=True)
class LanczosConfig:
    target_count: int = 1
    max_krylov: int = 400
    residual_tol: float = 1e-10
    reorthogonalize: bool = True
    seed_vector: np.ndarray | None = field(default=None, repr=False)
    rng_seed: int = GROUND_STATE_SEED
    # seeded runs drop Ritz vectors whose overlap with the seed is below this
    spurious_overlap: float = 1e-10
    check_every: int = 5

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")
        if self.target_count < 1:
            raise ValueError("target_count must be >= 1")
        if self.max_krylov < self.target_count:
            raise ValueError("max_krylov must be >= target_count")


def fix_phase(vectors: np.ndarray) -> np.ndarray:
    """Flip signs so each column's largest-magnitude entry is positive.

    Ties (within 1e-10 relative) resolve to the lowest basis index.
    """
    vectors = np.array(vectors, dtype=float, copy=True)
    single = vectors.ndim == 1
    if single:
        vectors = vectors[:, None]
    mags = np.abs(vectors)
    peak = mags.max(axis=0)
    first = np.argmax(mags >= peak * (1 - 1e-10), axis=0)
    signs = np.sign(vectors[first, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors *= signs
    return vectors[:, 0] if single else vectors


def _residuals(H: HamiltonianOperator, energies, vectors) -> np.ndarray:
    return np.linalg.norm(apply(H, vectors) - vectors * energies, axis=0)


def dense_spectrum(H: HamiltonianOperator, count: int | None = None) -> EigenSystem:
    """Full diagonalization (or the lowest ``count`` pairs) of the dense matrix."""
    if H.spec.L > DENSE_MAX_L:
        raise MemoryError(f"dense_spectrum refused for L={H.spec.L} > {DENSE_MAX_L}")
    mat = H.to_dense()
    if count is None:
        energies, vectors = np.linalg.eigh(mat)
    else:
        energies, vectors = scipy.linalg.eigh(mat, subset_by_index=[0, count - 1])
    vectors = fix_phase(vectors)
    return EigenSystem(energies, vectors, _residuals(H, energies, vectors), "dense")


def degenerate_clusters(energies: np.ndarray, rel_tol: float = 1e-10) -> list[np.ndarray]:
    """Group ascending energies closer than ``rel_tol * spectral width``."""
    energies = np.asarray(energies)
    if energies.size == 0:
        return []
    width = max(float(energies[-1] - energies[0]), 1.0)
    breaks = np.nonzero(np.diff(energies) > rel_tol * width)[0] + 1
    return np.split(np.arange(energies.size), breaks)


def _krylov_run(H, start, locked, cfg: LanczosConfig, select):
    """One Lanczos run from ``start`` in the orthogonal complement of ``locked``.

    At every checkpoint ``select(theta, s0, est, done)`` sees the Ritz values,
    the Ritz vectors' overlaps with the normalized start vector, and residual
    estimates; it returns the Ritz indices to keep, or None to continue.
    Returns (values, vectors, start overlaps).
    """
    n = H.dimension
    n_free = n - (locked.shape[1] if locked is not None else 0)
    max_m = min(cfg.max_krylov, n_free)
    basis = np.empty((min(max_m, 64), n))
    alpha, beta = [], []

    def deflate(w):
        if locked is not None and locked.shape[1]:
            w -= locked @ (locked.T @ w)
        return w

    v = deflate(np.array(start, dtype=float))
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("Lanczos start vector is zero in the active subspace")
    basis[0] = v / norm
    scale = 1.0
    m = 0
    while True:
        w = deflate(apply(H, basis[m]))
        a = float(basis[m] @ w)
        w -= a * basis[m]
        if m > 0:
            w -= beta[-1] * basis[m - 1]
        if cfg.reorthogonalize:
            for _ in range(2):
                w -= basis[: m + 1].T @ (basis[: m + 1] @ w)
                w = deflate(w)
        alpha.append(a)
        b = float(np.linalg.norm(w))
        scale = max(scale, abs(a), b)
        m += 1
        exhausted = b < 1e-12 * scale
        done = exhausted or m >= max_m
        if done or m % cfg.check_every == 0:
            theta, s = scipy.linalg.eigh_tridiagonal(np.array(alpha), np.array(beta))
            est = np.zeros(m) if exhausted else np.abs(b * s[-1])
            idx = select(theta, s[0], est, done)
            if idx is not None:
                idx = np.asarray(idx, dtype=int)
                return theta[idx], basis[:m].T @ s[:, idx], s[0, idx]
            if done:
                raise LanczosConvergenceError(
                    f"Lanczos did not converge within {m} Krylov vectors "
                    f"(residual estimates {est[: min(m, 8)]})",
                    residuals=est,
                    energies=theta,
                )
        beta.append(b)
        if m >= basis.shape[0]:
            grown = np.empty((min(2 * basis.shape[0], max_m), n))
            grown[:m] = basis[:m]
            basis = grown
        basis[m] = w / b


def _check_residuals(H, energies, vectors, tol):
    res = _residuals(H, energies, vectors)
    if np.any(res > tol):
        raise LanczosConvergenceError(
            f"{int(np.sum(res > tol))} Ritz pairs above tolerance {tol:g} (worst residual {res.max():.3e})",
            residuals=res,
            energies=energies,
        )
    return res


def _seeded_lowest(cfg: LanczosConfig, want: int):
    def select(theta, s0, est, done):
        genuine = np.nonzero(np.abs(s0) > cfg.spurious_overlap)[0]
        converged = est <= 0.5 * cfg.residual_tol
        lowest = genuine[:want]
        if len(lowest) == want and np.all(converged[lowest]):
            return lowest
        reached = genuine[converged[genuine]]
        # every state reachable from the seed has converged
        if 1.0 - float(np.sum(s0[reached] ** 2)) < 1e-13:
            return reached[:want]
        return None

    return select


def lanczos_lowest(H: HamiltonianOperator, cfg: LanczosConfig) -> EigenSystem:
    """Lowest Ritz pairs by Lanczos with full reorthogonalization.

    With ``cfg.seed_vector`` the iteration stays in the Krylov space of the
    seed, so only eigenstates with nonzero seed overlap are produced (one per
    degenerate level, fewer than ``target_count`` if the seed reaches fewer).
    Ritz vectors that round-off pulls in from outside that space are dropped.
    Without a seed, a deterministic random start is used and converged vectors
    are locked and deflated so degenerate copies are found too.
    """
    n = H.dimension
    if n < cfg.target_count:
        raise ValueError(f"dimension {n} smaller than target_count {cfg.target_count}")
    if cfg.seed_vector is not None:
        seed = np.asarray(cfg.seed_vector, dtype=float)
        if seed.shape != (n,):
            raise ValueError("seed vector has wrong dimension")
        if not np.any(seed):
            raise ValueError("seed vector is zero")
        energies, vectors, _ = _krylov_run(H, seed, None, cfg, _seeded_lowest(cfg, cfg.target_count))
        res = _check_residuals(H, energies, vectors, cfg.residual_tol)
        return EigenSystem(energies, fix_phase(vectors), res, "lanczos")

    rng = np.random.default_rng(cfg.rng_seed)
    locked_vals = np.empty(0)
    locked_vecs = np.empty((n, 0))
    k = cfg.target_count
    while locked_vecs.shape[1] < n:
        want = k if locked_vals.size < k else 1

        def select(theta, s0, est, done, want=want):
            if np.all(est[:want] <= 0.5 * cfg.residual_tol) or (done and np.all(est[:want] <= cfg.residual_tol)):
                return np.arange(min(want, len(theta)))
            return None

        energies, vectors, _ = _krylov_run(H, rng.standard_normal(n), locked_vecs, cfg, select)
        _check_residuals(H, energies, vectors, cfg.residual_tol)
        if locked_vals.size >= k:
            cutoff = locked_vals[k - 1]
            new = energies <= cutoff + 1e-10 * max(1.0, abs(cutoff))
            if not np.any(new):
                break
            energies, vectors = energies[new], vectors[:, new]
        locked_vecs = np.column_stack([locked_vecs, vectors])
        locked_vals = np.concatenate([locked_vals, energies])
        order = np.argsort(locked_vals, kind="stable")
        locked_vals, locked_vecs = locked_vals[order], locked_vecs[:, order]

    vals, vecs = _rayleigh_ritz(H, locked_vecs[:, :k])
    vecs = fix_phase(vecs)
    return EigenSystem(vals, vecs, _residuals(H, vals, vecs), "lanczos")


def lanczos_sum_rule(H: HamiltonianOperator, seed: np.ndarray, accuracy: float, cfg: LanczosConfig) -> EigenSystem:
    """Converged Ritz pairs of a seeded run, grown until they carry ``1 - accuracy`` of the seed's weight.

    Raises :class:`LanczosConvergenceError` (with ``deficit`` set) when
    ``cfg.max_krylov`` is reached first.
    """
    seed = np.asarray(seed, dtype=float)
    state = {}

    def select(theta, s0, est, done):
        keep = np.nonzero((np.abs(s0) > cfg.spurious_overlap) & (est <= 0.5 * cfg.residual_tol))[0]
        state["deficit"] = 1.0 - float(np.sum(s0[keep] ** 2))
        if state["deficit"] <= accuracy:
            return keep
        return None

    try:
        energies, vectors, _ = _krylov_run(H, seed, None, cfg, select)
    except LanczosConvergenceError as err:
        err.deficit = state.get("deficit", 1.0)
        raise
    res = _check_residuals(H, energies, vectors, cfg.residual_tol)
    return EigenSystem(energies, fix_phase(vectors), res, "lanczos")


def _rayleigh_ritz(H, vectors):
    """Diagonalize H in span(vectors); cleans up mixing inside degenerate clusters."""
    q, _ = np.linalg.qr(vectors)
    small = q.T @ apply(H, q)
    vals, rot = np.linalg.eigh(0.5 * (small + small.T))
    return vals, q @ rot


def symmetric_seed(L: int, rng_seed: int = GROUND_STATE_SEED) -> np.ndarray:
    """Deterministic random vector in the spin-flip-even, reflection-even, zero-momentum sector.

    This is the sector of the TAM ground state and of everything ``sum_i sigma^z_i``
    connects it to.
    """
    rng = np.random.default_rng(rng_seed)
    v = rng.standard_normal(1 << L)
    v = v + spin_flip(v)
    v = v + reflect(v)
    acc = v.copy()
    shifted = v
    for _ in range(L - 1):
        shifted = translate(shifted)
        acc += shifted
    return acc / np.linalg.norm(acc)


def ground_state(H: HamiltonianOperator, cfg: LanczosConfig | None = None) -> tuple[float, np.ndarray]:
    """Ground energy and phase-fixed ground state (dense for small L, Lanczos otherwise)."""
    if H.spec.L <= DENSE_MAX_L:
        eig = dense_spectrum(H, count=1)
    else:
        base = cfg or LanczosConfig()
        cfg = LanczosConfig(
            target_count=1,
            max_krylov=base.max_krylov,
            residual_tol=base.residual_tol,
            seed_vector=symmetric_seed(H.spec.L, base.rng_seed),
            rng_seed=base.rng_seed,
        )
        eig = lanczos_lowest(H, cfg)
    return float(eig.energies[0]), eig.vectors[:, 0].copy()
