"""Quench spectrum, spectral time evolution and exact time averages.

Sign convention: ``H(h) = H0 - h sum_i sigma^z_i``, so quenching the field by
``dh = h2 - h1`` gives ``H2 = H1 + dh * V`` with ``V = -sum_i sigma^z_i``.
Time is in units where hbar and the nearest-neighbour coupling are 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .eigensolver import (
    EigenSystem,
    LanczosConfig,
    degenerate_clusters,
    dense_spectrum,
    fix_phase,
    ground_state,
    LanczosConvergenceError,
    lanczos_sum_rule,
)
from .hamiltonian import (
    DENSE_MAX_L,
    HamiltonianSpec,
    ObservableOperator,
    build_tam,
    matrix_elements,
    sigma_z_diagonal,
)

log = logging.getLogger(__name__)

# |c_n| below this is treated as exactly zero (outside the initial state's sector)
OVERLAP_FLOOR = 1e-12
EVAL_CHUNK = 1024


class SumRuleError(RuntimeError):
    def __init__(self, message, deficit):
        super().__init__(message)
        self.deficit = deficit


class DegenerateGapError(ValueError):
    pass


@dataclass(frozen=True)
class QuenchSpec:
    pre: HamiltonianSpec
    post: HamiltonianSpec

    def __post_init__(self):
        a, b = self.pre, self.post
        if (a.L, a.kappa, a.boundary) != (b.L, b.kappa, b.boundary):
            raise ValueError("pre- and post-quench Hamiltonians may differ only in h")

    @classmethod
    def field_quench(cls, L: int, kappa: float, h1: float, dh: float) -> "QuenchSpec":
        pre = HamiltonianSpec(L, kappa, h1)
        return cls(pre, pre.with_field(h1 + dh))

    @property
    def delta(self) -> float:
        return self.post.h - self.pre.h

    def potential(self) -> ObservableOperator:
        """The quench potential ``V = -sum_i sigma^z_i``."""
        return ObservableOperator("quench_potential", self.pre.L, diagonal=-sigma_z_diagonal(self.pre.L))


@dataclass(frozen=True, eq=False)
class QuenchSpectrum:
    energies: np.ndarray
    overlaps: np.ndarray
    weights: np.ndarray
    deficit: float
    ground_energy_pre: float
    eigensystem: EigenSystem = field(repr=False)
    initial_state: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.energies)

    @property
    def purity(self) -> float:
        return float(np.sum(self.weights**2))

    def largest(self, k: int) -> np.ndarray:
        """Indices of the ``k`` largest weights, in decreasing order."""
        return np.argsort(-self.weights, kind="stable")[:k]


def _project_clusters(eig: EigenSystem, psi0: np.ndarray) -> EigenSystem:
    """Collapse degenerate clusters onto the direction of ``psi0``'s projection."""
    energies, vectors = [], []
    for cluster in degenerate_clusters(eig.energies):
        block = eig.vectors[:, cluster]
        proj = block @ (block.T @ psi0)
        norm = np.linalg.norm(proj)
        if norm <= OVERLAP_FLOOR:
            continue
        energies.append(float(np.mean(eig.energies[cluster])))
        vectors.append(proj / norm)
    vectors = fix_phase(np.column_stack(vectors))
    energies = np.array(energies)
    return EigenSystem(energies, vectors, np.zeros(len(energies)), eig.source)


def _spectrum_from(eig, psi0, e_pre) -> QuenchSpectrum:
    c = eig.vectors.T @ psi0
    p = c * c
    deficit = 1.0 - float(np.sum(p))
    return QuenchSpectrum(eig.energies, c, p, deficit, e_pre, eig, psi0)


def quench_spectrum(
    q: QuenchSpec,
    sum_rule_accuracy: float = 1e-4,
    method: str = "auto",
    lanczos: LanczosConfig | None = None,
) -> QuenchSpectrum:
    """Overlaps of the pre-quench ground state with post-quench eigenstates.

    ``method='dense'`` keeps every eigenlevel with nonzero overlap;
    ``'lanczos'`` seeds Lanczos on H2 with the initial state and grows the
    Krylov space until the converged Ritz pairs satisfy
    ``1 - sum p_n <= sum_rule_accuracy``.
    """
    if not 0 < sum_rule_accuracy < 0.1:
        raise ValueError("sum_rule_accuracy must lie in (0, 0.1)")
    if method == "auto":
        method = "dense" if q.pre.L <= DENSE_MAX_L else "lanczos"
    base = lanczos or LanczosConfig()
    H1, H2 = build_tam(q.pre), build_tam(q.post)
    e_pre, psi0 = ground_state(H1, base)

    if method == "dense":
        eig = _project_clusters(dense_spectrum(H2), psi0)
        qs = _spectrum_from(eig, psi0, e_pre)
        if qs.deficit > sum_rule_accuracy:
            raise SumRuleError(f"dense sum rule deficit {qs.deficit:.3e}", qs.deficit)
        return qs
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")

    try:
        eig = lanczos_sum_rule(H2, psi0, sum_rule_accuracy, base)
    except LanczosConvergenceError as err:
        raise SumRuleError(
            f"sum rule not reached within max_krylov={base.max_krylov}: {err}", getattr(err, "deficit", 1.0)
        ) from err
    qs = _spectrum_from(eig, psi0, e_pre)
    if qs.deficit > sum_rule_accuracy:
        raise SumRuleError(f"sum rule deficit {qs.deficit:.3e} above {sum_rule_accuracy:g}", qs.deficit)
    return qs


@dataclass(frozen=True)
class PerturbativeWeights:
    weights: np.ndarray
    # upper estimate of the second-order weight carried by states not retained
    remainder: float


def _ground_couplings(eig: EigenSystem, V: ObservableOperator):
    e = np.asarray(eig.energies)
    v0 = eig.vectors[:, 0]
    Vv0 = V(v0)
    coupling = eig.vectors.T @ Vv0
    gaps = e - e[0]
    width = max(float(e[-1] - e[0]), 1.0)
    for n in range(1, len(e)):
        if gaps[n] <= 1e-10 * width:
            raise DegenerateGapError(f"states 0 and {n} are degenerate (gap {gaps[n]:.3e})")
    var_v = float(Vv0 @ Vv0) - float(v0 @ Vv0) ** 2
    missing = max(var_v - float(np.sum(coupling[1:] ** 2)), 0.0)
    return gaps, coupling, missing


def perturbative_weights(eig: EigenSystem, V: ObservableOperator, delta: float) -> PerturbativeWeights:
    """Second-order weights of the pre-quench ground state on the eigenstates of H2."""
    gaps, coupling, missing = _ground_couplings(eig, V)
    p = np.zeros(len(gaps))
    p[1:] = delta**2 * coupling[1:] ** 2 / gaps[1:] ** 2
    p[0] = 1.0 - np.sum(p[1:])
    remainder = delta**2 * missing / gaps[-1] ** 2 if len(gaps) > 1 else 0.0
    return PerturbativeWeights(p, float(remainder))


@dataclass(frozen=True, eq=False)
class ObservableSeries:
    """``O(t) = mean + sum_j coefficients[j] * cos(frequencies[j] * t)``."""

    mean: float
    frequencies: np.ndarray
    coefficients: np.ndarray
    deficit: float = 0.0
    name: str = ""

    @property
    def amplitude_terms(self) -> list[tuple[float, float]]:
        return list(zip(self.frequencies.tolist(), self.coefficients.tolist()))

    def __call__(self, t):
        return evaluate(self, t)


def _merge_terms(omega, coeff, width, mean):
    omega = np.asarray(omega, dtype=float).ravel()
    coeff = np.asarray(coeff, dtype=float).ravel()
    if omega.size == 0:
        return mean, np.empty(0), np.empty(0)
    order = np.argsort(omega, kind="stable")
    omega, coeff = omega[order], coeff[order]
    tol = 1e-10 * (width if width > 0 else 1.0)
    starts = np.concatenate([[0], np.nonzero(np.diff(omega) > tol)[0] + 1])
    merged_c = np.add.reduceat(coeff, starts)
    counts = np.diff(np.append(starts, omega.size))
    merged_w = np.add.reduceat(omega, starts) / counts
    static = merged_w <= tol
    mean += float(np.sum(merged_c[static]))
    keep = ~static & (merged_c != 0.0)
    return mean, merged_w[keep], merged_c[keep]


def _series_from_matrix(qs: QuenchSpectrum, omat: np.ndarray, name: str) -> ObservableSeries:
    c, e = qs.overlaps, qs.energies
    mean = float(np.sum(qs.weights * np.diag(omat)))
    n, m = np.triu_indices(len(e), k=1)
    coeff = 2.0 * omat[n, m] * c[n] * c[m]
    omega = np.abs(e[m] - e[n])
    width = float(e.max() - e.min()) if len(e) else 0.0
    mean, omega, coeff = _merge_terms(omega, coeff, width, mean)
    return ObservableSeries(mean, omega, coeff, qs.deficit, name)


def observable_series(qs: QuenchSpectrum, eig: EigenSystem, O: ObservableOperator, name: str = "") -> ObservableSeries:
    """Cosine series of ``<psi0(t)|O|psi0(t)>`` over the retained eigenstates."""
    if len(eig) != len(qs) or not np.allclose(eig.energies, qs.energies, rtol=0, atol=1e-12):
        raise ValueError("eigensystem and quench spectrum retain different states")
    return _series_from_matrix(qs, matrix_elements(O, eig.vectors), name or O.kind)


def loschmidt_series(qs: QuenchSpectrum) -> ObservableSeries:
    """Cosine series of the Loschmidt echo ``|<psi0|exp(-i t H2)|psi0>|^2``."""
    omat = np.outer(qs.overlaps, qs.overlaps)
    return _series_from_matrix(qs, omat, "loschmidt_echo")


def evaluate(series: ObservableSeries, t):
    """Evaluate the series at time(s) ``t``; array input is processed in fixed-size chunks."""
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(t.shape, dtype=float)
    w, x = series.frequencies, series.coefficients
    flat_t, flat_out = t.ravel(), out.reshape(-1)
    for start in range(0, flat_t.size, EVAL_CHUNK):
        block = flat_t[start : start + EVAL_CHUNK]
        flat_out[start : start + block.size] = series.mean + np.sum(np.cos(np.multiply.outer(block, w)) * x, axis=1)
    return float(out[0]) if scalar else out


def exact_moments(series: ObservableSeries) -> tuple[float, float]:
    """Infinite-time mean and variance of the series (frequencies already merged)."""
    return series.mean, 0.5 * float(np.sum(series.coefficients**2))


def fidelity(q: QuenchSpec, lanczos: LanczosConfig | None = None) -> float:
    """Ground-state fidelity ``|<ground(H2)|ground(H1)>|``."""
    _, g1 = ground_state(build_tam(q.pre), lanczos)
    _, g2 = ground_state(build_tam(q.post), lanczos)
    return float(min(abs(g1 @ g2), 1.0))
