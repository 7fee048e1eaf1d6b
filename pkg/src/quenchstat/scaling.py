"""Finite-size scaling probes for weights, fidelity and matrix elements."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .eigensolver import EigenSystem, LanczosConfig, lanczos_lowest, symmetric_seed
from .hamiltonian import HamiltonianSpec, ObservableOperator, build_tam, sigma_z_site, sigma_z_total
from .quench import QuenchSpec, _ground_couplings, fidelity, quench_spectrum


@dataclass(frozen=True)
class CriticalExponents:
    """Exponents of a critical point; ``delta_V`` defaults to ``d + zeta - 1/nu``."""

    d: float
    zeta: float
    nu: float
    delta_V: float | None = None

    def __post_init__(self):
        if min(self.d, self.zeta, self.nu) <= 0:
            raise ValueError("exponents must be positive")
        derived = self.d + self.zeta - 1.0 / self.nu
        if self.delta_V is None:
            object.__setattr__(self, "delta_V", derived)
        elif abs(self.delta_V - derived) > 1e-12:
            raise ValueError(f"delta_V={self.delta_V} inconsistent with d + zeta - 1/nu = {derived}")
        if self.delta_V <= 0:
            raise ValueError("delta_V must be positive")

    @classmethod
    def ising(cls) -> "CriticalExponents":
        return cls(d=1.0, zeta=1.0, nu=1.0)

    @property
    def alpha(self) -> float:
        """Low-energy exponent of ``|<0|V|n>|^2`` as a function of excitation energy."""
        return 2.0 * (self.delta_V - self.d) / self.zeta

    @property
    def weight_exponent(self) -> float:
        return 2.0 / self.nu

    @property
    def energy_weight_exponent(self) -> float:
        return -2.0 / (self.zeta * self.nu)

    def fidelity_exponent(self, regime: str) -> float:
        if regime == "regular":
            return self.d
        if regime == "critical":
            return 2.0 * (self.d + self.zeta - self.delta_V)
        raise ValueError(f"unknown regime {regime!r}")

    @property
    def intensive_matrix_element_exponent(self) -> float:
        return -self.delta_V

    @property
    def extensive_matrix_element_exponent(self) -> float:
        return self.d - self.delta_V


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares fit of ``log y = log amplitude + exponent * log L``."""

    points: tuple[tuple[float, float], ...]
    exponent: float
    amplitude: float
    r_squared: float
    label: str = ""

    def predict(self, size):
        return self.amplitude * np.asarray(size, dtype=float) ** self.exponent


def power_law_fit(points, label: str = "") -> ScalingFit:
    pts = tuple((float(x), float(y)) for x, y in points)
    if len(pts) < 3:
        raise ValueError("power-law fit needs at least 3 points")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive sizes and values")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (intercept + slope * lx)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    if ss_tot <= 1e-28:
        r2 = 1.0
        slope = 0.0 if abs(slope) < 1e-12 else slope
    else:
        r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return ScalingFit(pts, float(slope), float(math.exp(intercept)), float(r2), label)


@dataclass(frozen=True)
class Susceptibility:
    value: float  # chi / dlambda^2 over the retained states
    remainder: float  # matrix-element weight not carried by retained states, over the largest retained gap^2


def fidelity_susceptibility(eig: EigenSystem, V: ObservableOperator) -> Susceptibility:
    gaps, coupling, missing = _ground_couplings(eig, V)
    value = float(np.sum(coupling[1:] ** 2 / gaps[1:] ** 2))
    remainder = missing / gaps[-1] ** 2 if len(gaps) > 1 else 0.0
    return Susceptibility(value, float(remainder))


@dataclass(frozen=True)
class ProbeResult:
    fit: ScalingFit
    details: dict = field(default_factory=dict)


def weight_scaling_probe(kappa, h_c, dh, sizes, sum_rule_accuracy=5e-3, lanczos=None) -> ProbeResult:
    """Fit the first excited weight ``p_1`` (energy order) against L."""
    pts, info = [], {}
    for L in sizes:
        qs = quench_spectrum(QuenchSpec.field_quench(L, kappa, h_c, dh), sum_rule_accuracy, lanczos=lanczos)
        pts.append((L, float(qs.weights[1])))
        info[L] = {"weights": qs.weights[:6].tolist(), "deficit": qs.deficit, "gap": float(qs.energies[1] - qs.energies[0])}
    return ProbeResult(power_law_fit(pts, "p1"), info)


def fidelity_scaling_probe(kappa, h1, dh, sizes, regime="regular", lanczos=None) -> ProbeResult:
    """Fit ``-ln F`` against L."""
    if dh == 0:
        raise ValueError("fidelity scaling needs a nonzero quench")
    CriticalExponents.ising().fidelity_exponent(regime)
    pts, info = [], {}
    for L in sizes:
        F = fidelity(QuenchSpec.field_quench(L, kappa, h1, dh), lanczos)
        pts.append((L, -math.log(F)))
        info[L] = {"fidelity": F}
    return ProbeResult(power_law_fit(pts, f"-lnF ({regime})"), info)


def sector_states(spec: HamiltonianSpec, count: int = 2, lanczos: LanczosConfig | None = None) -> EigenSystem:
    """Lowest eigenstates in the ground state's symmetry sector (seeded Lanczos)."""
    base = lanczos or LanczosConfig()
    cfg = LanczosConfig(
        target_count=count,
        max_krylov=base.max_krylov,
        residual_tol=base.residual_tol,
        seed_vector=symmetric_seed(spec.L, base.rng_seed),
    )
    return lanczos_lowest(build_tam(spec), cfg)


def matrix_element_scaling_probe(kappa, h_c, sizes, extensive=False, site=0, lanczos=None) -> ProbeResult:
    """Fit ``|<0|sigma^z_site|1>|`` (or the extensive ``sum_i sigma^z_i``) against L."""
    pts, info = [], {}
    for L in sizes:
        eig = sector_states(HamiltonianSpec(L, kappa, h_c), 2, lanczos)
        O = sigma_z_total(L) if extensive else sigma_z_site(L, site)
        value = abs(float(eig.vectors[:, 0] @ O(eig.vectors[:, 1])))
        pts.append((L, value))
        info[L] = {"gap": float(eig.energies[1] - eig.energies[0])}
    label = "|<0|sum sz|1>|" if extensive else f"|<0|sz_{site}|1>|"
    return ProbeResult(power_law_fit(pts, label), info)
