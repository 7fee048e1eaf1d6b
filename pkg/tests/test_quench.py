import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import oracle_dense, oracle_phase
from quenchstat.eigensolver import EigenSystem, dense_spectrum
from quenchstat.hamiltonian import HamiltonianSpec, ObservableOperator, build_tam, identity, projector, sigma_z_site
from quenchstat.quench import (
    DegenerateGapError,
    ObservableSeries,
    QuenchSpec,
    QuenchSpectrum,
    SumRuleError,
    evaluate,
    exact_moments,
    fidelity,
    loschmidt_series,
    observable_series,
    perturbative_weights,
    quench_spectrum,
)


def manual_spectrum(energies, overlaps):
    c = np.asarray(overlaps, dtype=float)
    e = np.asarray(energies, dtype=float)
    eig = EigenSystem(e, np.eye(len(e)), np.zeros(len(e)), "manual")
    return QuenchSpectrum(e, c, c * c, 1.0 - float(c @ c), 0.0, eig, c)


@pytest.mark.parametrize("method", ["dense", "lanczos"])
def test_no_quench_is_trivial(method):
    qs = quench_spectrum(QuenchSpec.field_quench(8, 0.4, 0.218, 0.0), method=method)
    assert qs.weights[0] == pytest.approx(1.0, abs=1e-10)
    assert abs(qs.deficit) < 1e-10
    series = loschmidt_series(qs)
    assert np.ptp(evaluate(series, np.linspace(0, 100, 50))) < 1e-10


def test_overlaps_match_oracle():
    L, kappa, h, dh = 8, 0.3, 1.4, 0.04
    E1, V1 = np.linalg.eigh(oracle_dense(L, kappa, h))
    E2, V2 = np.linalg.eigh(oracle_dense(L, kappa, h + dh))
    psi0 = oracle_phase(V1[:, :1])[:, 0]
    c_ref = oracle_phase(V2).T @ psi0
    keep = np.abs(c_ref) > 1e-6
    q = QuenchSpec.field_quench(L, kappa, h, dh)
    for method in ("dense", "lanczos"):
        qs = quench_spectrum(q, method=method, sum_rule_accuracy=1e-12 if method == "dense" else 1e-9)
        big = np.abs(qs.overlaps) > 1e-6
        np.testing.assert_allclose(qs.energies[big], E2[keep], atol=1e-10)
        np.testing.assert_allclose(qs.overlaps[big], c_ref[keep], atol=1e-10)
        assert qs.ground_energy_pre == pytest.approx(E1[0], abs=1e-12)


def test_sum_rule_failure_is_reported():
    q = QuenchSpec.field_quench(12, 0.4, 0.218, 0.5)
    from quenchstat.eigensolver import LanczosConfig

    with pytest.raises(SumRuleError) as info:
        quench_spectrum(q, method="lanczos", sum_rule_accuracy=1e-6, lanczos=LanczosConfig(max_krylov=10))
    assert 0 < info.value.deficit <= 1


def test_bad_quench_specs():
    with pytest.raises(ValueError):
        QuenchSpec(HamiltonianSpec(8, 0.1, 1.0), HamiltonianSpec(8, 0.2, 1.0))
    with pytest.raises(ValueError):
        quench_spectrum(QuenchSpec.field_quench(6, 0.1, 1.0, 0.1), sum_rule_accuracy=0.5)


def two_level():
    # H2 = -sigma^x in the computational basis: eigenstates |+>, |->; V = sigma^z couples them with <1|V|0> = 1
    eig = EigenSystem(np.array([-1.0, 1.0]), np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2), np.zeros(2), "manual")
    V = ObservableOperator("sz", 1, diagonal=np.array([1.0, -1.0]))
    return eig, V


def test_two_level_perturbative_weight():
    eig, V = two_level()
    pw = perturbative_weights(eig, V, 0.1)
    assert pw.weights[1] == pytest.approx(2.5e-3)
    assert pw.weights.sum() == pytest.approx(1.0)
    assert perturbative_weights(eig, V, 0.0).weights[1] == 0.0


def test_degenerate_gap_rejected():
    eig = EigenSystem(np.array([0.0, 0.0]), np.eye(2), np.zeros(2), "manual")
    with pytest.raises(DegenerateGapError):
        perturbative_weights(eig, ObservableOperator("sz", 1, diagonal=np.array([1.0, -1.0])), 0.1)


def test_perturbative_weights_converge_cubically():
    L, kappa, h = 10, 0.4, 0.218
    eig = dense_spectrum(build_tam(HamiltonianSpec(L, kappa, h)))
    errors = []
    for dh in (0.04, 0.02, 0.01):
        q = QuenchSpec.field_quench(L, kappa, h - dh, dh)  # post-quench H2 is fixed
        qs = quench_spectrum(q, method="dense")
        pw = perturbative_weights(eig, q.potential(), dh)
        # align retained (non-degenerate-projected) states by energy
        idx = [int(np.argmin(np.abs(eig.energies - e))) for e in qs.energies[1:6]]
        errors.append(np.max(np.abs(qs.weights[1:6] - pw.weights[idx])))
    assert errors[1] / errors[0] < 0.25
    assert errors[2] / errors[1] < 0.25


def test_two_weight_echo():
    qs = manual_spectrum([0.0, 2.0], [np.sqrt(0.6), np.sqrt(0.4)])
    s = loschmidt_series(qs)
    assert s.mean == pytest.approx(0.52)
    assert s.frequencies == pytest.approx([2.0])
    assert s.coefficients == pytest.approx([0.48])
    assert evaluate(s, 0.0) == pytest.approx(1.0)
    assert evaluate(s, np.pi / 2) == pytest.approx(0.04)


def test_equal_frequencies_merge():
    qs = manual_spectrum([0.0, 1.0, 2.0], np.sqrt([0.5, 0.3, 0.2]))
    s = loschmidt_series(qs)
    assert s.frequencies == pytest.approx([1.0, 2.0])
    assert s.coefficients == pytest.approx([2 * 0.5 * 0.3 + 2 * 0.3 * 0.2, 2 * 0.5 * 0.2])
    mean, var = exact_moments(s)
    t = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    vals = evaluate(s, t)
    assert vals.mean() == pytest.approx(mean, abs=1e-12)
    assert vals.var() == pytest.approx(var, abs=1e-12)


def test_exact_moments_single_term():
    s = ObservableSeries(0.3, np.array([1.7]), np.array([0.2]))
    assert exact_moments(s) == pytest.approx((0.3, 0.02))


@pytest.fixture(scope="module")
def small_quench():
    q = QuenchSpec.field_quench(10, 0.4, 0.218, 0.04)
    qs = quench_spectrum(q, method="dense")
    return q, qs


def test_echo_starts_at_one(small_quench):
    _, qs = small_quench
    s = loschmidt_series(qs)
    assert evaluate(s, 0.0) == pytest.approx(1.0, abs=max(qs.deficit**2, 1e-12))
    assert evaluate(s, 0.0) == pytest.approx((1 - qs.deficit) ** 2, abs=1e-12)
    assert s.mean == pytest.approx(qs.purity, abs=1e-14)


def test_identity_and_projector_series(small_quench):
    _, qs = small_quench
    ident = observable_series(qs, qs.eigensystem, identity(10))
    assert ident.mean == pytest.approx(1.0 - qs.deficit, abs=1e-12)
    assert np.all(np.abs(ident.coefficients) < 1e-12)
    proj = observable_series(qs, qs.eigensystem, projector(qs.initial_state))
    echo = loschmidt_series(qs)
    t = np.linspace(0, 500, 300)
    np.testing.assert_allclose(evaluate(proj, t), evaluate(echo, t), atol=1e-12)


def test_series_is_real_and_bounded(small_quench):
    _, qs = small_quench
    s = observable_series(qs, qs.eigensystem, sigma_z_site(10, 0))
    v = evaluate(s, np.linspace(0, 1e4, 2000))
    assert np.all(np.isfinite(v))
    assert np.all(np.abs(v) <= 1 + 1e-12)
    assert np.abs(v - s.mean).max() <= np.abs(s.coefficients).sum() + 1e-12
    assert exact_moments(s)[1] <= 0.5 * np.sum(np.abs(s.coefficients)) ** 2


def test_time_average_converges(small_quench):
    _, qs = small_quench
    s = loschmidt_series(qs)
    mean, var = exact_moments(s)
    rng = np.random.default_rng(11)
    gaps = []
    for T in (1e3, 1e5):
        t = rng.uniform(0, T, 10_000)
        v = evaluate(s, t)
        gaps.append(abs(v.mean() - mean) + abs(v.var() - var))
    assert gaps[1] < gaps[0] or gaps[1] < 5 * np.sqrt(var / 10_000)


def test_chunked_evaluation_matches_direct(small_quench):
    _, qs = small_quench
    s = loschmidt_series(qs)
    t = np.linspace(0, 300, 2500)
    direct = s.mean + np.cos(np.outer(t, s.frequencies)) @ s.coefficients
    np.testing.assert_allclose(evaluate(s, t), direct, atol=1e-13)


def test_fidelity():
    assert fidelity(QuenchSpec.field_quench(8, 0.3, 1.4, 0.0)) == pytest.approx(1.0, abs=1e-12)
    q = QuenchSpec.field_quench(8, 0.3, 1.4, 0.04)
    qs = quench_spectrum(q, method="dense")
    assert fidelity(q) ** 2 == pytest.approx(qs.weights[0], abs=1e-12)
    E, V = np.linalg.eigh(oracle_dense(8, 0.3, 1.4))
    E2, V2 = np.linalg.eigh(oracle_dense(8, 0.3, 1.44))
    assert fidelity(q) == pytest.approx(abs(V[:, 0] @ V2[:, 0]), abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(4, 8), st.floats(-0.5, 0.5), st.floats(0.3, 2.0), st.floats(-0.3, 0.3))
def test_sum_rule_and_purity(L, kappa, h, dh):
    qs = quench_spectrum(QuenchSpec.field_quench(L, kappa, h, dh), method="dense")
    assert abs(qs.weights.sum() - 1.0) < 1e-10
    assert qs.purity <= 1 + 1e-12
    assert np.all(qs.weights >= 0)
    s = loschmidt_series(qs)
    assert s.mean == pytest.approx(qs.purity, abs=1e-12)
