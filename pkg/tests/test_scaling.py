import numpy as np
import pytest

from conftest import oracle_dense
from quenchstat.eigensolver import EigenSystem, dense_spectrum
from quenchstat.hamiltonian import HamiltonianSpec, ObservableOperator, build_tam, identity, sigma_z_site
from quenchstat.quench import QuenchSpec, quench_spectrum
from quenchstat.scaling import (
    CriticalExponents,
    fidelity_scaling_probe,
    fidelity_susceptibility,
    matrix_element_scaling_probe,
    power_law_fit,
    sector_states,
    weight_scaling_probe,
)


def test_ising_exponents():
    ex = CriticalExponents.ising()
    assert ex.delta_V == 1.0
    assert ex.weight_exponent == 2.0
    assert ex.fidelity_exponent("regular") == 1.0
    assert ex.fidelity_exponent("critical") == 2.0
    assert ex.intensive_matrix_element_exponent == -1.0
    assert ex.extensive_matrix_element_exponent == 0.0
    assert ex.alpha == 0.0
    with pytest.raises(ValueError):
        ex.fidelity_exponent("floating")


def test_exponent_identity_enforced():
    ex = CriticalExponents(d=2, zeta=1, nu=0.5)
    assert ex.delta_V == pytest.approx(2 + 1 - 2)
    with pytest.raises(ValueError):
        CriticalExponents(d=1, zeta=1, nu=1, delta_V=1.5)
    with pytest.raises(ValueError):
        CriticalExponents(d=0, zeta=1, nu=1)


def test_power_law_examples():
    fit = power_law_fit([(8, 0.01), (16, 0.04), (32, 0.16)])
    assert fit.exponent == pytest.approx(2.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.predict(64) == pytest.approx(0.64)
    flat = power_law_fit([(8, 1.0), (10, 1.0), (12, 1.0)])
    assert flat.exponent == 0.0 and flat.r_squared == 1.0


@pytest.mark.parametrize("points", [[(8, 1.0), (10, 2.0)], [(8, 1.0), (10, -2.0), (12, 3.0)], [(0, 1.0), (1, 1.0), (2, 1.0)]])
def test_power_law_rejects(points):
    with pytest.raises(ValueError):
        power_law_fit(points)


def test_two_level_susceptibility():
    eig = EigenSystem(np.array([-1.0, 1.0]), np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2), np.zeros(2), "manual")
    chi = fidelity_susceptibility(eig, ObservableOperator("sz", 1, diagonal=np.array([1.0, -1.0])))
    assert chi.value == pytest.approx(0.25)


def test_identity_perturbation_has_zero_susceptibility():
    eig = dense_spectrum(build_tam(HamiltonianSpec(6, 0.3, 1.4)))
    eig = EigenSystem(eig.energies, eig.vectors, eig.residuals, "dense")
    # the L=6 spectrum is degenerate above the ground state; drop exact repeats
    keep = np.concatenate([[True], np.diff(eig.energies) > 1e-9])
    reduced = EigenSystem(eig.energies[keep], eig.vectors[:, keep], eig.residuals[keep], "dense")
    assert fidelity_susceptibility(reduced, identity(6)).value == pytest.approx(0.0, abs=1e-20)


def test_susceptibility_matches_full_spectrum_oracle():
    L, kappa, h = 10, 0.3, 1.4
    E, V = np.linalg.eigh(oracle_dense(L, kappa, h))
    sz_total = np.array([sum(1 - 2 * ((s >> i) & 1) for i in range(L)) for s in range(1 << L)], dtype=float)
    coupling = V.T @ (-sz_total * V[:, 0])
    want = float(np.sum(coupling[1:] ** 2 / (E[1:] - E[0]) ** 2))
    q = QuenchSpec.field_quench(L, kappa, h, 0.0)
    eig = dense_spectrum(build_tam(q.post))
    got = fidelity_susceptibility(eig, q.potential()).value
    assert got == pytest.approx(want, rel=1e-6)

    # 1 - F^2 = chi dh^2 + O(dh^3)
    errs = []
    for dh in (0.02, 0.01, 0.005):
        p0 = quench_spectrum(QuenchSpec.field_quench(L, kappa, h, dh), method="dense").weights[0]
        errs.append(abs((1 - p0) - got * dh**2) / dh**3)
    assert max(errs) < 10 * max(got, 1.0)


def test_doubling_dh_quadruples_p1():
    L, kappa, h = 10, 0.4, 0.218
    p1 = [quench_spectrum(QuenchSpec.field_quench(L, kappa, h, dh), method="dense").weights[1] for dh in (0.005, 0.01)]
    assert p1[1] / p1[0] == pytest.approx(4.0, rel=0.1)


def test_matrix_element_translation_invariant():
    eig = sector_states(HamiltonianSpec(10, 0.4, 0.218), 2)
    values = [eig.vectors[:, 0] @ sigma_z_site(10, i)(eig.vectors[:, 1]) for i in range(10)]
    assert np.ptp(values) < 1e-9


def test_fidelity_probe_rejects_zero_quench():
    with pytest.raises(ValueError):
        fidelity_scaling_probe(0.3, 1.4, 0.0, (6, 8, 10))


def test_small_probes_run():
    fid = fidelity_scaling_probe(0.3, 1.4, 0.04, (8, 10, 12), "regular")
    assert fid.fit.exponent == pytest.approx(1.0, abs=0.15)
    me = matrix_element_scaling_probe(0.4, 0.218, (6, 8, 10))
    assert me.fit.exponent < 0
    w = weight_scaling_probe(0.4, 0.218, 0.01, (6, 8, 10))
    assert w.fit.exponent > 0 and set(w.details) == {6, 8, 10}


def test_regular_point_has_no_dominant_excitation():
    qs = quench_spectrum(QuenchSpec.field_quench(10, 0.3, 1.4, 0.04), method="dense")
    assert qs.weights[0] > 0.99
    assert np.max(qs.weights[1:]) < 0.01
