import math

import numpy as np
import pytest

from core import meanfield
from core.constants import FINITE_DIFFERENCE_STEP, THETA_BIFURCATION
from core.exceptions import IntegrationError, ParameterError
from core.models import DimerParams, FixedPointKind, PhasePoint


def test_stability_exponent_at_135(params_135):
    assert meanfield.stability_exponent(params_135) == pytest.approx(0.9706, abs=1e-3)


@pytest.mark.parametrize("theta", [-1.2, 0.0, 0.5, 1.0])
def test_stability_exponent_zero_in_stable_regime(theta):
    assert meanfield.stability_exponent(DimerParams(theta, 100)) == 0.0


def test_stability_exponent_vanishes_at_bifurcation():
    assert meanfield.stability_exponent(DimerParams(THETA_BIFURCATION, 100)) <= 1e-6


def test_numerical_exponent_matches_closed_form():
    for theta in np.linspace(1.15, 1.55, 9):
        params = DimerParams(float(theta), 1000)
        numeric = meanfield.numerical_exponent(params, PhasePoint(0.0, 0.0))
        assert numeric == pytest.approx(meanfield.stability_exponent(params), abs=1e-9)


def test_peak_exponent():
    # λs² = 4 sin 2Θ − 8 cos 2Θ − 8，极大值在 tan 2Θ = −1/2
    thetas = np.linspace(THETA_BIFURCATION, math.pi / 2, 4001)
    values = [meanfield.stability_exponent(DimerParams(float(t), 10)) for t in thetas]
    best = int(np.argmax(values))
    assert thetas[best] == pytest.approx(0.5 * (math.pi - math.atan(0.5)), abs=1e-3)
    assert values[best] == pytest.approx(0.97, abs=0.01)
    assert meanfield.stability_exponent(DimerParams(1.35, 10)) == pytest.approx(0.97, abs=0.01)


def test_jacobian_is_traceless():
    params = DimerParams(1.35, 1000)
    jac = meanfield.jacobian(params, PhasePoint(0.4, 1.1))
    assert np.trace(jac) == pytest.approx(0.0, abs=1e-14)


def test_fixed_points_unstable_regime(params_135):
    reports = meanfield.find_fixed_points(params_135)
    assert len(reports) == 4
    by_label = {r.label: r for r in reports}
    assert by_label["antihom"].classification == FixedPointKind.HYPERBOLIC
    assert by_label["antihom"].exponent == pytest.approx(meanfield.stability_exponent(params_135), rel=1e-9)
    assert by_label["hom"].classification == FixedPointKind.STABLE_CENTER
    z_trap = math.sqrt(1.0 - 4.0 / params_135.gamma ** 2)
    trapped = [r for r in reports if r.label.startswith("self-trapped")]
    assert sorted(r.location.z for r in trapped) == pytest.approx([-z_trap, z_trap], abs=1e-8)
    for r in trapped:
        assert r.location.phi == pytest.approx(0.0, abs=1e-8)
        assert r.classification == FixedPointKind.STABLE_CENTER


def test_fixed_points_stable_regime(stable_params):
    reports = meanfield.find_fixed_points(stable_params)
    assert len(reports) == 2
    assert all(r.classification == FixedPointKind.STABLE_CENTER for r in reports)


def test_energy_conservation(params_135):
    traj = meanfield.integrate(params_135, PhasePoint(0.5, 0.3), 20.0, tol=1e-10)
    assert traj.max_relative_energy_drift <= 1e-9


def test_monodromy_determinant_is_one(params_135):
    traj = meanfield.monodromy(params_135, PhasePoint(0.5, 0.0), 10.0, tol=1e-10)
    dets = [frame.determinant for frame in traj.tangent_frames()]
    np.testing.assert_allclose(dets, 1.0, atol=1e-8)


def test_monodromy_matches_finite_difference(params_135):
    p0 = PhasePoint(0.2, 0.1)
    t = 3.0
    h = FINITE_DIFFERENCE_STEP
    final = meanfield.monodromy(params_135, p0, t, tol=1e-12).tangent_frames()[-1]
    plus = meanfield.integrate(params_135, PhasePoint(p0.z, p0.phi + h), t, tol=1e-12)
    minus = meanfield.integrate(params_135, PhasePoint(p0.z, p0.phi - h), t, tol=1e-12)
    fd = (plus.z[-1] - minus.z[-1]) / (2 * h)
    assert final.m[0, 1] == pytest.approx(fd, rel=1e-5)
    n = params_135.n_particles
    assert final.dn_dphi0(n) == pytest.approx(0.5 * n * fd, rel=1e-5)


def test_monodromy_batch_matches_single(params_135):
    times = np.linspace(0.0, 4.0, 5)
    z0 = np.array([0.01, -0.02])
    phi0 = np.array([0.03, 0.0])
    batch = meanfield.monodromy_batch(params_135, z0, phi0, times, tol=1e-11)
    for i in range(2):
        single = meanfield.monodromy(params_135, PhasePoint(z0[i], phi0[i]), 4.0, tol=1e-11, t_eval=times)
        np.testing.assert_allclose(batch[i], single.frames[:, 0, 1], rtol=1e-6, atol=1e-9)


def test_linearized_agrees_near_fixed_point(params_135):
    z0, phi0, t = 1e-5, 0.0, 2.0
    traj = meanfield.integrate(params_135, PhasePoint(z0, phi0), t, tol=1e-12)
    z_lin, phi_lin = meanfield.linearized_evolution(params_135, z0, phi0, t)
    assert traj.z[-1] == pytest.approx(z_lin, rel=1e-4)
    assert traj.phi[-1] == pytest.approx(phi_lin, rel=1e-4)


def test_linearized_rejects_stable_regime(stable_params):
    with pytest.raises(ParameterError):
        meanfield.linearized_evolution(stable_params, 0.01, 0.0, 1.0)


def test_singular_start_raises(params_135):
    with pytest.raises(IntegrationError):
        meanfield.eom(params_135, PhasePoint(1.0, 0.0))
    with pytest.raises(IntegrationError):
        meanfield.integrate(params_135, PhasePoint(1.0 - 1e-12, 0.0), 1.0)


def test_orbit_period_small_oscillation(stable_params):
    c, u = stable_params.j_hop, 0.5 * stable_params.g_int * stable_params.n_particles
    expected = 2 * math.pi / math.sqrt(16 * c * c + 8 * c * u)
    period = meanfield.orbit_period(stable_params, PhasePoint(0.01, math.pi), 10.0)
    assert period == pytest.approx(expected, rel=1e-3)


def test_separatrix_energy(params_135):
    c, u = params_135.j_hop, 0.5 * params_135.g_int * params_135.n_particles
    assert meanfield.separatrix_energy(params_135) == pytest.approx(2 * c + u / 2)


def test_phase_portrait_grid_shape(params_135):
    z, phi, energy = meanfield.phase_portrait_grid(params_135, 21, 31)
    assert energy.shape == (21, 31)
    assert np.all(np.isfinite(energy))


@pytest.mark.parametrize("point", [PhasePoint(0.3, 0.7), PhasePoint(-0.6, 2.5), PhasePoint(0.05, -1.2)])
def test_flow_is_divergence_free_in_n_phi(params_135, point):
    n_particles = params_135.n_particles
    h_n, h_phi = 1e-4, 1e-6
    n0 = 0.5 * n_particles * point.z

    def n_dot(n, phi):
        return 0.5 * n_particles * meanfield.eom(params_135, PhasePoint(2.0 * n / n_particles, phi))[0]

    def phi_dot(n, phi):
        return meanfield.eom(params_135, PhasePoint(2.0 * n / n_particles, phi))[1]

    div = ((n_dot(n0 + h_n, point.phi) - n_dot(n0 - h_n, point.phi)) / (2 * h_n)
           + (phi_dot(n0, point.phi + h_phi) - phi_dot(n0, point.phi - h_phi)) / (2 * h_phi))
    assert abs(div) <= 1e-7


def test_negative_theta_swaps_hom_and_antihom(params_135):
    mirrored = DimerParams(-params_135.theta, params_135.n_particles)
    lam = meanfield.stability_exponent(params_135)
    np.testing.assert_allclose(meanfield.jacobian(mirrored, PhasePoint(0.0, math.pi)),
                               -meanfield.jacobian(params_135, PhasePoint(0.0, 0.0)), atol=1e-14)
    assert meanfield.numerical_exponent(mirrored, PhasePoint(0.0, math.pi)) == pytest.approx(lam, rel=1e-12)
    by_label = {r.label: r for r in meanfield.find_fixed_points(mirrored)}
    assert by_label["hom"].classification == FixedPointKind.HYPERBOLIC
    assert by_label["antihom"].classification == FixedPointKind.STABLE_CENTER


def test_monodromy_eigenvalues_at_hyperbolic_point(params_135):
    lam = meanfield.stability_exponent(params_135)
    final = meanfield.monodromy(params_135, PhasePoint(0.0, 0.0), 1.0, tol=1e-12).tangent_frames()[-1]
    eigvals = np.sort(np.linalg.eigvals(final.m).real)
    np.testing.assert_allclose(eigvals, [math.exp(-lam), math.exp(lam)], rtol=1e-6)


def test_bifurcation_point_is_marginal():
    params = DimerParams(math.atan(2.0), 100)
    by_label = {r.label: r for r in meanfield.find_fixed_points(params)}
    assert by_label["antihom"].classification == meanfield.MARGINAL
    assert by_label["antihom"].exponent == 0.0
