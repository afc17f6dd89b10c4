import math

import numpy as np
import pytest
from scipy.linalg import expm

from core import propagate
from core.exceptions import ParameterError, PropagationError
from core.hilbert import build_hamiltonian, coherent_state, dense_hamiltonian
from core.models import DimerParams
from core.propagate import Backend


def _dense_otoc(params, state, t):
    dense = dense_hamiltonian(build_hamiltonian(params))
    n_op = np.diag(np.arange(dense.shape[0], dtype=float))
    u = expm(-1j * dense * t)
    n_t = u.conj().T @ n_op @ u
    comm = n_t @ n_op - n_op @ n_t
    vec = comm @ state.amplitudes
    return float(np.vdot(vec, vec).real)


@pytest.mark.parametrize("backend", Backend.ALL)
def test_otoc_matches_dense_oracle_n2(backend):
    params = DimerParams(theta=1.35, n_particles=2)
    state = coherent_state(params, 0.2, 0.7)
    prop = propagate.make_propagator(build_hamiltonian(params), backend)
    times = np.linspace(0.0, 4.0, 9)
    series = propagate.otoc(prop, state, times, params)
    expected = [_dense_otoc(params, state, t) for t in times]
    np.testing.assert_allclose(series.values, expected, atol=1e-9)


def test_otoc_at_matches_batched(small_params):
    prop = propagate.make_propagator(build_hamiltonian(small_params))
    state = coherent_state(small_params, 0.0, 0.0)
    series = propagate.otoc(prop, state, [0.5, 2.0], small_params)
    assert propagate.otoc_at(prop, state, 2.0) == pytest.approx(series.values[1], rel=1e-9)


@pytest.mark.parametrize("backend", Backend.ALL)
def test_otoc_vanishes_at_zero(small_params, backend):
    prop = propagate.make_propagator(build_hamiltonian(small_params), backend)
    series = propagate.otoc(prop, coherent_state(small_params, 0.0, 0.0), np.linspace(0, 3, 7), small_params)
    assert series.values[0] == 0.0
    assert series.values[1] > 0.0
    assert np.all(series.values >= 0)


def test_otoc_operator_shift_invariant(small_params):
    prop = propagate.make_propagator(build_hamiltonian(small_params))
    state = coherent_state(small_params, 0.0, 0.0)
    times = np.linspace(0, 5, 11)
    c_n1 = propagate.otoc(prop, state, times, small_params, operator="n1").values
    c_half = propagate.otoc(prop, state, times, small_params, operator="n_half").values
    np.testing.assert_allclose(c_half, c_n1, rtol=1e-8, atol=1e-8)


@pytest.mark.parametrize("backend", Backend.ALL)
def test_evolution_preserves_norm(backend):
    params = DimerParams(theta=1.35, n_particles=200)
    prop = propagate.make_propagator(build_hamiltonian(params), backend)
    state = coherent_state(params, 0.0, 0.0)
    for t in (0.7, 3.0, 9.0):
        assert abs(propagate.evolve(prop, state, t).norm - 1.0) <= 1e-8


def test_backward_then_forward_is_identity(small_params):
    prop = propagate.make_propagator(build_hamiltonian(small_params))
    state = coherent_state(small_params, 0.3, -0.2)
    back = propagate.evolve(prop, propagate.evolve(prop, state, -2.5), 2.5)
    assert back.fidelity(state) == pytest.approx(1.0, abs=1e-10)


def test_chebyshev_matches_eigen_with_slicing():
    params = DimerParams(theta=1.35, n_particles=60)
    ham = build_hamiltonian(params)
    eig = propagate.make_propagator(ham, Backend.EIGEN)
    cheb = propagate.make_propagator(ham, Backend.CHEBYSHEV)
    assert cheb.slice_time is not None
    state = coherent_state(params, 0.0, 0.0)
    t = 10.0 * cheb.slice_time
    a = propagate.evolve(eig, state, t).amplitudes
    b = propagate.evolve(cheb, state, t).amplitudes
    assert np.linalg.norm(a - b) <= 1e-8


def test_chebyshev_overflow_without_slicing(small_params):
    prop = propagate.make_propagator(build_hamiltonian(small_params), Backend.CHEBYSHEV,
                                     max_terms=32, auto_slice=False)
    with pytest.raises(PropagationError) as excinfo:
        propagate.evolve(prop, coherent_state(small_params, 0.0, 0.0), 50.0)
    assert excinfo.value.error_code == "CHEB_OVERFLOW"


def test_gershgorin_bounds_enclose_spectrum(small_params):
    ham = build_hamiltonian(small_params)
    lo, hi = propagate.gershgorin_bounds(ham)
    eig = propagate.make_propagator(ham, Backend.EIGEN)
    assert lo < eig.eigenvalues[0] and eig.eigenvalues[-1] < hi


def test_default_backend_rule():
    assert propagate.default_backend(10_000) == Backend.EIGEN
    assert propagate.default_backend(10_001) == Backend.CHEBYSHEV


def test_default_time_grid():
    grid = propagate.default_time_grid(4.0, 9, 1.5)
    assert grid[0] == 0.0 and grid[-1] == pytest.approx(6.0) and grid.size == 9


def test_unknown_backend_rejected(small_params):
    with pytest.raises(ParameterError):
        propagate.make_propagator(build_hamiltonian(small_params), "lanczos")


def test_descending_times_rejected(small_params):
    prop = propagate.make_propagator(build_hamiltonian(small_params))
    with pytest.raises(ParameterError):
        propagate.otoc(prop, coherent_state(small_params, 0.0, 0.0), [1.0, 0.5], small_params)


def test_otoc_rejects_params_of_other_size(small_params):
    prop = propagate.make_propagator(build_hamiltonian(small_params))
    with pytest.raises(ParameterError) as excinfo:
        propagate.otoc(prop, coherent_state(small_params, 0.0, 0.0), [0.0, 1.0], small_params.with_n(39))
    assert excinfo.value.error_code == "STATE_DIM"


def test_otoc_keeps_params_snapshot(small_params):
    prop = propagate.make_propagator(build_hamiltonian(small_params))
    series = propagate.otoc(prop, coherent_state(small_params, 0.0, 0.0), [0.0, 1.0], small_params)
    assert series.params_snapshot == small_params


@pytest.mark.parametrize(("theta", "n", "expected"), [
    (0.0, 1, [-2.0, 2.0]),
    (math.pi / 2, 2, [0.0, 1.0, 1.0]),
])
def test_eigenvalue_examples(theta, n, expected):
    prop = propagate.make_propagator(build_hamiltonian(DimerParams(theta=theta, n_particles=n)), Backend.EIGEN)
    np.testing.assert_allclose(prop.eigenvalues, expected, atol=1e-14)


@pytest.mark.parametrize("backend", Backend.ALL)
def test_norm_drift_over_many_steps(backend):
    params = DimerParams(theta=1.35, n_particles=100)
    prop = propagate.make_propagator(build_hamiltonian(params), backend)
    state = coherent_state(params, 0.2, 0.4)
    worst = 0.0
    for _ in range(1000):
        state = propagate.evolve(prop, state, 0.05)
        worst = max(worst, abs(state.norm - 1.0))
    assert worst <= 1e-8


def test_backends_agree_on_otoc():
    rng = np.random.default_rng(20240611)
    for n in (10, 57, 200):
        params = DimerParams(theta=float(rng.uniform(0.3, 1.5)), n_particles=n)
        ham = build_hamiltonian(params)
        state = coherent_state(params, float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-math.pi, math.pi)))
        times = np.linspace(0.0, 6.0, 13)
        eig = propagate.otoc(propagate.make_propagator(ham, Backend.EIGEN), state, times, params).values
        cheb = propagate.otoc(propagate.make_propagator(ham, Backend.CHEBYSHEV), state, times, params).values
        np.testing.assert_allclose(cheb, eig, rtol=1e-6, atol=1e-10 * eig.max())


def test_orthogonality_check_full_gram_and_sketch_paths(small_params):
    vectors = propagate.make_propagator(build_hamiltonian(small_params), Backend.EIGEN).eigenvectors
    propagate._check_orthogonality(vectors)
    propagate._check_orthogonality(vectors, full_gram_max_dim=0)

    skewed = vectors.copy()
    skewed[:, 0] = vectors[:, 0] + 1e-3 * vectors[:, 1]
    skewed[:, 0] /= np.linalg.norm(skewed[:, 0])
    for limit in (propagate._FULL_GRAM_MAX_DIM, 0):
        with pytest.raises(PropagationError) as excinfo:
            propagate._check_orthogonality(skewed, full_gram_max_dim=limit)
        assert excinfo.value.error_code == "EIG_ORTHO"
