import math

import numpy as np
import pytest
import scipy.linalg

from qpballistic.evolution import cesaro_velocity, current_in_eigenbasis, propagate
from qpballistic.lattice import (
    Window,
    apply_current,
    build_dual_hamiltonian,
    dual_current_diagonal,
)
from qpballistic.transport import (
    ballistic_scan,
    dual_eigensystem,
    dual_velocity,
    edl_kernel,
    eigenfunction_surrogate,
    fit_exponential,
    pullback_velocity,
    tail_bound_scan,
    theta_ensemble,
)


def test_theta_ensemble_is_shifted_grid():
    th = theta_ensemble(8, np.random.default_rng(5))
    assert np.allclose(np.diff(th), 1 / 8)
    assert 0 <= th[0] < 1 / 8
    assert np.array_equal(th, theta_ensemble(8, np.random.default_rng(5)))


def test_dual_rescaling_identity(golden, amo):
    w = Window(9)
    eps, theta = 0.3, 0.77
    h = build_dual_hamiltonian(amo, theta, golden, eps, w).matrix / eps
    lap = np.diag(np.ones(w.site_count - 1), 1) + np.diag(np.ones(w.site_count - 1), -1)
    cos = np.diag(2 * np.cos(2 * np.pi * (theta + w.positions * golden.alpha[0])))
    assert np.max(np.abs(h - lap - cos / eps)) < 1e-12


def test_surrogate_dominates_propagator(rng, golden, amo):
    w = Window(20)
    for theta in theta_ensemble(3, rng):
        eig = dual_eigensystem(amo, theta, golden, 0.4, w)
        s = eigenfunction_surrogate(eig)
        for _ in range(20):
            k, l = rng.integers(0, w.site_count, size=2)
            e_l = np.zeros(w.site_count)
            e_l[l] = 1.0
            amp = [abs(propagate(eig, e_l, t)[k]) for t in range(51)]
            assert max(amp) <= s[k, l] + 1e-10


def test_free_kernel_has_no_decay_to_fit(golden, amo):
    ker = edl_kernel(amo, golden, 0.0, [0.1, 0.35], Window(16))
    assert ker.gamma_infinite
    assert np.allclose(ker.kernel, np.eye(33))


def test_kernel_symmetric_and_decaying(golden, amo):
    ker = edl_kernel(amo, golden, 0.3, theta_ensemble(8, np.random.default_rng(0)), Window(40), threads=2)
    assert np.max(np.abs(ker.kernel - ker.kernel.T)) < 1e-12
    assert 0.5 * math.log(1 / 0.3) < ker.gamma < 2 * math.log(1 / 0.3)
    dist, prof = ker.profile()
    assert np.all(np.diff(np.log(prof[2:])) < 0)


def test_threads_do_not_change_results(golden, amo):
    th = theta_ensemble(6, np.random.default_rng(9))
    a = edl_kernel(amo, golden, 0.25, th, Window(20), threads=1)
    b = edl_kernel(amo, golden, 0.25, th, Window(20), threads=3)
    assert np.array_equal(a.kernel, b.kernel) and a.gamma == b.gamma


def test_fit_exponential_exact_line():
    d = np.arange(2, 20)
    c, g, resid, used, excluded = fit_exponential(d, 3.0 * np.exp(-1.7 * d))
    assert (c, g) == (pytest.approx(3.0), pytest.approx(1.7))
    assert resid < 1e-12 and used == 18 and excluded == 0
    assert fit_exponential(d, np.zeros_like(d, dtype=float))[1] == math.inf


def test_dual_velocity_offdiagonal_against_quadrature(golden, amo):
    w = Window(7)
    theta, T = 0.41, 5.0
    eig = dual_eigensystem(amo, theta, golden, 0.6, w)
    a = dual_current_diagonal(theta, golden, w)
    h = build_dual_hamiltonian(amo, theta, golden, 0.6, w).matrix
    nodes, weights = np.polynomial.legendre.leggauss(1000)
    quad = np.zeros((15, 15), dtype=complex)
    for t, wt in zip(0.5 * T * (nodes + 1), weights):
        u = scipy.linalg.expm(-1j * h * t)
        quad += 0.5 * wt * (u.conj().T @ np.diag(a) @ u)
    assert np.linalg.norm(cesaro_velocity(eig, a, T).matrix - quad) < 1e-6
    q_inf = dual_velocity(eig, theta, golden).matrix
    a_eig = current_in_eigenbasis(eig, a)
    assert np.allclose(eig.to_eigenbasis(q_inf), np.diag(np.diag(a_eig)), atol=1e-13)


def test_tail_bound_free_case_vanishes(golden, amo):
    rep = tail_bound_scan(amo, golden, 0.0, 0, 100.0, [2, 4, 6], [0.2, 0.6], Window(12))
    assert np.all(rep.values < 1e-12)


def test_tail_bound_monotone(golden, amo):
    rep = tail_bound_scan(amo, golden, 0.3, 0, 200.0, [3, 6, 9, 12], theta_ensemble(4, np.random.default_rng(2)), Window(24))
    assert np.all(np.diff(rep.values) <= 0)
    assert rep.slope < 0
    with pytest.raises(ValueError):
        tail_bound_scan(amo, golden, 0.3, 0, 1.0, [3, 20], [0.1], Window(24))


def test_pullback_free_case(golden, amo):
    entry = pullback_velocity(amo, golden, 0.0, 0.37, 2, 6, 20.0)
    w = Window((len(entry.w_T) - 1) // 2)
    fiber_delta = np.zeros(w.site_count)
    fiber_delta[w.index(2)] = 1.0
    assert np.linalg.norm(entry.w_T - apply_current(fiber_delta)) < 1e-9
    assert entry.gap < 1e-9
    assert np.linalg.norm(entry.w_T) <= 2 + 1e-12


def test_pullback_interacting_is_bounded(golden, amo):
    entry = pullback_velocity(amo, golden, 0.2, 0.11, 0, 12, 10.0)
    assert np.linalg.norm(entry.w_T) <= 2 + 1e-12
    assert np.linalg.norm(entry.w_pred) <= 2 + 1e-9


def test_eigenvector_start_is_stationary(golden, amo):
    def start(fiber):
        j = np.argmax(np.abs(fiber.eig.vectors[fiber.window.index(0)]))
        return fiber.eig.vectors[:, j]

    rep = ballistic_scan(amo, golden, 0.2, [[0.3]], 0, [5.0, 10.0, 20.0], psi0=start, mode_half=None)[0]
    # |X(T) psi| = |X psi| is constant, so the ratio falls like 1/T
    assert rep.velocity * rep.T_grid == pytest.approx(np.full(3, rep.velocity[0] * 5.0), rel=1e-8)
    assert not rep.ballistic
    assert np.all(np.isnan(rep.dual_gap))


def test_free_scan_is_ballistic(golden, amo):
    rep = ballistic_scan(amo, golden, 0.0, [[0.5]], 0, [10.0, 20.0, 40.0], mode_half=4)[0]
    assert rep.ballistic
    assert abs(rep.velocity[-1] - math.sqrt(2)) < 0.05
    assert np.all(rep.dual_gap < 1e-9)
