import math
import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import jv

from qpballistic.evolution import (
    DegenerateSpectrumWarning,
    EigensolverError,
    asymptotic_diagonal,
    cesaro_velocity,
    cesaro_velocity_apply,
    current_in_eigenbasis,
    diagonalize,
    phi,
    position_moment,
    propagate,
    window_for_horizon,
)
from qpballistic.lattice import (
    FrequencyVector,
    TrigPotential,
    Window,
    WindowedOperator,
    apply_current,
    build_dual_hamiltonian,
    build_hamiltonian,
    current_matrix,
    dual_current_diagonal,
)


def physical(eps, x=0.31, n=10, alpha=None, boundary="dirichlet"):
    alpha = alpha or FrequencyVector.golden()
    w = Window(n)
    return build_hamiltonian(TrigPotential.almost_mathieu(), x, alpha, eps, w, boundary), w


def test_free_propagation_matches_bessel():
    t = 5.0
    w = window_for_horizon(t, 1, 1e-8)
    h, _ = physical(0.0, n=w.half_width)
    eig = diagonalize(h)
    psi = propagate(eig, np.eye(w.site_count)[w.index(0)], t)
    n = w.positions
    # <n| exp(-it(S + S*)) |0> = (-i)^n J_n(2t) on Z
    assert np.max(np.abs(psi - (-1j) ** n.astype(float) * jv(n, 2 * t))) < 1e-8


def test_propagation_is_unitary(rng):
    h, w = physical(0.9, n=30)
    eig = diagonalize(h)
    psi = rng.standard_normal(w.site_count) + 1j * rng.standard_normal(w.site_count)
    for t in (0.3, 7.0, 400.0):
        assert np.linalg.norm(propagate(eig, psi, t)) == pytest.approx(np.linalg.norm(psi), rel=1e-10)


def test_window_for_horizon_formula():
    w0 = window_for_horizon(0, 2, 1e-8)
    assert w0.half_width == math.ceil(2 + 5 * math.log(1e8))
    sizes = [window_for_horizon(t, 1, 1e-6).half_width for t in (0, 1, 10, 100)]
    assert sizes == sorted(sizes)
    assert window_for_horizon(10, 1, 1e-12).half_width > window_for_horizon(10, 1, 1e-6).half_width
    with pytest.raises(ValueError):
        window_for_horizon(-1, 1, 1e-8)


def test_window_doubling_changes_nothing():
    v, alpha, t = TrigPotential.almost_mathieu(), FrequencyVector.golden(), 50.0
    w = window_for_horizon(t, 1, 1e-8)
    w2 = Window(2 * w.half_width)
    out = []
    for win in (w, w2):
        eig = diagonalize(build_hamiltonian(v, 0.2, alpha, 0.2, win))
        psi = propagate(eig, np.eye(win.site_count)[win.index(0)], t)
        out.append(psi[win.index(-w.half_width): win.index(w.half_width) + 1])
    assert np.linalg.norm(out[0] - out[1]) < 1e-8


def test_position_moment():
    w = Window(8)
    e = np.eye(w.site_count)
    assert position_moment(e[w.index(0)], w) == (0.0, 0.0)
    assert position_moment(e[w.index(5)], w) == (5.0, 5.0)
    even = e[w.index(3)] + e[w.index(-3)]
    assert position_moment(even, w)[0] == 0.0


def test_phi_branches_agree():
    s = np.array([0.0, 1e-6, 9.99e-5, 1.0001e-4, 1e-3, 3.0])
    exact = np.array([1.0] + [complex(np.expm1(1j * x) / (1j * x)) for x in s[1:]])
    assert np.allclose(phi(s), exact, atol=1e-15, rtol=1e-13)
    assert np.all(np.abs(phi(np.linspace(-50, 50, 1001))) <= 1 + 1e-15)


def test_cesaro_matches_gauss_legendre():
    h, w = physical(1.1, x=0.17)
    eig = diagonalize(h)
    a = current_matrix(w)
    T = 7.0
    nodes, weights = np.polynomial.legendre.leggauss(1000)
    ts = 0.5 * T * (nodes + 1)
    acc = np.zeros_like(a)
    for t, wt in zip(ts, weights):
        u = scipy.linalg.expm(-1j * h.matrix * t)
        acc += wt * (u.conj().T @ a @ u)
    quad = 0.5 * acc
    assert np.linalg.norm(cesaro_velocity(eig, a, T).matrix - quad) < 1e-6


def test_heisenberg_derivative():
    h, w = physical(0.6, x=0.77, n=8)
    eig = diagonalize(h)
    a = current_matrix(w)
    t, d = 3.0, 1e-4
    tq = lambda s: s * cesaro_velocity(eig, a, s).matrix
    deriv = (tq(t + d) - tq(t - d)) / (2 * d)
    u = scipy.linalg.expm(-1j * h.matrix * t)
    assert np.max(np.abs(deriv - u.conj().T @ a @ u)) < 1e-5


def test_free_ring_velocity_is_current():
    h, w = physical(0.0, n=50, boundary="periodic")
    a = current_matrix(w, "periodic")
    assert np.max(np.abs(h.matrix @ a - a @ h.matrix)) == 0
    eig = diagonalize(h)
    for T in (1.0, 10.0, 100.0):
        assert np.linalg.norm(cesaro_velocity(eig, a, T).matrix - a, 2) < 1e-9


def test_diagonal_preserved_and_norm_bound(rng):
    h, w = physical(2.3, x=0.05, n=12)
    eig = diagonalize(h)
    a_eig = current_in_eigenbasis(eig, apply_current)
    for T in (0.5, 5.0, 50.0):
        q = cesaro_velocity(eig, apply_current, T, basis="eigen").matrix
        assert np.allclose(np.diag(q), np.diag(a_eig), atol=1e-14)
        assert np.linalg.norm(q, 2) <= 2 + 1e-12


def test_apply_matches_dense(rng):
    h, w = physical(0.4, n=40)
    eig = diagonalize(h)
    a_eig = current_in_eigenbasis(eig, apply_current)
    psi = rng.standard_normal(w.site_count)
    q = cesaro_velocity(eig, current_matrix(w), 13.0).matrix
    assert np.allclose(cesaro_velocity_apply(eig, a_eig, 13.0, psi, chunk=7), q @ psi, atol=1e-12)


def test_asymptotic_limit_bound():
    w = Window(12)
    h = build_dual_hamiltonian(TrigPotential.almost_mathieu(), 0.13, FrequencyVector.golden(), 0.4, w)
    eig = diagonalize(h)
    a = dual_current_diagonal(0.13, FrequencyVector.golden(), w)
    q_inf = asymptotic_diagonal(eig, a, basis="eigen").matrix
    a_eig = current_in_eigenbasis(eig, a)
    rowsum = np.abs(a_eig).sum(axis=1).max()
    gaps = np.abs(eig.energies[:, None] - eig.energies[None, :])[~np.eye(eig.size, dtype=bool)]
    prev = math.inf
    for T in (100 / eig.min_gap(), 300 / eig.min_gap(), 1000 / eig.min_gap()):
        err = np.linalg.norm(cesaro_velocity(eig, a, T, basis="eigen").matrix - q_inf, 2)
        bound = 2 * np.abs(phi(gaps * T)).max() * rowsum
        assert err <= bound
        assert err < prev
        prev = err


def test_free_dual_limit_is_current():
    alpha = FrequencyVector.golden()
    w = Window(10)
    eig = diagonalize(build_dual_hamiltonian(TrigPotential.almost_mathieu(), 0.3, alpha, 0.0, w))
    a = dual_current_diagonal(0.3, alpha, w)
    q = asymptotic_diagonal(eig, a).matrix
    assert np.allclose(q, np.diag(a), atol=1e-14)
    assert np.allclose(q, q.conj().T)


def test_degenerate_blocks_warn():
    # rational alpha with theta = 0 repeats cosine values
    alpha = FrequencyVector((0.25,), rational_denominator=4)
    w = Window(4)
    eig = diagonalize(build_dual_hamiltonian(TrigPotential.almost_mathieu(), 0.0, alpha, 0.0, w))
    a = dual_current_diagonal(0.0, alpha, w)
    with pytest.warns(DegenerateSpectrumWarning):
        res = asymptotic_diagonal(eig, a)
    assert res.blocks and all(len(b) > 1 for b in res.blocks)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        asymptotic_diagonal(eig, a, warn=False)


def test_non_hermitian_rejected():
    w = Window(2)
    m = np.triu(np.ones((5, 5)))
    with pytest.raises(EigensolverError):
        diagonalize(WindowedOperator(m, "dual", w, {}))


def test_periodic_uses_dense_solver():
    h, _ = physical(0.5, n=6, boundary="periodic")
    eig = diagonalize(h)
    assert np.allclose(np.sort(np.linalg.eigvalsh(h.matrix)), eig.energies)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 4), st.floats(0.01, 500))
def test_velocity_norm_bounded(x, eps, T):
    h, w = physical(eps, x=x, n=6)
    q = cesaro_velocity(diagonalize(h), current_matrix(w), T).matrix
    assert np.linalg.norm(q, 2) <= 2 + 1e-10
    assert np.allclose(q, q.conj().T, atol=1e-12)
