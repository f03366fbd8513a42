"""Localization kernels of the dual family and ballistic transport of the physical one.

The sup over time in the localization kernel is replaced by the eigenfunction bound
``sup_t |<d_k, e^{-itH} d_l>| <= sum_j |psi_j(k)| |psi_j(l)|``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np
from scipy import stats

from .evolution import (
    CesaroVelocity,
    EigenSystem,
    asymptotic_diagonal,
    cesaro_velocity_apply,
    current_in_eigenbasis,
    diagonalize,
    position_moment,
    propagate,
    window_for_horizon,
)
from .lattice import (
    FrequencyVector,
    TrigPotential,
    Window,
    apply_current,
    build_dual_hamiltonian,
    build_hamiltonian,
    dual_current_diagonal,
)

NOISE_FLOOR = 0.0
# a decay rate this large puts K(k, k+2) below double precision relative to K(k, k)
GAMMA_CUTOFF = -math.log(np.finfo(float).eps) / 2


def _map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Ordered map, optionally on a thread pool (LAPACK releases the GIL)."""
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _ordered_mean(arrays: List[np.ndarray]) -> np.ndarray:
    # pairwise tree sum in sample order, independent of completion order
    while len(arrays) > 1:
        nxt = [arrays[i] + arrays[i + 1] for i in range(0, len(arrays) - 1, 2)]
        if len(arrays) % 2:
            nxt.append(arrays[-1])
        arrays = nxt
    return arrays[0]


def theta_ensemble(count: int, rng: np.random.Generator) -> np.ndarray:
    """Equispaced phases ``(j + u) / count`` with one uniform global offset ``u``."""
    if count < 1:
        raise ValueError("need at least one phase")
    return (np.arange(count) + rng.uniform()) / count


def dual_eigensystem(v: TrigPotential, theta: float, alpha: FrequencyVector, eps: float, window: Window) -> EigenSystem:
    return diagonalize(build_dual_hamiltonian(v, theta, alpha, eps, window))


# ---------------------------------------------------------------- localization kernel


@dataclass
class EdlKernel:
    window: Window
    thetas: np.ndarray
    kernel: np.ndarray
    C: float
    gamma: float
    fit_residual: float
    fit_points: int
    excluded: int = 0
    """Interior pairs dropped from the fit for sitting at or below the noise floor."""

    @property
    def gamma_infinite(self) -> bool:
        """No measurable off-diagonal decay: nothing to fit, or a rate beyond ``GAMMA_CUTOFF``."""
        return math.isinf(self.gamma) or self.gamma > GAMMA_CUTOFF

    def profile(self, interior: bool = True):
        """Mean kernel value per distance ``|k - l|_inf`` over (interior) pairs."""
        dist, vals = _pairs(self.window, self.kernel, interior)
        ds = np.unique(dist)
        return ds, np.array([vals[dist == d].mean() for d in ds])


def eigenfunction_surrogate(eig: EigenSystem) -> np.ndarray:
    """``S(k, l) = sum_j |psi_j(k)| |psi_j(l)|``."""
    a = np.abs(eig.vectors)
    return a @ a.T


def _pairs(window: Window, kernel: np.ndarray, interior: bool = True, max_dist: Optional[int] = None):
    sites = window.sites
    half = window.half_width // 2
    keep = window.sup_norms() <= half if interior else np.ones(window.site_count, bool)
    idx = np.nonzero(keep)[0]
    dist = np.abs(sites[idx][:, None, :] - sites[idx][None, :, :]).max(axis=-1)
    vals = kernel[np.ix_(idx, idx)]
    iu = np.triu_indices(len(idx), 1)
    dist, vals = dist[iu], vals[iu]
    if max_dist is not None:
        sel = dist <= max_dist
        dist, vals = dist[sel], vals[sel]
    return dist, vals


def fit_exponential(dist: np.ndarray, vals: np.ndarray, noise_floor: float = NOISE_FLOOR):
    """Least squares ``ln K = ln C - gamma d`` on entries above ``noise_floor``.

    Returns ``(C, gamma, rms residual, points used, points excluded)``; ``gamma = inf`` when no
    entry survives (kernel indistinguishable from the identity).
    """
    good = vals > noise_floor
    excluded = int((~good).sum())
    if good.sum() < 2 or len(np.unique(dist[good])) < 2:
        return 0.0, math.inf, 0.0, int(good.sum()), excluded
    x, y = dist[good].astype(float), np.log(vals[good])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (intercept + slope * x)) ** 2)))
    return float(np.exp(intercept)), float(-slope), resid, int(good.sum()), excluded


def edl_kernel(
    v: TrigPotential,
    alpha: FrequencyVector,
    eps: float,
    thetas: Sequence[float],
    window: Window,
    noise_floor: float = NOISE_FLOOR,
    threads: int = 1,
) -> EdlKernel:
    """Phase-averaged eigenfunction kernel with a fitted exponential decay rate.

    The fit uses pairs with both sites in the inner half of the window and
    ``2 <= |k - l| <= N/2``.
    """
    thetas = np.asarray(thetas, dtype=float)
    if len(thetas) == 0:
        raise ValueError("no phase samples")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    surrogates = _map(
        lambda th: eigenfunction_surrogate(dual_eigensystem(v, th, alpha, eps, window)), list(thetas), threads
    )
    k = _ordered_mean(surrogates) / len(thetas)
    k = 0.5 * (k + k.T)
    dist, vals = _pairs(window, k, interior=True, max_dist=window.half_width // 2)
    sel = dist >= 2
    c, gamma, resid, used, excluded = fit_exponential(dist[sel], vals[sel], noise_floor)
    return EdlKernel(window, thetas, k, c, gamma, resid, used, excluded)


# ---------------------------------------------------------------- dual velocity and tails


def dual_velocity(
    eig: EigenSystem, theta: float, alpha: FrequencyVector, gap_tol: Optional[float] = None, warn: bool = True
) -> CesaroVelocity:
    """``Q~(theta) = sum_j <A~ psi_j, psi_j> |psi_j><psi_j|`` (block form on near-degeneracies).

    Deep in the localized regime, states centred far apart are degenerate to within
    ``gap_tol``; their block then keeps the exponentially small cross terms of ``A~``.
    """
    return asymptotic_diagonal(eig, dual_current_diagonal(theta, alpha, eig.window), gap_tol, warn=warn)


@dataclass
class TailBoundReport:
    k: tuple
    N_list: np.ndarray
    T: float
    values: np.ndarray
    slope: float
    slope_stderr: float
    fit_points: int


def tail_bound_scan(
    v: TrigPotential,
    alpha: FrequencyVector,
    eps: float,
    k,
    T: float,
    N_list: Sequence[int],
    thetas: Sequence[float],
    window: Window,
    noise_floor: float = NOISE_FLOOR,
    threads: int = 1,
) -> TailBoundReport:
    """``(mean_theta |P_N^perp Q~(theta, T) d_k|_{l1}^2)^{1/2}`` for each ``N``, with a log-linear fit."""
    N_list = np.asarray(sorted(N_list), dtype=int)
    k = tuple(int(c) for c in np.atleast_1d(k))
    if 2 * N_list.max() > window.half_width:
        raise ValueError("largest N must be at most half the window")
    if max(abs(c) for c in k) >= N_list.min():
        raise ValueError("|k| must be below every N")
    kidx = window.index(k)
    norms = window.sup_norms()

    def one(theta):
        eig = dual_eigensystem(v, theta, alpha, eps, window)
        a_eig = current_in_eigenbasis(eig, dual_current_diagonal(theta, alpha, window))
        delta = np.zeros(window.site_count)
        delta[kidx] = 1.0
        col = np.abs(cesaro_velocity_apply(eig, a_eig, T, delta))
        return np.array([col[norms > n].sum() ** 2 for n in N_list])

    sq = _ordered_mean(_map(one, list(np.asarray(thetas, float)), threads)) / len(thetas)
    values = np.sqrt(sq)
    good = values > noise_floor
    if good.sum() >= 2:
        fit = stats.linregress(N_list[good].astype(float), np.log(values[good]))
        slope, err = float(fit.slope), float(fit.stderr)
    else:
        slope, err = math.nan, math.nan
    return TailBoundReport(k, N_list, float(T), values, slope, err, int(good.sum()))


# ---------------------------------------------------------------- physical side


class PhysicalFiber:
    """``H(x)`` on one window with its eigensystem and current, reused across times."""

    def __init__(self, v: TrigPotential, alpha: FrequencyVector, eps: float, x, window: Window):
        self.window = window
        self.x = np.atleast_1d(np.asarray(x, dtype=float))
        self.eig = diagonalize(build_hamiltonian(v, x, alpha, eps, window))
        self.a_eig = current_in_eigenbasis(self.eig, apply_current)

    def velocity_apply(self, T: float, psi: np.ndarray) -> np.ndarray:
        """``Q(x, T) psi``."""
        return cesaro_velocity_apply(self.eig, self.a_eig, T, psi)

    def delta(self, p: int) -> np.ndarray:
        e = np.zeros(self.window.site_count)
        e[self.window.index(p)] = 1.0
        return e


def dual_prediction(
    v: TrigPotential,
    alpha: FrequencyVector,
    eps: float,
    x,
    p: int,
    mode_half: int,
    window: Window,
    theta_count: Optional[int] = None,
    threads: int = 1,
) -> np.ndarray:
    """``Q(x) d_p`` on the physical window, assembled from the dual side.

    ``U d_p = exp(2 pi i p theta) d_0``; apply ``Q~(theta)`` fiberwise on the dual box
    ``|m| <= mode_half``, take theta-Fourier coefficients ``d(n, m)`` on an equispaced grid
    and pull back: ``w(x; n) = sum_m d(n, m) exp(-2 pi i m.(x + n alpha))``.
    The dual operator is built from the reflected potential, as required by the transform.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dual_window = Window(mode_half, alpha.dimension)
    if theta_count is None:
        theta_count = 1 << int(math.ceil(math.log2(4 * (window.half_width + abs(p)) + 8)))
    thetas = np.arange(theta_count) / theta_count
    vr = v.reflected()
    zero = dual_window.index((0,) * alpha.dimension)

    def column(theta):
        eig = dual_eigensystem(vr, theta, alpha, eps, dual_window)
        q = dual_velocity(eig, theta, alpha, warn=False).matrix
        return q[:, zero]

    cols = np.array(_map(column, list(thetas), threads))
    phase = np.exp(2j * np.pi * p * thetas)[:, None]
    coeffs = np.fft.fft(cols * phase, axis=0) / theta_count
    n = window.positions
    d_nm = coeffs[np.mod(n, theta_count)]
    m_sites = dual_window.sites
    ph = np.exp(-2j * np.pi * (m_sites @ x)[None, :] - 2j * np.pi * np.outer(n, m_sites @ alpha.vector))
    return (d_nm * ph).sum(axis=1)


@dataclass
class ConvergenceEntry:
    T: float
    w_T: np.ndarray
    w_pred: np.ndarray
    gap: float


def pullback_velocity(
    v: TrigPotential,
    alpha: FrequencyVector,
    eps: float,
    x,
    p: int,
    mode_half: int,
    T: float,
    window: Optional[Window] = None,
    theta_count: Optional[int] = None,
) -> ConvergenceEntry:
    """Compare ``Q(x, T) d_p`` (direct) with the dual prediction of ``Q(x) d_p``."""
    if window is None:
        window = window_for_horizon(T, v.support_radius + abs(p), 1e-8)
    if abs(p) > window.half_width // 2:
        raise ValueError("source site too close to the window edge")
    fiber = PhysicalFiber(v, alpha, eps, x, window)
    w_t = fiber.velocity_apply(T, fiber.delta(p))
    w_pred = dual_prediction(v, alpha, eps, x, p, mode_half, window, theta_count)
    return ConvergenceEntry(float(T), w_t, w_pred, float(np.linalg.norm(w_t - w_pred)))


@dataclass
class ConvergenceReport:
    x: np.ndarray
    p: int
    T_grid: np.ndarray
    velocity: np.ndarray
    cauchy: np.ndarray
    dual_gap: np.ndarray
    ballistic: bool
    window: Window = field(repr=False, default=None)


def ballistic_scan(
    v: TrigPotential,
    alpha: FrequencyVector,
    eps: float,
    x_samples: Iterable,
    p: int,
    T_grid: Sequence[float],
    c_min: float = 0.05,
    psi0: Optional[Callable[[PhysicalFiber], np.ndarray]] = None,
    mode_half: Optional[int] = 30,
    tol: float = 1e-8,
    window: Optional[Window] = None,
    theta_count: Optional[int] = None,
    threads: int = 1,
) -> List[ConvergenceReport]:
    """Per-sample ballistic diagnostics.

    For each ``x``: ``|X(T) psi0| / T``, Cauchy differences ``|Q(x, 2T) psi0 - Q(x, T) psi0|``,
    and (for ``psi0 = d_p`` with ``mode_half`` set) the gap to the dual prediction. The sample is
    flagged ballistic when the last velocity exceeds ``c_min`` and the Cauchy differences decrease
    (or have reached ``tol``).
    ``psi0`` maps the fiber to an initial state; default ``d_p``.
    """
    T_grid = np.asarray(T_grid, dtype=float)
    if window is None:
        window = window_for_horizon(2 * T_grid.max(), v.support_radius + abs(p), tol)
    reports = []
    for x in x_samples:
        fiber = PhysicalFiber(v, alpha, eps, x, window)
        start = fiber.delta(p) if psi0 is None else np.asarray(psi0(fiber))
        vel = np.array([position_moment(propagate(fiber.eig, start, T), window)[1] / T for T in T_grid])
        q_t = {T: fiber.velocity_apply(T, start) for T in np.unique(np.concatenate([T_grid, 2 * T_grid]))}
        cauchy = np.array([np.linalg.norm(q_t[2 * T] - q_t[T]) for T in T_grid])
        if psi0 is None and mode_half is not None:
            pred = dual_prediction(v, alpha, eps, x, p, mode_half, window, theta_count, threads)
            gap = np.array([np.linalg.norm(q_t[T] - pred) for T in T_grid])
        else:
            gap = np.full(len(T_grid), np.nan)
        # a difference at the tolerance floor counts as converged, not as a failure to decrease
        settling = (np.diff(cauchy) < 0) | (cauchy[1:] <= tol)
        ballistic = bool(vel[-1] > c_min and np.all(settling))
        reports.append(ConvergenceReport(np.atleast_1d(np.asarray(x, float)), p, T_grid, vel, cauchy, gap, ballistic, window))
    return reports
