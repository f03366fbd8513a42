"""Aubry duality on finitely supported fibered functions, and the sheared L21 norm.

A physical function ``Psi(x, n) = sum_m c(m, n) exp(2 pi i m.x)`` is stored as the array
``c[m, n]`` (x-modes by sites). Its dual ``(U Psi)(theta, m) = sum_q d(q, m) exp(2 pi i q theta)``
is stored as ``d[q, m]`` (theta-modes by sites).

The transform is ``(U Psi)(theta, m) = sum_n int exp(2 pi i (n theta' + m.x)) Psi(x, n) dx`` at
``theta' = theta + alpha.m``, i.e. ``d(q, m) = c(-m, q) exp(2 pi i q m.alpha)``. With this sign
the hopping becomes ``2cos 2pi(theta + m.alpha)``, the current becomes ``2 sin 2pi(theta + m.alpha)``
and ``v(x + n alpha)`` becomes convolution with ``vhat(m' - m)``: ``U H_v U^-1`` is the dual
operator of the reflected potential ``v(-x)``, which is ``v`` itself whenever ``v`` is even.
Everything acts on coefficients, so the identity holds to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .lattice import FrequencyVector, TrigPotential, Window


class MarginError(ValueError):
    """A test function reaches the edge of its coefficient box."""


class QuadratureError(RuntimeError):
    pass


@dataclass
class FiberedFunction:
    """Coefficient array ``data[mode, site]`` with the two index boxes.

    ``kind == "physical"``: modes are x-modes in ``Z^d``, sites are ``n`` in ``Z``.
    ``kind == "dual"``: modes are theta-modes ``q`` in ``Z``, sites are ``m`` in ``Z^d``.
    """

    kind: str
    data: np.ndarray
    modes: Window
    sites: Window

    def __post_init__(self):
        if self.kind not in ("physical", "dual"):
            raise ValueError(f"unknown representation {self.kind!r}")
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != (self.modes.site_count, self.sites.site_count):
            raise ValueError("coefficient array does not match index boxes")

    @classmethod
    def zeros(cls, kind: str, modes: Window, sites: Window) -> "FiberedFunction":
        return cls(kind, np.zeros((modes.site_count, sites.site_count), dtype=complex), modes, sites)

    def norm(self) -> float:
        """``l2`` norm of the function, equal to that of its coefficients (Parseval)."""
        return float(np.linalg.norm(self.data))

    def copy(self, data=None) -> "FiberedFunction":
        return FiberedFunction(self.kind, self.data.copy() if data is None else data, self.modes, self.sites)

    def support_extent(self):
        """Largest sup-norm of a mode and of a site carrying a nonzero coefficient."""
        nz = np.nonzero(self.data)
        if len(nz[0]) == 0:
            return -1, -1
        return int(self.modes.sup_norms()[nz[0]].max()), int(self.sites.sup_norms()[nz[1]].max())

    def physical_values(self, x) -> np.ndarray:
        """``Psi(x, .)`` for a physical function at a point ``x`` of the d-torus."""
        if self.kind != "physical":
            raise ValueError("not a physical function")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ph = np.exp(2j * np.pi * (self.modes.sites @ x))
        return ph @ self.data


def single_mode(kind: str, mode, site, modes: Window, sites: Window, amplitude: complex = 1.0) -> FiberedFunction:
    f = FiberedFunction.zeros(kind, modes, sites)
    f.data[modes.index(mode), sites.index(site)] = amplitude
    return f


def _dual_phases(alpha: FrequencyVector, q: np.ndarray, m_sites: np.ndarray) -> np.ndarray:
    return np.exp(2j * np.pi * np.outer(q, m_sites @ alpha.vector))


def duality_transform(psi: FiberedFunction, alpha: FrequencyVector) -> FiberedFunction:
    """``(U Psi)(theta, m) = Psi~(m, theta + alpha.m)`` on coefficients."""
    if psi.kind != "physical":
        raise ValueError("duality_transform expects a physical function")
    if psi.sites.dimension != 1:
        raise ValueError("physical sites must be one-dimensional")
    q = psi.sites.positions
    # mode -m sits at the mirrored lexicographic index
    data = psi.data[::-1].T * _dual_phases(alpha, q, psi.modes.sites)
    return FiberedFunction("dual", data, psi.sites, psi.modes)


def inverse_duality_transform(phi: FiberedFunction, alpha: FrequencyVector) -> FiberedFunction:
    if phi.kind != "dual":
        raise ValueError("inverse_duality_transform expects a dual function")
    q = phi.modes.positions
    data = (phi.data * np.conj(_dual_phases(alpha, q, phi.sites.sites))).T[::-1]
    return FiberedFunction("physical", data, phi.sites, phi.modes)


def _shift(grid: np.ndarray, s, axes_count: int) -> np.ndarray:
    """``out[i] = grid[i - s]`` on the leading ``axes_count`` axes, zero-filled."""
    out = np.zeros_like(grid)
    dst, src = [], []
    for k, sk in enumerate(s):
        side = grid.shape[k]
        if abs(sk) >= side:
            return out
        dst.append(slice(max(sk, 0), side + min(sk, 0)))
        src.append(slice(max(-sk, 0), side - max(sk, 0)))
    out[tuple(dst)] = grid[tuple(src)]
    return out


def apply_physical_hamiltonian(psi: FiberedFunction, v: TrigPotential, alpha: FrequencyVector, eps: float) -> FiberedFunction:
    """Fiberwise ``H(x)`` written on x-modes.

    Hopping shifts ``n``; multiplication by ``v(x + n alpha)`` convolves the modes with
    ``vhat(s) exp(2 pi i s.alpha n)``.
    """
    c = psi.data
    out = np.zeros_like(c)
    out[:, :-1] += c[:, 1:]
    out[:, 1:] += c[:, :-1]
    if eps:
        d = psi.modes.dimension
        grid = c.reshape((psi.modes.side,) * d + (c.shape[1],))
        n = psi.sites.positions
        acc = np.zeros_like(grid)
        for s, coef in v.coeffs.items():
            phase = np.exp(2j * np.pi * np.dot(s, alpha.vector) * n)
            acc += eps * coef * _shift(grid, s, d) * phase
        out += acc.reshape(c.shape)
    return psi.copy(out)


def apply_dual_hamiltonian(phi: FiberedFunction, v: TrigPotential, alpha: FrequencyVector, eps: float) -> FiberedFunction:
    """Fiberwise ``H~(theta)`` written on theta-modes.

    ``2cos 2pi(theta + m.alpha)`` shifts ``q`` by one with phases ``exp(+-2 pi i m.alpha)``.
    """
    d_ = phi.data
    ph = np.exp(2j * np.pi * (phi.sites.sites @ alpha.vector))
    out = np.zeros_like(d_)
    out[1:] += d_[:-1] * ph
    out[:-1] += d_[1:] * np.conj(ph)
    if eps:
        d = phi.sites.dimension
        grid = d_.T.reshape((phi.sites.side,) * d + (d_.shape[0],))
        acc = np.zeros_like(grid)
        for s, coef in v.coeffs.items():
            acc += eps * coef * _shift(grid, s, d)
        out += acc.reshape(d_.shape[1], d_.shape[0]).T
    return phi.copy(out)


def random_fibered(rng: np.random.Generator, modes: Window, sites: Window, mode_radius: int, site_radius: int) -> FiberedFunction:
    """Gaussian physical function supported on ``|m| <= mode_radius``, ``|n| <= site_radius``."""
    data = rng.standard_normal((modes.site_count, sites.site_count)) + 1j * rng.standard_normal(
        (modes.site_count, sites.site_count)
    )
    mask = np.outer(modes.sup_norms() <= mode_radius, sites.sup_norms() <= site_radius)
    return FiberedFunction("physical", data * mask, modes, sites)


def duality_residuals(
    v: TrigPotential,
    alpha: FrequencyVector,
    eps: float,
    test_count: int,
    mode_half: int,
    site_half: int,
    rng: Optional[np.random.Generator] = None,
    dual_alpha: Optional[FrequencyVector] = None,
    vectors=None,
) -> list:
    """``|(U H - H~ U) Psi| / |Psi|`` for each test function.

    ``H~`` is built from the reflected potential (see the module docstring).
    ``dual_alpha`` replaces the frequency inside ``H~`` only (negative control).
    Explicit ``vectors`` must leave a margin of ``support_radius`` modes and one site.
    """
    r = v.support_radius
    if r >= mode_half or site_half < 1:
        raise MarginError(f"boxes (modes {mode_half}, sites {site_half}) too small for support radius {r}")
    modes = Window(mode_half, v.dimension)
    sites = Window(site_half, 1)
    if vectors is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        vectors = [random_fibered(rng, modes, sites, mode_half - r, site_half - 1) for _ in range(test_count)]
    dual_alpha = dual_alpha or alpha
    dual_v = v.reflected()
    out = []
    for i, psi in enumerate(vectors):
        me, se = psi.support_extent()
        if me > mode_half - r or se > site_half - 1:
            raise MarginError(f"test vector {i} reaches the box edge (mode {me}, site {se})")
        lhs = duality_transform(apply_physical_hamiltonian(psi, v, alpha, eps), alpha)
        rhs = apply_dual_hamiltonian(duality_transform(psi, alpha), dual_v, dual_alpha, eps)
        nrm = psi.norm()
        out.append(float(np.linalg.norm(lhs.data - rhs.data)) / nrm if nrm > 0 else 0.0)
    return out


def verify_duality(
    v: TrigPotential,
    alpha: FrequencyVector,
    eps: float,
    test_count: int,
    mode_half: int,
    site_half: int,
    rng: Optional[np.random.Generator] = None,
    dual_alpha: Optional[FrequencyVector] = None,
    vectors=None,
) -> float:
    """Max over test functions of ``|(U H - H~ U) Psi| / |Psi|``."""
    res = duality_residuals(v, alpha, eps, test_count, mode_half, site_half, rng, dual_alpha, vectors)
    return max(res, default=0.0)


@dataclass(frozen=True)
class ShearPhases:
    """Rule ``m -> theta_m`` for the sheared L21 norm."""

    rule: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def canonical(cls, alpha: FrequencyVector) -> "ShearPhases":
        """``theta_m = m.alpha``."""
        a = alpha.vector
        return cls(lambda sites: sites @ a)

    @classmethod
    def zero(cls) -> "ShearPhases":
        return cls(lambda sites: np.zeros(len(sites)))

    @classmethod
    def table(cls, values) -> "ShearPhases":
        values = np.asarray(values, dtype=float)
        return cls(lambda sites: values[: len(sites)])

    def values(self, sites: Window) -> np.ndarray:
        return np.asarray(self.rule(sites.sites), dtype=float)


def l21_dual_norm(phi: FiberedFunction, phases: ShearPhases, tol: float = 1e-8, max_grid: int = 1 << 20) -> float:
    """``{ int_T ( sum_m |Phi(theta + theta_m; m)| )^2 dtheta }^{1/2}``.

    Each fiber is a trigonometric polynomial in theta; the shear multiplies coefficient ``q``
    by ``exp(2 pi i q theta_m)``. The outer integral uses the periodic trapezoid rule on a grid
    of at least ``8 (deg + 1)`` points, doubled until two successive values agree to ``tol``.
    """
    if phi.kind != "dual":
        raise ValueError("L21 norm is defined on dual functions")
    q = phi.modes.positions
    rows = np.nonzero(np.any(phi.data != 0, axis=1))[0]
    if len(rows) == 0:
        return 0.0
    deg = int(np.abs(q[rows]).max())
    coeffs = phi.data * np.exp(2j * np.pi * np.outer(q, phases.values(phi.sites)))
    grid = 8 * (deg + 1)
    prev = None
    while grid <= max_grid:
        buf = np.zeros((grid, coeffs.shape[1]), dtype=complex)
        buf[np.mod(q, grid)] = coeffs
        vals = np.fft.ifft(buf, axis=0) * grid
        cur = float(np.sqrt(np.mean(np.abs(vals).sum(axis=1) ** 2)))
        if prev is not None and abs(cur - prev) <= tol * max(1.0, cur):
            return cur
        prev = cur
        grid *= 2
    raise QuadratureError(f"L21 quadrature did not settle to {tol} by grid size {grid // 2}")


def l2_dual_norm(phi: FiberedFunction) -> float:
    """Norm in ``L^2(T; l^2)``."""
    return phi.norm()
