"""Quasiperiodic operators on finite lattice windows.

Physical side: ``(H(x)psi)(n) = psi(n+1) + psi(n-1) + eps*v(x + n*alpha)*psi(n)``
on ``{n : |n| <= N}``. Dual side: ``eps*(vhat * psi)(m) + 2cos 2pi(theta + m.alpha) psi(m)``
on the box ``{m in Z^d : |m|_inf <= N}``. All windows use a hard (Dirichlet) cutoff.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

GOLDEN_MEAN = (np.sqrt(5.0) - 1.0) / 2.0


class InvalidPotentialError(ValueError):
    """Potential coefficients do not describe a real-valued function."""


@dataclass(frozen=True)
class TrigPotential:
    """Trigonometric polynomial ``v(x) = sum_m vhat(m) exp(2 pi i m.x)`` on the d-torus."""

    coeffs: Mapping[tuple, complex]
    dimension: int = 1

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        clean = {}
        for m, c in self.coeffs.items():
            m = tuple(int(k) for k in np.atleast_1d(m))
            if len(m) != self.dimension:
                raise ValueError(f"mode {m} does not have dimension {self.dimension}")
            c = complex(c)
            if c != 0:
                clean[m] = clean.get(m, 0) + c
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    @classmethod
    def almost_mathieu(cls, dimension: int = 1) -> "TrigPotential":
        """``v(x) = 2 cos 2 pi x_1``."""
        e = (1,) + (0,) * (dimension - 1)
        return cls({e: 1.0, tuple(-k for k in e): 1.0}, dimension)

    @classmethod
    def from_records(cls, records: Iterable[Sequence]) -> "TrigPotential":
        """Build from ``(m, re, im)`` records, ``m`` an int or a list of ints."""
        coeffs = {}
        dims = set()
        for m, re, im in records:
            m = tuple(int(k) for k in np.atleast_1d(m))
            dims.add(len(m))
            coeffs[m] = coeffs.get(m, 0) + complex(float(re), float(im))
        if len(dims) != 1:
            raise ValueError("potential records must share one dimension")
        return cls(coeffs, dims.pop())

    def to_records(self) -> list:
        return [[list(m), c.real, c.imag] for m, c in self.coeffs.items()]

    @property
    def support_radius(self) -> int:
        if not self.coeffs:
            return 0
        return max(max(abs(k) for k in m) for m in self.coeffs)

    def coefficient(self, m) -> complex:
        return self.coeffs.get(tuple(int(k) for k in np.atleast_1d(m)), 0j)

    def reflected(self) -> "TrigPotential":
        """Coefficients of ``v(-x)``: ``m -> vhat(-m)``."""
        return TrigPotential({tuple(-k for k in m): c for m, c in self.coeffs.items()}, self.dimension)

    def symmetry_defect(self) -> float:
        """``max |vhat(-m) - conj(vhat(m))|``; zero for a real potential."""
        defect = 0.0
        for m, c in self.coeffs.items():
            neg = tuple(-k for k in m)
            defect = max(defect, abs(self.coeffs.get(neg, 0j) - np.conj(c)))
        return defect


@dataclass(frozen=True)
class FrequencyVector:
    """Frequency ``alpha`` in ``[0, 1)^d``, optionally an exact rational with common denominator."""

    alpha: tuple
    rational_denominator: Optional[int] = None

    def __post_init__(self):
        alpha = tuple(float(a) for a in np.atleast_1d(self.alpha))
        if not alpha:
            raise ValueError("alpha must have at least one component")
        for a in alpha:
            if not 0.0 <= a < 1.0:
                raise ValueError(f"frequency component {a} outside [0, 1)")
        if self.rational_denominator is not None:
            q = int(self.rational_denominator)
            if q <= 0:
                raise ValueError("rational_denominator must be positive")
            for a in alpha:
                if abs(a * q - round(a * q)) > 1e-12:
                    raise ValueError(f"{a} is not a multiple of 1/{q}")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def golden(cls) -> "FrequencyVector":
        return cls((GOLDEN_MEAN,))

    @property
    def dimension(self) -> int:
        return len(self.alpha)

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.alpha)


@dataclass(frozen=True)
class Window:
    """Box ``{m in Z^d : |m|_inf <= N}`` enumerated lexicographically.

    Site ``m`` has index ``sum_i (m_i + N) (2N+1)^(d-1-i)``, so for ``d = 1`` site ``n``
    sits at index ``n + N``.
    """

    half_width: int
    dimension: int = 1

    def __post_init__(self):
        if self.half_width < 0:
            raise ValueError("half_width must be nonnegative")
        if self.dimension < 1:
            raise ValueError("dimension must be positive")

    @property
    def side(self) -> int:
        return 2 * self.half_width + 1

    @property
    def site_count(self) -> int:
        return self.side ** self.dimension

    @property
    def sites(self) -> np.ndarray:
        """Integer array of shape ``(site_count, d)`` in index order."""
        r = range(-self.half_width, self.half_width + 1)
        return np.array(list(itertools.product(r, repeat=self.dimension)), dtype=int).reshape(
            self.site_count, self.dimension
        )

    @property
    def positions(self) -> np.ndarray:
        """Site coordinates of a one-dimensional window."""
        if self.dimension != 1:
            raise ValueError("positions only defined for d = 1 windows")
        return np.arange(-self.half_width, self.half_width + 1)

    def index(self, site) -> int:
        site = np.atleast_1d(site)
        if len(site) != self.dimension or np.any(np.abs(site) > self.half_width):
            raise IndexError(f"site {tuple(site)} outside window")
        idx = 0
        for s in site:
            idx = idx * self.side + int(s) + self.half_width
        return idx

    def sup_norms(self) -> np.ndarray:
        """``|m|_inf`` for every site, in index order."""
        return np.abs(self.sites).max(axis=1)

    def projection_mask(self, radius: int) -> np.ndarray:
        """Boolean mask of sites kept by the projection onto ``|m| <= radius``."""
        return self.sup_norms() <= radius


def Window1D(half_width: int) -> Window:
    return Window(half_width, 1)


@dataclass
class WindowedOperator:
    matrix: np.ndarray
    kind: str
    window: Window
    params: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def evaluate_potential(v: TrigPotential, x, tol: float = 1e-10):
    """Evaluate ``v`` at a point (shape ``(d,)``) or a stack of points (shape ``(..., d)``)."""
    x = np.asarray(x, dtype=float)
    if v.dimension == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != v.dimension:
        raise ValueError("point dimension does not match potential")
    total = np.zeros(x.shape[:-1], dtype=complex)
    for m, c in v.coeffs.items():
        total = total + c * np.exp(2j * np.pi * (x @ np.array(m, dtype=float)))
    if np.any(np.abs(total.imag) > tol):
        raise InvalidPotentialError(
            f"potential is not real: max |Im v| = {np.max(np.abs(total.imag)):.3e}"
        )
    out = total.real
    return float(out) if out.ndim == 0 else out


def _orbit(x, alpha: FrequencyVector, n: np.ndarray) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if len(x) != alpha.dimension:
        raise ValueError("x and alpha dimensions differ")
    return np.mod(x[None, :] + n[:, None] * alpha.vector[None, :], 1.0)


BOUNDARIES = ("dirichlet", "periodic")


def _check_boundary(boundary: str, window: Window) -> None:
    if boundary not in BOUNDARIES:
        raise ValueError(f"boundary must be one of {BOUNDARIES}")
    if boundary == "periodic" and window.site_count < 3:
        raise ValueError("a periodic window needs at least 3 sites")


def build_hamiltonian(
    v: TrigPotential, x, alpha: FrequencyVector, eps: float, window: Window, boundary: str = "dirichlet"
) -> WindowedOperator:
    """Physical operator ``H(x)`` on a one-dimensional window.

    Dirichlet windows give a real symmetric tridiagonal matrix. ``boundary="periodic"`` closes
    the chain into a ring, which keeps the free hopping translation invariant.
    """
    _check_boundary(boundary, window)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if window.dimension != 1:
        raise ValueError("physical operator lives on Z")
    if v.dimension != alpha.dimension:
        raise ValueError("potential and frequency dimensions differ")
    n = window.positions
    diag = eps * evaluate_potential(v, _orbit(x, alpha, n)) if eps else np.zeros(len(n))
    h = np.diag(np.asarray(diag, dtype=float))
    off = np.ones(len(n) - 1)
    h += np.diag(off, 1) + np.diag(off, -1)
    if boundary == "periodic":
        h[0, -1] = h[-1, 0] = 1.0
    params = dict(potential=v, x=np.atleast_1d(np.asarray(x, dtype=float)), alpha=alpha, eps=eps, boundary=boundary)
    return WindowedOperator(h, "physical", window, params)


def dual_cosine_diagonal(theta: float, alpha: FrequencyVector, window: Window) -> np.ndarray:
    return 2.0 * np.cos(2 * np.pi * (theta + window.sites @ alpha.vector))


def build_dual_hamiltonian(v: TrigPotential, theta: float, alpha: FrequencyVector, eps: float, window: Window) -> WindowedOperator:
    """Dual operator: ``entry(m, m') = eps vhat(m - m') + delta_{mm'} 2cos 2pi(theta + m.alpha)``."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if not (v.dimension == alpha.dimension == window.dimension):
        raise ValueError("potential, frequency and window dimensions differ")
    sites = window.sites
    h = np.zeros((window.site_count, window.site_count), dtype=complex)
    if eps:
        diff = sites[:, None, :] - sites[None, :, :]
        for m, c in v.coeffs.items():
            h[np.all(diff == np.array(m), axis=-1)] += eps * c
    h[np.diag_indices_from(h)] += dual_cosine_diagonal(theta, alpha, window)
    params = dict(potential=v, theta=float(theta), alpha=alpha, eps=eps)
    return WindowedOperator(h, "dual", window, params)


def apply_current(psi: np.ndarray, boundary: str = "dirichlet") -> np.ndarray:
    """``(A psi)(n) = i (psi(n+1) - psi(n-1))``, zero outside the window (or wrapped)."""
    psi = np.asarray(psi, dtype=complex)
    if boundary == "periodic":
        return 1j * (np.roll(psi, -1, axis=0) - np.roll(psi, 1, axis=0))
    out = np.zeros_like(psi)
    out[:-1] += psi[1:]
    out[1:] -= psi[:-1]
    return 1j * out


def current_matrix(window: Window, boundary: str = "dirichlet") -> np.ndarray:
    """Dense matrix of the hopping current on a one-dimensional window."""
    _check_boundary(boundary, window)
    n = window.site_count
    a = np.zeros((n, n), dtype=complex)
    idx = np.arange(n - 1)
    a[idx, idx + 1] = 1j
    a[idx + 1, idx] = -1j
    if boundary == "periodic":
        a[-1, 0] = 1j
        a[0, -1] = -1j
    return a


def dual_current_diagonal(theta: float, alpha: FrequencyVector, window: Window) -> np.ndarray:
    """Multiplier ``2 sin 2pi(m.alpha + theta)`` of the dual current, in window order."""
    return 2.0 * np.sin(2 * np.pi * (window.sites @ alpha.vector + theta))


def convolve(v: TrigPotential, psi: np.ndarray, window: Window) -> np.ndarray:
    """``(vhat * psi)(n) = sum_m vhat(n - m) psi(m)`` restricted to the window."""
    if v.dimension != window.dimension:
        raise ValueError("potential and window dimensions differ")
    shape = (window.side,) * window.dimension
    grid = np.asarray(psi, dtype=complex).reshape(shape)
    out = np.zeros(shape, dtype=complex)
    for m, c in v.coeffs.items():
        if max(abs(k) for k in m) >= window.side:
            continue
        dst = tuple(slice(max(s, 0), window.side + min(s, 0)) for s in m)
        src = tuple(slice(max(-s, 0), window.side - max(s, 0)) for s in m)
        out[dst] += c * grid[src]
    return out.reshape(-1)
