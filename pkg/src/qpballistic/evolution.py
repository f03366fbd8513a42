"""Exact dynamics on windowed operators through dense eigendecomposition.

With ``H = sum_j E_j |psi_j><psi_j|`` the Cesaro average of a Heisenberg-evolved observable
has the closed form ``(Q_T)_{jk} = A_{jk} phi((E_j - E_k) T)``, ``phi(s) = (e^{is} - 1)/(is)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg

from .lattice import Window, WindowedOperator

LIEB_ROBINSON_SPEED = 2 * math.e
MARGIN_CONSTANT = 5.0


class EigensolverError(RuntimeError):
    pass


class DegenerateSpectrumWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EigenSystem:
    energies: np.ndarray
    vectors: np.ndarray
    window: Window
    kind: str = ""
    params: dict = field(default_factory=dict)
    norm: float = 0.0

    @property
    def size(self) -> int:
        return len(self.energies)

    def to_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        """``V^dagger op V``; a 1-D ``op`` is treated as a diagonal multiplier."""
        v = self.vectors
        if op.ndim == 1:
            return v.conj().T @ (op[:, None] * v)
        return v.conj().T @ (op @ v)

    def from_eigenbasis(self, m: np.ndarray) -> np.ndarray:
        return self.vectors @ m @ self.vectors.conj().T

    def min_gap(self) -> float:
        if self.size < 2:
            return math.inf
        return float(np.min(np.diff(self.energies)))


def diagonalize(h: WindowedOperator, residual_tol: float = 1e-9, gram_tol: float = 1e-10) -> EigenSystem:
    """Eigendecomposition with a residual and orthonormality audit.

    Dirichlet physical operators are real symmetric tridiagonal and go through the dedicated
    LAPACK tridiagonal driver; everything else uses dense ``eigh``.
    """
    m = h.matrix
    if not np.allclose(m, m.conj().T, atol=1e-12, rtol=0):
        raise EigensolverError("operator is not Hermitian to 1e-12")
    tridiagonal = h.kind == "physical" and np.isrealobj(m) and h.params.get("boundary", "dirichlet") == "dirichlet"
    try:
        if tridiagonal:
            diag, off = np.diag(m).copy(), np.diag(m, 1).copy()
            energies, vectors = scipy.linalg.eigh_tridiagonal(diag, off)
        else:
            energies, vectors = np.linalg.eigh(m)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverError(f"eigensolver failed: {exc}") from exc
    hnorm = float(np.max(np.abs(energies))) if len(energies) else 0.0
    if tridiagonal:
        hv = diag[:, None] * vectors
        hv[:-1] += off[:, None] * vectors[1:]
        hv[1:] += off[:, None] * vectors[:-1]
    else:
        hv = m @ vectors
    resid = np.linalg.norm(hv - vectors * energies, axis=0)
    worst = float(resid.max()) if len(resid) else 0.0
    if worst > residual_tol * max(hnorm, 1.0):
        raise EigensolverError(f"eigenvector residual {worst:.3e} exceeds {residual_tol:.1e}*|H|")
    gram = vectors.conj().T @ vectors
    gram_err = float(np.max(np.abs(gram - np.eye(len(energies))))) if len(energies) else 0.0
    if gram_err > gram_tol:
        raise EigensolverError(f"eigenvectors not orthonormal: max Gram defect {gram_err:.3e}")
    return EigenSystem(energies, vectors, h.window, h.kind, dict(h.params), hnorm)


def propagate(eig: EigenSystem, psi0: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i t H) psi0``."""
    psi0 = np.asarray(psi0)
    if psi0.shape != (eig.size,):
        raise ValueError(f"state has shape {psi0.shape}, window has {eig.size} sites")
    v = eig.vectors
    return v @ (np.exp(-1j * eig.energies * t) * (v.conj().T @ psi0))


def position_moment(psi: np.ndarray, window: Window):
    """Return ``(<X>, |X psi|)``; the mean is normalised by ``|psi|^2``, the norm is not."""
    n = window.positions
    w = np.abs(psi) ** 2
    total = w.sum()
    mean = float((n * w).sum() / total) if total > 0 else 0.0
    return mean, float(np.sqrt((n ** 2 * w).sum()))


def phi(s: np.ndarray) -> np.ndarray:
    """``(e^{is} - 1) / (is)`` with a Taylor branch for ``|s| < 1e-4``."""
    s = np.asarray(s, dtype=float)
    out = np.empty(s.shape, dtype=complex)
    small = np.abs(s) < 1e-4
    ss = s[small]
    out[small] = 1 + 0.5j * ss - ss ** 2 / 6 - 1j * ss ** 3 / 24
    sl = s[~small]
    out[~small] = np.expm1(1j * sl) / (1j * sl)
    return out


@dataclass
class CesaroVelocity:
    """Time-averaged current; ``T = inf`` marks the diagonal-truncation limit."""

    T: float
    matrix: np.ndarray
    basis: str = "site"
    blocks: Optional[List[np.ndarray]] = None


def current_in_eigenbasis(eig: EigenSystem, a) -> np.ndarray:
    """``V^dagger A V`` for ``a`` a dense matrix, a diagonal (1-D) or a callable acting on columns."""
    v = eig.vectors
    if callable(a):
        av = a(v)
        if np.isrealobj(v):
            # strided .real/.imag views would bypass BLAS
            re, im = np.ascontiguousarray(av.real), np.ascontiguousarray(av.imag)
            return v.T @ re + 1j * (v.T @ im)
        return v.conj().T @ av
    return eig.to_eigenbasis(np.asarray(a))


def cesaro_velocity(eig: EigenSystem, a, T: float, basis: str = "site") -> CesaroVelocity:
    """``(1/T) int_0^T e^{iHt} A e^{-iHt} dt`` in closed form.

    ``a`` is the current as a dense matrix or, for multiplication operators, its diagonal.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    a_eig = current_in_eigenbasis(eig, a)
    e = eig.energies
    q = a_eig * phi((e[:, None] - e[None, :]) * T)
    if basis == "site":
        q = eig.from_eigenbasis(q)
    return CesaroVelocity(float(T), q, basis)


def cesaro_velocity_apply(eig: EigenSystem, a_eig: np.ndarray, T: float, psi: np.ndarray, chunk: int = 512) -> np.ndarray:
    """``Q_T psi`` in the site basis, given the current already in the eigenbasis.

    Works in row blocks so the full ``phi`` matrix is never formed.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    v = eig.vectors
    b = v.conj().T @ psi
    e = eig.energies
    c = np.empty(eig.size, dtype=complex)
    for start in range(0, eig.size, chunk):
        sl = slice(start, start + chunk)
        c[sl] = (a_eig[sl] * phi((e[sl, None] - e[None, :]) * T)) @ b
    return v @ c


def degenerate_blocks(energies: np.ndarray, gap_tol: float) -> List[np.ndarray]:
    """Group consecutive (sorted) eigenvalues closer than ``gap_tol``."""
    blocks = []
    start = 0
    for j in range(1, len(energies) + 1):
        if j == len(energies) or energies[j] - energies[j - 1] >= gap_tol:
            blocks.append(np.arange(start, j))
            start = j
    return blocks


def asymptotic_diagonal(
    eig: EigenSystem, a, gap_tol: Optional[float] = None, basis: str = "site", warn: bool = True
) -> CesaroVelocity:
    """``T -> inf`` limit of the Cesaro average: the (block-)diagonal part of ``A`` in the eigenbasis.

    Eigenvalues closer than ``gap_tol`` (default ``1e-10 |H|``) share a block; a
    ``DegenerateSpectrumWarning`` reports those blocks.
    """
    if gap_tol is None:
        gap_tol = 1e-10 * max(eig.norm, 1.0)
    a_eig = current_in_eigenbasis(eig, a)
    blocks = degenerate_blocks(eig.energies, gap_tol)
    q = np.zeros_like(a_eig)
    multi = [b for b in blocks if len(b) > 1]
    if multi and warn:
        warnings.warn(
            f"{len(multi)} degenerate eigenvalue blocks (sizes {[len(b) for b in multi]}); "
            "using block-diagonal truncation",
            DegenerateSpectrumWarning,
            stacklevel=2,
        )
    for b in blocks:
        q[np.ix_(b, b)] = a_eig[np.ix_(b, b)]
    if basis == "site":
        q = eig.from_eigenbasis(q)
    return CesaroVelocity(math.inf, q, basis, multi or None)


def window_for_horizon(T: float, support_radius: int, tol: float) -> Window:
    """Half-width ``ceil(r + 2e T + 5 ln(1/tol))`` for evolution up to time ``T``."""
    if T < 0 or tol <= 0:
        raise ValueError("need T >= 0 and tol > 0")
    n = math.ceil(support_radius + LIEB_ROBINSON_SPEED * T + MARGIN_CONSTANT * math.log(1 / tol))
    return Window(max(n, 1), 1)
