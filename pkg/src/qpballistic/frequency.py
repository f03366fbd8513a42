"""Continued fractions, the exponential growth rate beta(alpha), and Diophantine scans.

Convergents follow ``alpha = [0; a_1, a_2, ...]`` with ``p_{-1}/q_{-1} = 1/0`` and
``p_0/q_0 = 0/1``. All integer arithmetic is exact (Python ints).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import mpmath
import numpy as np

from .lattice import FrequencyVector


class PrecisionExhaustedError(ArithmeticError):
    """The input number is not known precisely enough for the requested depth."""


@dataclass(frozen=True)
class ContinuedFraction:
    quotients: Tuple[int, ...]
    numerators: Tuple[int, ...]
    denominators: Tuple[int, ...]
    terminated: bool = False

    @classmethod
    def from_quotients(cls, quotients: Sequence[int], terminated: bool = False) -> "ContinuedFraction":
        quotients = tuple(int(a) for a in quotients)
        if any(a <= 0 for a in quotients):
            raise ValueError("partial quotients must be positive")
        p_prev, p = 1, 0
        q_prev, q = 0, 1
        ps, qs = [p], [q]
        for a in quotients:
            p_prev, p = p, a * p + p_prev
            q_prev, q = q, a * q + q_prev
            ps.append(p)
            qs.append(q)
        return cls(quotients, tuple(ps), tuple(qs), terminated)

    @property
    def depth(self) -> int:
        return len(self.quotients)

    @property
    def value(self) -> Fraction:
        """Deepest convergent ``p_K / q_K``."""
        return Fraction(self.numerators[-1], self.denominators[-1])

    def convergent(self, k: int) -> Fraction:
        return Fraction(self.numerators[k], self.denominators[k])


def _expand(x: Fraction, depth: int) -> Tuple[List[int], bool]:
    out = []
    for _ in range(depth):
        if x == 0:
            return out, True
        y = 1 / x
        a = math.floor(y)
        out.append(a)
        x = y - a
    return out, x == 0


def continued_fraction(alpha, depth: int) -> ContinuedFraction:
    """Expand ``alpha`` in ``(0, 1)`` to ``depth`` partial quotients.

    ``alpha`` may be a float, an ``mpmath.mpf`` or an exact ``Fraction``. Inexact inputs
    are expanded as an interval of one unit in the last place around the value; a quotient
    is accepted only when both interval ends agree on it.
    """
    if isinstance(alpha, Fraction):
        lo = hi = alpha
    elif isinstance(alpha, mpmath.mpf):
        man, exp = alpha.man_exp
        mid = Fraction(int(man)) * Fraction(2) ** int(exp)
        ulp = Fraction(2) ** int(exp)
        lo, hi = mid - ulp, mid + ulp
    else:
        a = float(alpha)
        mid = Fraction(a)
        ulp = Fraction(math.ulp(a))
        lo, hi = mid - ulp, mid + ulp
    if not 0 < lo <= hi < 1:
        raise ValueError("alpha must lie in (0, 1)")
    (qa, end_a), (qb, end_b) = _expand(lo, depth), _expand(hi, depth)
    if lo == hi:
        return ContinuedFraction.from_quotients(qa, terminated=end_a)
    common = [a for a, b in itertools.takewhile(lambda t: t[0] == t[1], zip(qa, qb))]
    # an interval end that is itself a convergent does not pin down its last quotient
    if common and ((end_a and len(qa) == len(common)) or (end_b and len(qb) == len(common))):
        common = common[:-1]
    if len(common) < depth:
        raise PrecisionExhaustedError(
            f"input precision supports only {len(common)} partial quotients, {depth} requested"
        )
    return ContinuedFraction.from_quotients(common[:depth])


def liouville_quotients(beta: float, depth: int, period: int = 5) -> List[int]:
    """Quotients with ``ln q_{k+1} / q_k ~ beta`` along a sparse subsequence.

    ``a_{k+1} = ceil(exp(beta q_k) / q_k)`` whenever ``k + 1`` is a multiple of ``period``
    and ``a_{k+1} = 1`` otherwise, so that ``beta`` is the limsup of the infinite expansion.
    """
    if beta <= 0 or period < 1:
        raise ValueError("beta and period must be positive")
    quotients: List[int] = []
    q_prev, q = 0, 1
    for k in range(depth):
        if (k + 1) % period == 0:
            with mpmath.workdps(int(beta * q / 2.3) + 30):
                a = int(mpmath.ceil(mpmath.exp(beta * q) / q))
        else:
            a = 1
        quotients.append(a)
        q_prev, q = q, a * q + q_prev
    return quotients


def growth_ratios(cf: ContinuedFraction) -> np.ndarray:
    """``ln q_{k+1} / q_k`` for ``k = 0 .. K-1``."""
    qs = cf.denominators
    return np.array([math.log(qs[k + 1]) / qs[k] for k in range(len(qs) - 1)])


def beta_estimate(cf: ContinuedFraction, tail_start: Optional[int] = None) -> float:
    """Finite-depth lower proxy for ``beta(alpha) = limsup ln q_{k+1} / q_k``.

    Returns the maximum ratio over ``k >= tail_start`` (default: the second half of the
    available ratios), i.e. the sup of the tail that the limsup is the limit of.
    """
    ratios = growth_ratios(cf)
    if len(ratios) < 2:
        raise ValueError("need at least 3 convergents")
    if tail_start is None:
        tail_start = len(ratios) // 2
    return float(ratios[tail_start:].max())


@dataclass(frozen=True)
class DiophantineCertificate:
    c: float
    tau: float
    k_max: int
    verified: bool
    worst_k: Tuple[int, ...]
    c_max: float
    """Largest ``c`` for which the scan passes: ``min_k dist(k.alpha, Z) |k|^tau``."""


def _dist_to_int(x: np.ndarray) -> np.ndarray:
    return np.abs(x - np.rint(x))


def diophantine_check(alpha: FrequencyVector, c: float, tau: float, k_max: int, chunk: int = 1 << 18) -> DiophantineCertificate:
    """Exhaustive scan of ``dist(k.alpha, Z) >= c |k|_inf^-tau`` over ``0 < |k|_inf <= k_max``.

    Only one of ``k, -k`` is scanned since both give the same distance.
    """
    if c <= 0 or tau <= 0:
        raise ValueError("c and tau must be positive")
    d = alpha.dimension
    a = alpha.vector
    if alpha.rational_denominator is not None:
        num = np.rint(a * alpha.rational_denominator).astype(np.int64)
    best = math.inf
    worst = None
    # k with first nonzero coordinate positive, generated coordinate-major in blocks
    r = np.arange(-k_max, k_max + 1)
    for lead in range(d):
        tail_dims = d - lead - 1
        firsts = np.arange(1, k_max + 1)
        if tail_dims:
            tails = np.array(np.meshgrid(*([r] * tail_dims), indexing="ij")).reshape(tail_dims, -1).T
        else:
            tails = np.zeros((1, 0), dtype=int)
        for start in range(0, len(firsts), max(1, chunk // len(tails))):
            f = firsts[start:start + max(1, chunk // len(tails))]
            ks = np.zeros((len(f) * len(tails), d), dtype=np.int64)
            ks[:, lead] = np.repeat(f, len(tails))
            ks[:, lead + 1:] = np.tile(tails, (len(f), 1))
            if alpha.rational_denominator is not None:
                resid = np.mod(ks @ num, alpha.rational_denominator)
                dist = np.minimum(resid, alpha.rational_denominator - resid) / alpha.rational_denominator
            else:
                dist = _dist_to_int(ks @ a)
            score = dist * np.abs(ks).max(axis=1).astype(float) ** tau
            i = int(np.argmin(score))
            if score[i] < best:
                best = float(score[i])
                worst = tuple(int(t) for t in ks[i])
    return DiophantineCertificate(c, tau, k_max, bool(best >= c), worst, best)
