"""Small numerical building blocks shared by the solver modules.

Nothing here knows about utilities or markets: a bracketed bisection, the
Dormand-Prince 5(4) tableau and a piecewise cubic Hermite interpolant with an
optional Fritsch-Carlson monotonicity limiter.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

# Root-finder defaults; overridable per call.
XTOL = 1e-12
FTOL = 1e-10


class SolverError(RuntimeError):
    """Raised when a numerical routine cannot deliver a result.

    ``state`` carries whatever diagnostic context the caller attached
    (last accepted state, bracket endpoints, ...).
    """

    def __init__(self, message: str, **state):
        super().__init__(message)
        self.state = state


def bisect(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    xtol: float = XTOL,
    ftol: float = FTOL,
    maxiter: int = 400,
) -> float:
    """Root of ``f`` on ``[lo, hi]`` by bisection.

    Stops once the bracket is narrower than ``xtol`` (absolute), once
    ``|f(mid)| < ftol``, or when the bracket can no longer shrink in floating
    point. ``f(lo)`` and ``f(hi)`` must have opposite signs (zero allowed).
    """
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise SolverError("bisect: root not bracketed", lo=lo, hi=hi, flo=flo, fhi=fhi)
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if abs(fm) < ftol or (hi - lo) < xtol:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return lo if abs(flo) <= abs(fhi) else hi


def invert_decreasing(
    f: Callable[[float], float],
    target: float,
    lo: float = 1e-12,
    hi: float = 1.0,
    max_doublings: int = 200,
) -> float:
    """Solve ``f(x) = target`` for a strictly decreasing ``f`` on ``(0, inf)``.

    The bracket ``[lo, hi]`` is expanded geometrically (``lo`` halved, ``hi``
    doubled) until it encloses the solution.
    """
    for _ in range(max_doublings):
        if f(lo) >= target:
            break
        lo *= 0.5
        if lo == 0.0:
            raise SolverError("invert_decreasing: target above f near 0", target=target)
    else:
        raise SolverError("invert_decreasing: lower bracket not found", target=target)
    for _ in range(max_doublings):
        if f(hi) <= target:
            break
        hi *= 2.0
    else:
        raise SolverError(
            "invert_decreasing: upper bracket not found after %d doublings" % max_doublings,
            target=target,
            hi=hi,
        )
    return bisect(lambda x: f(x) - target, lo, hi, xtol=0.0, ftol=0.0)


# Dormand-Prince 5(4) coefficients.
DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
DP_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
# b - b_hat, the embedded 4th-order error weights
DP_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


def dopri_step(rhs, s: float, y: tuple, h: float, k1: tuple | None = None):
    """One Dormand-Prince step for a small tuple-valued system.

    Returns ``(y_new, err, k7)`` where ``err`` is the componentwise embedded
    error estimate and ``k7`` the derivative at the new point (FSAL).
    """
    n = len(y)
    if k1 is None:
        k1 = rhs(s, y)
    ks = [k1]
    for i in range(1, 6):
        a = DP_A[i]
        yi = tuple(y[j] + h * sum(a[m] * ks[m][j] for m in range(i)) for j in range(n))
        ks.append(rhs(s + DP_C[i] * h, yi))
    b = DP_B
    y_new = tuple(y[j] + h * sum(b[m] * ks[m][j] for m in range(6)) for j in range(n))
    k7 = rhs(s + h, y_new)
    ks.append(k7)
    err = tuple(h * sum(DP_E[m] * ks[m][j] for m in range(7)) for j in range(n))
    return y_new, err, k7


def error_norm(err: tuple, y_old: tuple, y_new: tuple, rtol: float, atol: float) -> float:
    acc = 0.0
    for e, a, b in zip(err, y_old, y_new):
        sc = atol + rtol * max(abs(a), abs(b))
        acc += (e / sc) ** 2
    return math.sqrt(acc / len(err))


class CubicHermite:
    """Piecewise cubic Hermite interpolant on a strictly increasing grid.

    Parameters
    ----------
    x, y : array_like
        Nodes and values.
    slopes : array_like, optional
        Derivatives at the nodes. When omitted they are estimated with the
        Fritsch-Carlson three-point formula.
    monotone : bool
        Apply the Fritsch-Carlson limiter so that monotone data yields a
        monotone interpolant.
    """

    def __init__(self, x, y, slopes=None, monotone: bool = False):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("CubicHermite needs matching 1-D arrays with >= 2 nodes")
        h = np.diff(x)
        if np.any(h <= 0):
            raise ValueError("CubicHermite nodes must be strictly increasing")
        delta = np.diff(y) / h
        if slopes is None:
            m = np.empty_like(y)
            m[1:-1] = 0.5 * (delta[:-1] + delta[1:])
            m[0] = delta[0]
            m[-1] = delta[-1]
        else:
            m = np.array(slopes, dtype=float)
        if monotone:
            m = fritsch_carlson_limit(delta, m)
        self.x = x
        self.y = y
        self.m = m

    def _locate(self, xq):
        idx = np.searchsorted(self.x, xq, side="right") - 1
        return np.clip(idx, 0, self.x.size - 2)

    def __call__(self, xq, nu: int = 0):
        xq = np.asarray(xq, dtype=float)
        i = self._locate(xq)
        x0 = self.x[i]
        h = self.x[i + 1] - x0
        t = (xq - x0) / h
        y0, y1 = self.y[i], self.y[i + 1]
        m0, m1 = self.m[i] * h, self.m[i + 1] * h
        if nu == 0:
            t2 = t * t
            t3 = t2 * t
            return (
                (2 * t3 - 3 * t2 + 1) * y0
                + (t3 - 2 * t2 + t) * m0
                + (-2 * t3 + 3 * t2) * y1
                + (t3 - t2) * m1
            )
        if nu == 1:
            t2 = t * t
            return (
                (6 * t2 - 6 * t) * y0
                + (3 * t2 - 4 * t + 1) * m0
                + (-6 * t2 + 6 * t) * y1
                + (3 * t2 - 2 * t) * m1
            ) / h
        raise ValueError("only nu in {0, 1} is supported")


def fritsch_carlson_limit(delta: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Fritsch-Carlson slope limiter for monotone cubic interpolation."""
    m = m.copy()
    n = delta.size
    for k in range(n):
        d = delta[k]
        if d == 0.0:
            m[k] = 0.0
            m[k + 1] = 0.0
            continue
        if np.sign(m[k]) != np.sign(d):
            m[k] = 0.0
        if np.sign(m[k + 1]) != np.sign(d):
            m[k + 1] = 0.0
        a = m[k] / d
        b = m[k + 1] / d
        r2 = a * a + b * b
        if r2 > 9.0:
            tau = 3.0 / math.sqrt(r2)
            m[k] = tau * a * d
            m[k + 1] = tau * b * d
    return m
