"""Primal value function and feedback policies from the dual solution.

For ``x < x0`` (austerity) everything is closed-form from the Euler branch:
``v(x) = (1 - lam)(y0 - phi0) / (rho lam) (x / x0)^(lam / (lam - 1)) + U(0) / delta``.
For ``x >= x0`` the Legendre variable ``y = v'(x)`` solves ``-u'(y) = x`` on
the shot grid; then ``v = u + x y`` and ``v'' = -1 / u''(y)``.

Beyond ``x_max = -u'(y_reached)`` the solution is extrapolated with ``phi``
and ``psi`` frozen at their last grid values: ``(1 + rho x) v'(x) = phi_min``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dual import DualSolution, MarketParams
from .utility import chat

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MertonBenchmark:
    """Merton consumption-to-wealth rate and risky weight for power utility ``c^p / p``."""

    gammaM: float
    weight: float
    valid: bool


def merton(market: MarketParams, p: float) -> MertonBenchmark:
    if p == 0 or p >= 1:
        raise ValueError("Merton benchmark needs p < 1, p != 0")
    m = market
    weight = m.mu / ((1.0 - p) * m.sigma**2)
    gm = (m.delta - p * (m.r + m.mu**2 / (2.0 * (1.0 - p) * m.sigma**2))) / (1.0 - p)
    if gm <= 0:
        log.warning("Merton regime ill-posed: gamma_M = %g <= 0", gm)
    return MertonBenchmark(gammaM=gm, weight=weight, valid=gm > 0)


class PrimalSolution:
    """Evaluators for ``v``, ``v'``, ``c*`` and ``pi*`` over the wealth-to-habit ratio."""

    def __init__(self, dual: DualSolution):
        self.dual = dual
        m, env = dual.market, dual.envelope
        self.market = m
        self.x0 = (env.phi0 - dual.y0) / (m.rho * dual.y0)
        # grid of x = -u'(y), increasing with decreasing y
        self._xs = -dual.dus[::-1]
        self._ss = np.log(dual.ys[::-1])
        self.x_max = float(self._xs[-1])
        self.phi_min = float(dual.phis[0])
        self.psi_min = float(dual.psis[0])
        self._v_xmax = float(dual.us[0] + self.x_max * dual.ys[0])

    # -- Legendre inversion -------------------------------------------------

    def _y_of_x(self, x: np.ndarray) -> np.ndarray:
        """Solve ``-u'(y) = x`` for ``x`` in ``[x0, x_max]``."""
        d = self.dual
        rho = self.market.rho
        i = np.clip(np.searchsorted(self._xs, x) - 1, 0, self._xs.size - 2)
        xa, xb = self._xs[i], self._xs[i + 1]
        sa, sb = self._ss[i], self._ss[i + 1]
        t = np.where(xb > xa, (x - xa) / np.where(xb > xa, xb - xa, 1.0), 0.0)
        s = sa + t * (sb - sa)
        lo_s, hi_s = np.minimum(sa, sb), np.maximum(sa, sb)
        for _ in range(3):
            y = np.exp(s)
            phi, psi = d.phi_psi(y)
            f = (phi - y) / (rho * y) - x
            # d/ds of -u'(y) is -phi psi / (rho y)
            df = -phi * psi / (rho * y)
            s = np.clip(s - f / df, lo_s, hi_s)
        return np.exp(s)

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("x must be > 0")
        return x, x < self.x0, x > self.x_max

    def marginal(self, x):
        """``v'(x)``."""
        x, aus, tail = self._split(x)
        y = self._marginal(x, aus, tail)
        return y if y.ndim else float(y)

    def _marginal(self, x, aus, tail):
        d, lam = self.dual, self.dual.roots.lam
        y = np.empty_like(x)
        y[aus] = d.y0 * (x[aus] / self.x0) ** (1.0 / (lam - 1.0))
        y[tail] = self.phi_min / (1.0 + self.market.rho * x[tail])
        mid = ~aus & ~tail
        if mid.any():
            y[mid] = self._y_of_x(x[mid])
            y[mid & (x == self.x0)] = d.y0
        return y

    def value(self, x):
        """``v(x)``."""
        x, aus, tail = self._split(x)
        d, lam, rho = self.dual, self.dual.roots.lam, self.market.rho
        env = d.envelope
        y = self._marginal(x, aus, tail)
        v = np.empty_like(x)
        # v = u - y u' on the Euler branch, hence the (1 - lam) factor
        v[aus] = (1.0 - lam) * (d.y0 - env.phi0) / (rho * lam) * (x[aus] / self.x0) ** (lam / (lam - 1.0)) + (
            env.u_at_zero / self.market.delta
        )
        v[tail] = self._v_xmax + self.phi_min / rho * np.log((1.0 + rho * x[tail]) / (1.0 + rho * self.x_max))
        mid = ~aus & ~tail
        if mid.any():
            phi, psi = d.phi_psi(y[mid])
            u, _, _ = d.u_from_state(y[mid], phi, psi)
            v[mid] = u + x[mid] * y[mid]
        return v if v.ndim else float(v)

    def second(self, x):
        """``v''(x) = -1 / u''(v'(x))``; closed-form in austerity."""
        x, aus, tail = self._split(x)
        d, lam, rho = self.dual, self.dual.roots.lam, self.market.rho
        y = self._marginal(x, aus, tail)
        out = np.empty_like(x)
        out[aus] = y[aus] / ((lam - 1.0) * x[aus])
        phi, psi = self._state(y, aus, tail)
        nz = ~aus
        out[nz] = -rho * y[nz] ** 2 / (phi[nz] * psi[nz])
        return out if out.ndim else float(out)

    def _state(self, y, aus, tail):
        """``(phi, psi)`` at the Legendre variable, clamped beyond the grid."""
        d = self.dual
        phi = np.full_like(y, d.envelope.phi0)
        psi = np.zeros_like(y)
        mid = ~aus & ~tail
        if mid.any():
            phi[mid], psi[mid] = d.phi_psi(y[mid])
            phi[mid] = np.minimum(phi[mid], d.envelope.phi0)
            at_edge = y[mid] >= d.y0
            phi[mid] = np.where(at_edge, d.envelope.phi0, phi[mid])
        phi[tail] = self.phi_min
        psi[tail] = self.psi_min
        return phi, psi

    # -- policies -----------------------------------------------------------

    def policy_c(self, x):
        """Optimal consumption-to-habit ratio ``c*(x)``."""
        x, aus, tail = self._split(x)
        if tail.any():
            log.warning("policy_c: %d queries beyond x_max=%.4g use clamped tail", tail.sum(), self.x_max)
        y = self._marginal(x, aus, tail)
        phi, _ = self._state(y, aus, tail)
        d = self.dual
        c = np.asarray(chat(d.spec, d.envelope, phi), dtype=float)
        c = np.where(aus, 0.0, c)
        return c if c.ndim else float(c)

    def policy_pi(self, x):
        """Optimal amount invested in the risky asset relative to habit, ``pi*(x)``."""
        x, aus, tail = self._split(x)
        m, lam = self.market, self.dual.roots.lam
        y = self._marginal(x, aus, tail)
        _, psi = self._state(y, aus, tail)
        pi = np.where(
            aus,
            m.mu * (1.0 - lam) / m.sigma**2 * x,
            m.mu / (m.sigma**2 * m.rho) * (1.0 + m.rho * x) * psi,
        )
        return pi if pi.ndim else float(pi)

    def report_grid(self, n: int = 400) -> np.ndarray:
        """Geometric grid on ``[x0/100, min(x_max, 100 x0)]``."""
        return np.geomspace(self.x0 / 100.0, min(self.x_max, 100.0 * self.x0), n)

    def table(self, xs=None) -> dict:
        """Columns ``x, v, dv, c_star, pi_star, weight, cw`` on a grid."""
        xs = self.report_grid() if xs is None else np.asarray(xs, dtype=float)
        c = self.policy_c(xs)
        pi = self.policy_pi(xs)
        return {
            "x": xs,
            "v": self.value(xs),
            "dv": self.marginal(xs),
            "c_star": c,
            "pi_star": pi,
            "weight": pi / xs,
            "cw": c / xs,
        }


def value(primal: PrimalSolution, x):
    return primal.value(x)


def marginal(primal: PrimalSolution, x):
    return primal.marginal(x)


def policy_c(primal: PrimalSolution, x):
    return primal.policy_c(x)


def policy_pi(primal: PrimalSolution, x):
    return primal.policy_pi(x)
