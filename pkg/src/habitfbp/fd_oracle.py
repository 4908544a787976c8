"""Finite-difference policy iteration for the concavified HJB equation.

This is a validation oracle only. It solves

    sup_{pi, c >= 0} { -delta v + ((r + rho) x + mu pi - (1 + rho x) c) v'
                       + sigma^2 pi^2 v'' / 2 + Ut(c) } = 0

on ``[0, x_hi]`` without touching the shooting code. Drift terms use central
differences where that keeps the matrix monotone and upwind differences
elsewhere. ``v(0) = U(0) / delta``; at ``x_hi`` the drift is truncated to be
nonpositive and ``v''`` is extrapolated linearly (a reflecting boundary).
On the top 5% of nodes the policy is not optimized: ``pi / x`` and ``c`` are
held at their values at the cut, mirroring the clamped tail of the shooting
solution. Comparisons must stay below that band.
The grid is log-uniform with a short linear patch at the origin.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from ._numerics import SolverError
from .dual import MarketParams, solve_roots
from .utility import Envelope, UtilitySpec, chat, envelope_value

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FdGridConfig:
    """``x_hi`` upper edge; ``per_decade`` log nodes per decade above ``x_lo_log``."""

    x_hi: float
    x_lo_log: float = 1e-8
    per_decade: int = 400
    n_linear: int = 4
    tol: float = 1e-9
    max_iter: int = 500


@dataclass
class FdGrid:
    x: np.ndarray
    v: np.ndarray
    c: np.ndarray
    pi: np.ndarray
    iterations: int
    convex_nodes: int
    cap_binding: int

    def value_at(self, xq):
        return np.interp(xq, self.x, self.v)


def make_grid(cfg: FdGridConfig) -> np.ndarray:
    n_log = int(np.ceil(cfg.per_decade * np.log10(cfg.x_hi / cfg.x_lo_log))) + 1
    lin = np.linspace(0.0, cfg.x_lo_log, cfg.n_linear + 1)[:-1]
    return np.concatenate([lin, np.geomspace(cfg.x_lo_log, cfg.x_hi, n_log)])


def _derivs(x, v):
    """Central first and second differences on a nonuniform grid (interior nodes)."""
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    d1 = (hm**2 * v[2:] - hp**2 * v[:-2] + (hp**2 - hm**2) * v[1:-1]) / (hm * hp * (hm + hp))
    d2 = 2.0 * (hm * v[2:] - (hm + hp) * v[1:-1] + hp * v[:-2]) / (hm * hp * (hm + hp))
    return d1, d2


def _assemble(x, b, diff, delta):
    """Banded matrix of ``delta v - b D v - diff D2 v`` for interior and top rows.

    Returns ``ab`` in ``solve_banded`` (1, 1) layout for unknowns ``v[1:]``.
    """
    n = x.size - 1  # unknowns v[1..N]
    hm = np.empty(n)
    hp = np.empty(n)
    hm[:] = x[1:] - x[:-1]
    hp[:-1] = x[2:] - x[1:-1]
    hp[-1] = hm[-1]
    lower = np.zeros(n)
    upper = np.zeros(n)
    # second difference weights
    wl = 2.0 * diff / (hm * (hm + hp))
    wu = 2.0 * diff / (hp * (hm + hp))
    # central drift weights when monotone, upwind otherwise
    central = np.abs(b) * hm * hp <= 2.0 * diff * np.minimum(hm, hp) * (1 + 1e-12)
    cl = np.where(central, -b * hp / (hm * (hm + hp)), np.where(b < 0, -b / hm, 0.0))
    cu = np.where(central, b * hm / (hp * (hm + hp)), np.where(b > 0, b / hp, 0.0))
    lower[:] = wl + cl
    upper[:] = wu + cu
    # top node: reflecting, no upward neighbour, no curvature term
    lower[-1] = np.maximum(-b[-1], 0.0) / hm[-1]
    upper[-1] = 0.0
    if np.any(lower < -1e-14) or np.any(upper < -1e-14):
        raise AssertionError("finite-difference operator lost monotonicity")
    diag = delta + lower + upper
    ab = np.zeros((3, n))
    ab[0, 1:] = -upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = -lower[1:]
    return ab, lower[0]


def solve_fd(
    market: MarketParams,
    spec: UtilitySpec,
    env: Envelope,
    grid_cfg: FdGridConfig,
) -> FdGrid:
    """Howard policy iteration on the concavified HJB."""
    m = market
    lam = solve_roots(m).lam
    x = make_grid(grid_cfg)
    v0 = env.u_at_zero / m.delta
    w_aus = m.mu * (1.0 - lam) / m.sigma**2
    cap = 10.0 * w_aus * x[1:]
    pi = w_aus * x[1:]
    # a consumption rate proportional to wealth keeps the first value increasing
    c = 0.5 * m.delta * x[1:]
    v = np.full(x.size, v0)
    prev_pol = None
    k_cut = int(0.95 * (x.size - 1))
    for it in range(1, grid_cfg.max_iter + 1):
        b = (m.r + m.rho) * x[1:] + m.mu * pi - (1.0 + m.rho * x[1:]) * c
        b[-1] = min(b[-1], 0.0)
        diff = 0.5 * m.sigma**2 * pi**2
        ab, l0 = _assemble(x, b, diff, m.delta)
        rhs = np.asarray(envelope_value(spec, env, c), dtype=float)
        rhs[0] += l0 * v0
        v_new = np.empty_like(v)
        v_new[0] = v0
        v_new[1:] = solve_banded((1, 1), ab, rhs)
        # policy improvement
        d1, d2 = _derivs(x, v_new)
        d1 = np.append(d1, (v_new[-1] - v_new[-2]) / (x[-1] - x[-2]))
        d2 = np.append(d2, d2[-1])
        with np.errstate(divide="ignore", invalid="ignore"):
            pi_new = np.where(d2 < 0, -m.mu * d1 / (m.sigma**2 * d2), cap)
        pi_new = np.clip(pi_new, 0.0, cap)
        phi = np.maximum((1.0 + m.rho * x[1:]) * d1, 1e-12 * env.phi0)
        c_new = np.asarray(chat(spec, env, phi), dtype=float)
        # clamped-tail policy on the top nodes: pi / x and c frozen at the cut
        pi_new[k_cut:] = pi_new[k_cut] * x[1:][k_cut:] / x[1 + k_cut]
        c_new[k_cut:] = c_new[k_cut]
        pol = np.concatenate([pi_new, c_new])
        dv = np.max(np.abs(v_new - v))
        v, pi, c = v_new, pi_new, c_new
        if prev_pol is not None:
            change = np.abs(pol - prev_pol) / (1.0 + np.abs(pol))
            dp = float(change.max())
            log.debug("fd iteration %d: dv=%.3g dpol=%.3g at node %d", it, dv, dp, int(change.argmax()) % (x.size - 1))
            if dp < grid_cfg.tol or dv < 1e-13 * (1.0 + np.max(np.abs(v))):
                break
        prev_pol = pol
    else:
        raise SolverError("policy iteration did not converge in %d iterations" % grid_cfg.max_iter)
    _, d2 = _derivs(x, v)
    convex = int(np.sum(d2 >= 0))
    if convex:
        log.warning("fd: %d interior nodes with v'' >= 0; refine the grid", convex)
    binding = int(np.sum(pi >= cap * (1 - 1e-12)))
    return FdGrid(
        x=x,
        v=v,
        c=np.concatenate([[0.0], c]),
        pi=np.concatenate([[0.0], pi]),
        iterations=it,
        convex_nodes=convex,
        cap_binding=binding,
    )


def compare(fd: FdGrid, value_fn, lo: float, hi: float, n: int = 400) -> float:
    """``sup |v_fd - v| / sup |v|`` over ``[lo, hi]``."""
    xs = np.geomspace(lo, hi, n)
    ref = np.asarray(value_fn(xs), dtype=float)
    return float(np.max(np.abs(fd.value_at(xs) - ref)) / np.max(np.abs(ref)))
