"""Residual and invariant suites for a solved problem.

The closed formulas for ``u'`` and ``u''`` in terms of ``(phi, psi)`` turn the
dual equation into an algebraic identity, so the residual checks here
differentiate ``u`` (and ``v``) numerically instead. Values come from
:meth:`DualSolution.local_state` with one anchor per stencil, which keeps
the sampled function smooth across grid cells.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .dual import DualSolution, dual_u
from .primal import PrimalSolution
from .utility import G, gap_excess

FD_H = 5e-3


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""

    def as_dict(self) -> dict:
        d = asdict(self)
        d["measured"] = float(d["measured"]) if math.isfinite(d["measured"]) else str(d["measured"])
        return d


def _d1_d2(f_m2, f_m1, f0, f_p1, f_p2, h):
    d1 = (-f_p2 + 8 * f_p1 - 8 * f_m1 + f_m2) / (12 * h)
    d2 = (-f_p2 + 16 * f_p1 - 30 * f0 + 16 * f_m1 - f_m2) / (12 * h * h)
    return d1, d2


def _anchor(sol: DualSolution, s: float) -> int:
    return int(np.clip(np.searchsorted(sol._s, s, side="left"), 0, sol._s.size - 1))


def dual_residuals(sol: DualSolution, n: int = 1000, h: float = FD_H):
    """Scaled residual of the dual equation on ``n`` log-spaced points of ``(y_reached, y0)``.

    Returns ``(ys, residual / (1 + |u|))``.
    """
    m = sol.market
    a = m.mu**2 / (2.0 * m.sigma**2)
    s_lo = math.log(sol.ys[0]) + 2.5 * h
    s_hi = math.log(sol.y0) - 2.5 * h
    ss = np.linspace(s_lo, s_hi, n)
    out = np.empty(n)
    for k, s in enumerate(ss):
        anchor = _anchor(sol, s)
        pts = s + h * np.arange(-2, 3)
        vals = []
        for sp in pts:
            f, q = sol.local_state(math.exp(sp), anchor)
            u, _, _ = sol.u_from_state(math.exp(sp), f, q)
            vals.append(float(u))
        du_s, ddu_s = _d1_d2(*vals, h)
        y = math.exp(s)
        yu1 = du_s
        y2u2 = ddu_s - du_s
        u = vals[2]
        res = a * y2u2 + float(G(sol.spec, y - m.rho * yu1)) + (m.delta - m.r - m.rho) * yu1 - m.delta * u
        out[k] = res / (1.0 + abs(u))
    return np.exp(ss), out


def euler_residuals(sol: DualSolution, n: int = 200):
    """Residual of the linear Euler equation above ``y0``, with closed-form derivatives."""
    m = sol.market
    a = m.mu**2 / (2.0 * m.sigma**2)
    ys = np.geomspace(sol.y0 * (1 + 1e-9), 10 * sol.y0, n)
    u, du, ddu = dual_u(sol, ys)
    res = a * ys**2 * ddu + (m.delta - m.r - m.rho) * ys * du - m.delta * u + sol.envelope.u_at_zero
    return ys, res / (1.0 + np.abs(u))


def _local_y_of_x(sol: DualSolution, x: float, anchor: int, s_guess: float) -> float:
    rho = sol.market.rho
    s = s_guess
    for _ in range(30):
        y = math.exp(s)
        f, q = sol.local_state(y, anchor)
        g = (f - y) / (rho * y) - x
        dg = -f * q / (rho * y)
        step = g / dg
        s -= step
        if abs(step) < 1e-15:
            break
    return s


def primal_residuals(primal: PrimalSolution, n: int = 1000, h: float = FD_H):
    """Scaled HJB residual on ``n`` log-spaced points of ``(0, x_max]``.

    Austerity points use the closed-form derivatives; the rest differentiate
    ``v(x) = u(y) + x y`` numerically in ``log x``.
    """
    d = primal.dual
    m = d.market
    a = m.mu**2 / (2.0 * m.sigma**2)
    u0 = d.envelope.u_at_zero
    x_hi = primal.x_max * math.exp(-3 * h)
    xs = np.geomspace(primal.x0 / 100.0, x_hi, n)
    out = np.empty(n)
    # the stencil of a point just above x0 reaches past it; local_state then
    # follows the smooth continuation of the nonlinear branch, which is what
    # the residual at that point needs
    aus = xs < primal.x0
    xa = xs[aus]
    v = primal.value(xa)
    v1 = primal.marginal(xa)
    v2 = primal.second(xa)
    out[aus] = (-a * v1**2 / v2 + (m.r + m.rho) * xa * v1 - m.delta * v + u0) / (1.0 + np.abs(v))
    s_guess = np.log(primal.marginal(xs[~aus]))
    for k, (x, sg) in zip(np.nonzero(~aus)[0], zip(xs[~aus], s_guess)):
        anchor = _anchor(d, sg)
        t0 = math.log(x)
        vals = []
        for j in range(-2, 3):
            xx = math.exp(t0 + j * h)
            s = _local_y_of_x(d, xx, anchor, sg)
            y = math.exp(s)
            f, q = d.local_state(y, anchor)
            u, _, _ = d.u_from_state(y, f, q)
            vals.append(float(u) + xx * y)
        dv_t, ddv_t = _d1_d2(*vals, h)
        v1 = dv_t / x
        v2 = (ddv_t - dv_t) / (x * x)
        vv = vals[2]
        phi_arg = min((1.0 + m.rho * x) * v1, d.envelope.phi0)
        res = -a * v1**2 / v2 + float(G(d.spec, phi_arg)) + (m.r + m.rho) * x * v1 - m.delta * vv
        out[k] = res / (1.0 + abs(vv))
    return xs, out


def smooth_pasting(sol: DualSolution) -> dict:
    """Relative mismatch of ``u, u', u''`` between the grid and the Euler branch at ``y0``."""
    env, lam, rho = sol.envelope, sol.roots.lam, sol.market.rho
    y0 = sol.y0
    u_e = (y0 - env.phi0) / (rho * lam) + env.u_at_zero / sol.market.delta
    du_e = (y0 - env.phi0) / (rho * y0)
    ddu_e = (lam - 1.0) * (y0 - env.phi0) / (rho * y0 * y0)
    top = sol.ys[-1]
    u_g, du_g, ddu_g = float(sol.us[-1]), float(sol.dus[-1]), float(sol.ddus[-1])
    if top != y0:
        raise AssertionError("grid does not end at y0")
    rel = lambda a, b: abs(a - b) / max(abs(b), 1e-300)  # noqa: E731
    return {"u": rel(u_g, u_e), "du": rel(du_g, du_e), "ddu": rel(ddu_g, ddu_e)}


def tail_bound(sol: DualSolution, eps_list=(0.5, 0.1)) -> dict:
    """Check ``phi(y) >= B_eps y^eps`` on the tail of the grid.

    The tail ``(y_min, eta]`` is the contiguous bottom stretch where
    ``psi > 1 - eps``; there ``phi y^-eps`` can only grow toward zero, so
    ``B_eps = phi(eta) / y0^eps`` must bound ``phi`` from below on all of it.
    An ``eps`` whose tail spans less than a decade is reported as unresolved
    (``ok`` is None); resolving it needs a smaller ``y_min``.
    """
    out = {}
    ys, phis, psis = sol.ys, sol.phis, sol.psis
    for eps in eps_list:
        tail = psis > 1.0 - eps
        stop = int(np.argmin(tail)) if not tail.all() else tail.size
        if stop < 2 or ys[stop - 1] < 10.0 * ys[0]:
            # tail not resolved on this grid: nothing to test at this eps
            out[eps] = {"b": float("nan"), "n": stop, "min_margin": float("nan"), "ok": None}
            continue
        eta = stop - 1
        b = phis[eta] / sol.y0**eps
        margin = phis[:stop] / (b * ys[:stop] ** eps) - 1.0
        out[eps] = {
            "b": float(b),
            "eta": float(ys[eta]),
            "n": stop,
            "min_margin": float(margin.min()),
            "ok": bool(margin.min() >= -1e-12),
        }
    return out


def structure_checks(primal: PrimalSolution, n: int = 2000) -> list[Check]:
    """Monotonicity, convexity and free-boundary structure on sampled grids."""
    d = primal.dual
    env = d.envelope
    m = d.market
    checks = []
    ys = np.geomspace(d.ys[0], 10 * d.y0, n)
    u, du, ddu = dual_u(d, ys)
    checks.append(Check("u_decreasing", bool(np.all(np.diff(u) < 0)), float(np.max(np.diff(u))), 0.0))
    checks.append(Check("u_convex", bool(np.all(ddu > 0) and np.all(np.diff(du) > 0)), float(ddu.min()), 0.0))
    checks.append(Check("phi_increasing", bool(np.all(np.diff(d.phis) > 0)), float(np.diff(d.phis).min()), 0.0))
    inner = d.psis[:-1]
    checks.append(
        Check("psi_in_unit_interval", bool(np.all((inner > 0) & (inner < 1))), float(min(inner.min(), 1 - inner.max())), 0.0)
    )
    cap = (d.roots.lam - 1.0) * (d.ys - env.phi0) / env.phi0
    excess = float(np.max(d.psis - cap))
    checks.append(Check("psi_below_cap", excess <= 1e-10, excess, 1e-10))

    x_hi = min(primal.x_max, 100 * primal.x0)
    xs = np.geomspace(primal.x0 / 100, x_hi, n)
    v = primal.value(xs)
    v1 = primal.marginal(xs)
    v2 = primal.second(xs)
    checks.append(Check("v_increasing", bool(np.all(np.diff(v) > 0) and np.all(v1 > 0)), float(np.diff(v).min()), 0.0))
    checks.append(Check("v_concave", bool(np.all(v2 < 0)), float(v2.max()), 0.0))
    fb = (1.0 + m.rho * xs) * v1
    below = xs < primal.x0
    order_ok = bool(np.all(fb[below] > env.phi0) and np.all(fb[~below] <= env.phi0 * (1 + 1e-12)))
    checks.append(Check("free_boundary_order", order_ok and bool(np.all(np.diff(fb) < 0)), float(np.diff(fb).max()), 0.0))
    at = abs((1.0 + m.rho * primal.x0) * primal.marginal(primal.x0) - env.phi0) / env.phi0
    checks.append(Check("free_boundary_value", at < 1e-8, at, 1e-8))

    c_at = primal.policy_c(primal.x0)
    c_left = primal.policy_c(primal.x0 * (1 - 1e-9))
    jump = abs(c_at - env.c0)
    checks.append(Check("c_jump_to_c0", jump == 0.0 and c_left == 0.0, jump, 0.0))
    pi_l = primal.policy_pi(primal.x0 * (1 - 1e-12))
    pi_r = primal.policy_pi(primal.x0)
    gap = abs(pi_l - pi_r) / abs(pi_r)
    checks.append(Check("pi_continuous_at_x0", gap < 1e-8, gap, 1e-8))
    pis = primal.policy_pi(xs)
    checks.append(Check("pi_positive", bool(np.all(pis > 0)), float(pis.min()), 0.0))
    cs = primal.policy_c(xs[~below])
    checks.append(Check("c_above_c0", bool(np.all(cs >= env.c0 - 1e-12)), float(cs.min() - env.c0), 0.0))
    return checks


def legendre_round_trip(primal: PrimalSolution, n: int = 1000) -> float:
    """Max relative error of ``v'(-u'(y))`` against ``y`` on grid points."""
    d = primal.dual
    idx = np.unique(np.linspace(1, d.ys.size - 1, n).astype(int))
    ys = d.ys[idx]
    xs = -d.dus[idx]
    back = primal.marginal(xs)
    return float(np.max(np.abs(back - ys) / ys))


def coverage(primal: PrimalSolution, factor: float = 10.0) -> Check:
    """The shot grid must reach ``x_max >= factor x0``; shallower ``y_min`` fails this."""
    need = factor * primal.x0
    return Check("grid_coverage", primal.x_max >= need, primal.x_max, need, "x_max vs %g x0" % factor)


def envelope_residual(spec, env) -> float:
    """``|gap(c0)|`` relative to ``1 + |U(0)|``; uses the stored excess ``c0 - alpha``."""
    if env.excess == 0.0:
        return 0.0
    x = env.excess if math.isfinite(env.excess) else env.c0 - spec.alpha
    return abs(gap_excess(spec, x)) / (1.0 + abs(env.u_at_zero))


def fd_check(primal: PrimalSolution, per_decade: int = 400, threshold: float = 1e-2) -> Check:
    """Finite-difference value against the shooting value on ``[x0/2, 10 x0]``."""
    from .fd_oracle import FdGridConfig, compare, solve_fd

    d = primal.dual
    fd = solve_fd(d.market, d.spec, d.envelope, FdGridConfig(x_hi=1000.0 * primal.x0, per_decade=per_decade))
    gap = compare(fd, primal.value, primal.x0 / 2.0, 10.0 * primal.x0)
    return Check("fd_cross_oracle", gap < threshold, gap, threshold, "%d policy iterations" % fd.iterations)


def scan_check(primal: PrimalSolution, threshold: float = 1e-6) -> Check:
    """Dense-scan bracket of ``y0`` (fixed-step RK4) against the shooting value, relative to ``phi0``."""
    from .oracles import scan_y0

    d = primal.dual
    sc = scan_y0(d.market, d.spec, d.envelope)
    diff = abs(d.y0 - sc.mid) / d.envelope.phi0
    return Check("scan_oracle", diff < threshold and sc.monotone, diff, threshold, "scan [%.12g, %.12g]" % (sc.lo, sc.hi))


def run_suite(primal: PrimalSolution, n_residual: int = 1000, fd=None) -> list[Check]:
    """Every check that does not need an external oracle, plus ``fd`` if given."""
    d = primal.dual
    checks = [Check("envelope_residual", envelope_residual(d.spec, d.envelope) < 1e-10, envelope_residual(d.spec, d.envelope), 1e-10)]
    r = d.roots
    m = d.market
    quad = m.mu**2 / (2 * m.sigma**2) * r.lam**2 - (m.mu**2 / (2 * m.sigma**2) + m.r + m.rho - m.delta) * r.lam - m.delta
    checks.append(Check("root_residual", abs(quad) < 1e-12, abs(quad), 1e-12))
    inside = r.gamma * d.envelope.phi0 < d.y0 < d.envelope.phi0
    checks.append(Check("y0_interval", inside, d.y0, d.envelope.phi0))
    _, res = dual_residuals(d, n_residual)
    checks.append(Check("dual_residual", float(np.max(np.abs(res))) < 1e-7, float(np.max(np.abs(res))), 1e-7))
    _, res = euler_residuals(d)
    checks.append(Check("euler_residual", float(np.max(np.abs(res))) < 1e-10, float(np.max(np.abs(res))), 1e-10))
    _, res = primal_residuals(primal, n_residual)
    checks.append(Check("primal_residual", float(np.max(np.abs(res))) < 1e-6, float(np.max(np.abs(res))), 1e-6))
    sp = smooth_pasting(d)
    worst = max(sp.values())
    checks.append(Check("smooth_pasting", worst < 1e-8, worst, 1e-8))
    lr = legendre_round_trip(primal)
    checks.append(Check("legendre_round_trip", lr < 1e-9, lr, 1e-9))
    checks.extend(structure_checks(primal))
    asym = d.asymptote
    checks.append(
        Check(
            "asymptote_dichotomy",
            asym["psi_to_one"] or asym["phi_positive"],
            asym["psi"],
            0.999,
            "phi(y_min)=%.4g psi(y_min)=%.6f" % (asym["phi"], asym["psi"]),
        )
    )
    cov = coverage(primal)
    tb = tail_bound(d)
    resolved = [v["ok"] for v in tb.values() if v["ok"] is not None]
    tail_ok = (bool(resolved) and all(resolved)) if asym["psi_tends_to_one"] else True
    checks.append(
        Check(
            "tail_bound",
            cov.passed and tail_ok,
            cov.measured,
            cov.threshold,
            "coverage x_max=%.4g need %.4g; bound %s" % (cov.measured, cov.threshold, {k: v["ok"] for k, v in tb.items()}),
        )
    )
    if fd is not None:
        checks.append(fd)
    return checks
