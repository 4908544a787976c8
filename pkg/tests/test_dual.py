import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from habitfbp._numerics import SolverError
from habitfbp.dual import (
    ExitKind,
    MarketParams,
    SolverControls,
    dual_u,
    integrate_candidate,
    make_log_rhs,
    ode_rhs,
    psi_cap,
    shoot_y0,
    solve_roots,
)
from habitfbp.oracles import scan_y0
from habitfbp.utility import concavify, make_power

from conftest import BASE, POWER

# 40-digit mpmath roots of 0.125 x^2 - 0.845 x - 0.3 = 0
LAM = -0.33811780340537354524
LAMP = 7.0981178034053735452
GAMMA = 0.25268164173953755573
# free boundary for the base case, pinned from the first solver run and
# bracketed independently by the dense scan oracle
Y0_GOLDEN = 1.235561502729705


@pytest.fixture(scope="module")
def setup():
    spec = make_power(**POWER)
    env = concavify(spec)
    return BASE, spec, env, solve_roots(BASE)


def test_roots_golden():
    r = solve_roots(BASE)
    assert r.lam == pytest.approx(LAM, rel=1e-15)
    assert r.lamp == pytest.approx(LAMP, rel=1e-14)
    assert r.gamma == pytest.approx(GAMMA, rel=1e-14)


@given(
    st.floats(0.0, 0.2),
    st.floats(0.01, 0.5),
    st.floats(0.05, 1.0),
    st.floats(0.01, 5.0),
    st.floats(0.01, 1.0),
)
@settings(max_examples=200, deadline=None)
def test_roots_properties(r, mu, sigma, rho, delta):
    m = MarketParams(r=r, mu=mu, sigma=sigma, rho=rho, delta=delta)
    rt = solve_roots(m)
    a = mu**2 / (2 * sigma**2)
    b = a + r + rho - delta
    for x in (rt.lam, rt.lamp):
        scale = a * x * x + abs(b * x) + delta
        assert abs(a * x * x - b * x - delta) <= 1e-12 * scale
    assert -2 * delta * sigma**2 / mu**2 < rt.lam < 0
    assert rt.lamp > 1
    assert 0 < rt.gamma < 1


def test_market_validation():
    with pytest.raises(ValueError):
        MarketParams(delta=0.0)
    with pytest.raises(ValueError):
        MarketParams(r=-0.01)


def test_psi_cap_anchors(setup):
    _, _, env, roots = setup
    assert psi_cap(env.phi0, env, roots) == 0.0
    assert psi_cap(roots.gamma * env.phi0, env, roots) == pytest.approx(1.0, rel=1e-15)
    mid = 0.5 * (roots.gamma + 1.0) * env.phi0
    assert psi_cap(mid, env, roots) == pytest.approx(0.5, rel=1e-14)


def literal_rhs(y, phi, psi, m, spec):
    """The y-form system transcribed term by term, independent of ``ode_rhs``."""
    inv = spec.gain_inv_marginal(phi)
    dphi = phi * (1 - psi) / y
    coef = 2 * m.rho * m.sigma**2 / m.mu**2
    inner = (m.mu**2 / (2 * m.rho * m.sigma**2)) * psi - inv + (m.r - m.delta) / m.rho + 1 - spec.alpha
    dpsi = -coef * (((1 - psi) / y) * inner - (m.r + m.rho) / (m.rho * phi) + m.delta / (m.rho * y))
    return dphi, dpsi


@given(st.floats(0.05, 3.0), st.floats(0.05, 2.8), st.floats(0.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_rhs_matches_literal_transcription(y, phi, psi):
    spec = make_power(**POWER)
    a = ode_rhs(y, phi, psi, BASE, spec)
    b = literal_rhs(y, phi, psi, BASE, spec)
    log_rhs = make_log_rhs(BASE, spec)(math.log(y), phi, psi)
    for u, v, w in zip(a, b, log_rhs):
        scale = 1 + abs(v)
        assert abs(u - v) <= 1e-13 * scale
        assert abs(w / y - v) <= 1e-13 * scale


def test_rhs_zero_phi_slope_at_psi_one(setup):
    m, spec, env, _ = setup
    assert ode_rhs(1.0, 2.0, 1.0, m, spec)[0] == 0.0
    y0 = Y0_GOLDEN
    assert all(math.isfinite(v) for v in ode_rhs(y0, env.phi0, psi_cap(y0, env, solve_roots(m)), m, spec))


def test_candidate_exits_near_interval_ends(setup):
    m, spec, env, roots = setup
    lo = roots.gamma * env.phi0
    width = env.phi0 - lo
    assert integrate_candidate(lo + 1e-6 * width, m, spec, env).exit is ExitKind.THROUGH_PSI_ONE
    assert integrate_candidate(env.phi0 - 1e-6 * width, m, spec, env).exit is ExitKind.THROUGH_PSI_ZERO
    with pytest.raises(ValueError):
        integrate_candidate(env.phi0, m, spec, env)


def test_trajectory_invariants_and_comparison(setup):
    m, spec, env, roots = setup
    lo = roots.gamma * env.phi0
    width = env.phi0 - lo
    ta = integrate_candidate(lo + 0.45 * width, m, spec, env)
    tb = integrate_candidate(lo + 0.55 * width, m, spec, env)
    for t in (ta, tb):
        assert np.all(np.diff(t.ys) > 0) and t.ys[-1] == t.ybar
        assert np.all(np.diff(t.phis) > 0)
        assert np.all((t.psis >= 0) & (t.psis <= 1))
        cap = (roots.lam - 1) * (t.ys - env.phi0) / env.phi0
        assert np.all(t.psis <= cap + 1e-10)
        assert t.y_exit <= t.ys[0]
    # the smaller candidate has the larger phi on the common domain
    common = np.geomspace(max(ta.ys[0], tb.ys[0]), ta.ybar, 200)
    fa = np.interp(np.log(common), np.log(ta.ys), ta.phis)
    fb = np.interp(np.log(common), np.log(tb.ys), tb.phis)
    assert np.all(fa > fb)


def test_exit_is_refined_to_the_barrier(setup):
    m, spec, env, roots = setup
    lo = roots.gamma * env.phi0
    t = integrate_candidate(lo + 0.7 * (env.phi0 - lo), m, spec, env)
    assert t.exit is ExitKind.THROUGH_PSI_ZERO
    # one refined step from the last stored point lands on psi = 0
    from habitfbp.dual import _dp_step

    rhs = make_log_rhs(m, spec)
    s0 = math.log(t.ys[0])
    h = math.log(t.y_exit) - s0
    _, q, _, _, _ = _dp_step(rhs, s0, t.phis[0], t.psis[0], h, rhs(s0, t.phis[0], t.psis[0]))
    assert abs(q) < 1e-9


def test_max_steps_diagnostic(setup):
    m, spec, env, roots = setup
    lo = roots.gamma * env.phi0
    with pytest.raises(SolverError):
        integrate_candidate(lo + 0.2 * (env.phi0 - lo), m, spec, env, SolverControls(max_steps=3, max_ds=1e-4))


def test_shooting_golden_and_scan(setup, power):
    m, spec, env, roots = setup
    d = power.dual
    assert roots.gamma * env.phi0 < d.y0 < env.phi0
    assert d.y0 == pytest.approx(Y0_GOLDEN, rel=1e-10)
    assert d.bracket[1] - d.bracket[0] <= 1e-10 * env.phi0
    sc = scan_y0(m, spec, env)
    assert sc.monotone
    assert sc.lo <= d.y0 + 1e-6 * env.phi0 and d.y0 - 1e-6 * env.phi0 <= sc.hi
    assert abs(d.y0 - sc.mid) < 1e-6 * env.phi0
    assert d.asymptote["psi_to_one"] or d.asymptote["phi_positive"]


def test_shooting_runtime(setup):
    m, spec, env, _ = setup
    t0 = time.perf_counter()
    shoot_y0(m, spec, env)
    assert time.perf_counter() - t0 < 5.0


def test_dual_u_branches(power):
    d = power.dual
    env, lam, rho = d.envelope, d.roots.lam, d.market.rho
    u_l, du_l, ddu_l = dual_u(d, d.y0)
    du_exact = (d.y0 - env.phi0) / (rho * d.y0)
    ddu_exact = (lam - 1) * (d.y0 - env.phi0) / (rho * d.y0**2)
    assert du_l == pytest.approx(du_exact, rel=1e-12)
    assert ddu_l == pytest.approx(ddu_exact, rel=1e-8)
    u_r, du_r, ddu_r = dual_u(d, d.y0 * (1 + 1e-12))
    assert u_r == pytest.approx(u_l, rel=1e-9)
    assert du_r == pytest.approx(du_exact, rel=1e-9)
    assert ddu_r == pytest.approx(ddu_exact, rel=1e-8)
    # u tends to U(0)/delta far out on the Euler branch
    assert dual_u(d, 1e12)[0] == pytest.approx(env.u_at_zero / d.market.delta, rel=1e-3)
    with pytest.raises(ValueError):
        dual_u(d, 0.0)


def test_dual_solution_structure(power):
    d = power.dual
    assert np.all(np.diff(d.ys) > 0)
    assert np.all(np.diff(d.phis) > 0)
    assert np.all((d.psis[:-1] > 0) & (d.psis[:-1] < 1))
    assert np.all(d.dus < 0) and np.all(np.diff(d.dus) > 0)
    assert np.all(d.ddus > 0)
    assert d.y_min == pytest.approx(1e-8 * d.envelope.phi0)
    assert d.ys[0] == pytest.approx(d.y_min, rel=1e-9)


def test_truncation_above_interval_is_rejected():
    spec = make_power(**POWER)
    with pytest.raises(SolverError, match="y_min"):
        shoot_y0(BASE, spec, concavify(spec), SolverControls(y_min_factor=0.5))
