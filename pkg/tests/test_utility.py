import math

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from habitfbp._numerics import SolverError
from habitfbp.utility import (
    FAMILIES,
    G,
    chat,
    concavify,
    envelope_value,
    gap_excess,
    make_aby22_approx,
    make_custom,
    make_exponential,
    make_power,
    make_sahara,
    make_shifted_power,
    sahara,
    sahara_marginal,
)

# Envelope constants from an independent 40-digit mpmath root of the tangency
# condition (x + alpha) U+'(x) - U+(x) = U-(alpha), x = c0 - alpha.
GOLDEN_ENVELOPE = {
    "power": (make_power(0.75, 0.2, 0.5, 2.0), 0.78599201124483051514, 2.8580189430931564507),
    "exponential": (make_exponential(0.75, 1.0, 1.5, 1.0), 0.84818162366394487120, 0.90648424981108834547),
    "sahara": (make_sahara(0.75, 0.5, 0.1, 0.5, 0.5), 1.0480652892089428201, 1.2777967086141527389),
}


@pytest.mark.parametrize("name", sorted(GOLDEN_ENVELOPE))
def test_envelope_matches_high_precision_oracle(name):
    spec, c0, phi0 = GOLDEN_ENVELOPE[name]
    env = concavify(spec)
    assert env.c0 == pytest.approx(c0, rel=1e-12)
    assert env.phi0 == pytest.approx(phi0, rel=1e-11)
    assert abs(gap_excess(spec, env.excess)) < 1e-10


def test_power_defaults():
    spec = make_power(0.75, 0.2, 0.5, 2.0)
    assert spec.loss_value(spec.alpha) == pytest.approx(2 * 0.75**0.5, rel=1e-15)
    assert spec.u_at_zero == pytest.approx(-2 * 0.75**0.5, rel=1e-15)
    assert spec.gain_value(0.0) == 0.0 and spec.loss_value(0.0) == 0.0
    assert spec.gain_inv_marginal(spec.gain_marginal(1.0)) == pytest.approx(1.0, rel=1e-12)
    assert spec.growth_verified


@pytest.mark.parametrize(
    "args",
    [(0.75, 1.0, 0.5, 2.0), (0.75, 0.2, 1.5, 2.0), (0.75, 0.2, 0.5, 0.5), (0.0, 0.2, 0.5, 2.0), (-1, 0.2, 0.5, 2)],
)
def test_power_rejects_outside_regime(args):
    with pytest.raises(ValueError):
        make_power(*args)


def test_exponential_smooth_at_reference():
    spec = make_exponential(0.5, 1.0, 1.0, 1.0)
    # U+'(0) = p and U-'(0) = kappa q coincide, so U is C^1 at alpha
    assert spec.gain_marginal(0.0) == pytest.approx(spec.loss_marginal(0.0))
    assert spec.value(0.5) == 0.0
    h = 1e-7
    left = (spec.value(0.5) - spec.value(0.5 - h)) / h
    right = (spec.value(0.5 + h) - spec.value(0.5)) / h
    assert left == pytest.approx(right, rel=1e-5)


def test_exponential_inverse_domain():
    spec = make_exponential(0.75, 1.0, 1.5, 1.0)
    assert spec.gain_inv_marginal(1.0) == 0.0
    with pytest.raises(ValueError):
        spec.gain_inv_marginal(1.1)
    with pytest.raises(ValueError):
        spec.gain_inv_marginal(np.array([0.5, 1.1]))
    with pytest.raises(ValueError):
        make_exponential(0.75, 2.0, 1.0, 1.0)  # q < p


def test_exponential_losses_hurt():
    spec = make_exponential(0.75, 1.0, 1.5, 1.0)
    c = np.linspace(0.0, 0.75, 50)
    u = spec.value(c)
    assert np.all(u[:-1] < 0) and np.all(np.diff(u) > 0)


def test_sahara_risk_aversion_at_zero():
    # gamma = 1, beta = 1: absolute risk aversion gamma / beta = 1 at x = 0
    h = 1e-6
    m = lambda x: sahara_marginal(x, 1.0, 1.0)  # noqa: E731
    ara = -(m(h) - m(-h)) / (2 * h) / m(0.0)
    assert ara == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.5])
def test_sahara_marginal_is_derivative(gamma):
    # five-point finite difference of the value against the closed-form marginal
    x, h = 1.0, 1e-3
    f = lambda t: sahara(t, gamma, 0.1)  # noqa: E731
    d = (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)
    assert d == pytest.approx(sahara_marginal(x, gamma, 0.1), rel=1e-10)


def test_sahara_marginal_golden():
    # mpmath derivative of the SAHARA value at x = 1, gamma = 0.5, beta = 0.1
    assert sahara_marginal(1.0, 0.5, 0.1) == pytest.approx(0.70622674206582031850, rel=1e-14)


def test_sahara_inverse_identity_and_numeric_fallback():
    spec = make_sahara(0.75, 0.5, 0.1, 0.5, 0.5)
    phis = np.geomspace(1e-3, spec.marginal_sup, 40)
    xs = spec.gain_inv_marginal(phis)
    assert np.max(np.abs(spec.gain_marginal(xs) / phis - 1)) < 1e-10
    custom = make_custom(0.75, spec.gain_value, spec.gain_marginal, spec.loss_value, spec.loss_marginal)
    assert not custom.growth_verified
    for phi in phis[:-1]:
        assert custom.gain_inv_marginal(float(phi)) == pytest.approx(float(spec.gain_inv_marginal(float(phi))), rel=1e-9, abs=1e-12)
    assert spec.gain_value(0.0) == pytest.approx(0.0, abs=1e-15)


def test_aby22_glue():
    alpha, kappa, eps = 0.75, 15.0, 0.35
    spec = make_aby22_approx(alpha, kappa, eps)
    x = np.array([eps * (1 - 1e-12), eps])
    val = spec.gain_value(x)
    assert val[0] == pytest.approx(val[1], rel=1e-10)
    assert val[1] == pytest.approx(1 / alpha - 1 / (alpha + eps), rel=1e-14)
    mar = spec.gain_marginal(x)
    assert mar[0] == pytest.approx(mar[1], rel=1e-9)
    assert spec.loss_value(alpha) == pytest.approx(2 * kappa * alpha**0.5)
    phis = np.geomspace(1e-3, 1e3, 50)
    assert np.max(np.abs(spec.gain_marginal(spec.gain_inv_marginal(phis)) / phis - 1)) < 1e-12
    env = concavify(spec)
    assert abs(gap_excess(spec, env.excess)) < 1e-10


def test_shifted_power_is_rogers_utility():
    spec = make_shifted_power(0.5, -1.0, 0.5, 2.0)
    c = np.array([0.7, 1.0, 3.0])
    assert np.allclose(spec.value(c), 1 / 0.5 - 1 / c, rtol=1e-14)
    assert spec.marginal_sup == pytest.approx(4.0)


def test_concavify_boundary_case():
    # U-(alpha) = alpha U+'(0) exactly: the envelope kink sits at alpha
    alpha, p, q = 0.5, 1.0, 1.0
    kappa = alpha * p / (1 - math.exp(-q * alpha))
    env = concavify(make_exponential(alpha, p, q, kappa))
    assert env.c0 == alpha and env.phi0 == p


def test_concavify_rejects_excessive_loss():
    with pytest.raises(ValueError):
        concavify(make_exponential(0.5, 1.0, 1.0, 2.0))


def test_power_kink_strictly_above_reference():
    assert concavify(make_power(0.75, 0.2, 0.5, 2.0)).c0 > 0.75


@pytest.mark.parametrize("kappa", [100.0, 1e3, 1e5])
def test_concavify_extreme_loss_aversion(kappa):
    # the tangency moves to within 1e-20 of alpha; the solve works in log(c - alpha)
    spec = make_power(0.75, 0.2, 0.5, kappa)
    env = concavify(spec)
    assert env.excess > 0
    assert abs(gap_excess(spec, env.excess)) < 1e-9 * (1 + kappa)


def test_concavify_bracket_failure():
    # a gain branch so flat that the tangency lies beyond 1e6 alpha
    spec = make_custom(
        1e-3,
        gain_value=lambda x: 1e-9 * x,
        gain_marginal=lambda x: 1e-9 + 0.0 * x,
        loss_value=lambda x: 1e-30 * x,
        loss_marginal=lambda x: 1e-30 + 0.0 * x,
        gain_inv_marginal=lambda p: 0.0,
        marginal_sup=1.0,
    )
    with pytest.raises(SolverError):
        concavify(spec)


def test_chat_tie_and_jump():
    spec = make_power(0.75, 0.2, 0.5, 2.0)
    env = concavify(spec)
    assert chat(spec, env, env.phi0) == env.c0
    assert chat(spec, env, env.phi0 * (1 + 1e-12)) == 0.0
    phis = np.linspace(0.05, 2 * env.phi0, 500)
    c = chat(spec, env, phis)
    assert np.all(np.diff(c) <= 0)
    assert envelope_value(spec, env, 0.0) == spec.u_at_zero


def test_G_matches_definition():
    spec = make_power(0.75, 0.2, 0.5, 2.0)
    phi = 0.9
    x = spec.gain_inv_marginal(phi)
    assert G(spec, phi) == pytest.approx(x**0.2 - phi * (0.75 + x), rel=1e-14)


def test_chat_brute_force():
    rng = np.random.default_rng(11)
    spec = make_power(0.75, 0.2, 0.5, 2.0)
    env = concavify(spec)
    cs = np.linspace(0.0, 50.0, 500_001)
    step = cs[1] - cs[0]
    u = spec.value(cs)
    ut = envelope_value(spec, env, cs)
    for phi in rng.uniform(0.3, 2.0 * env.phi0, 50):
        best = cs[np.argmax(u - phi * cs)]
        assert abs(best - chat(spec, env, phi)) <= step * (1 + 1e-9)
        assert np.max(ut - phi * cs) == pytest.approx(np.max(u - phi * cs), abs=1e-9)


# -- property suite over random admissible parameters ---------------------------

ALPHA = st.floats(0.05, 1.0)


@st.composite
def power_params(draw):
    return dict(alpha=draw(ALPHA), p=draw(st.floats(0.05, 0.95)), q=draw(st.floats(0.05, 1.0)), kappa=draw(st.floats(1.0, 20.0)))


@st.composite
def exponential_params(draw):
    p = draw(st.floats(0.2, 3.0))
    alpha = draw(ALPHA)
    q = p + draw(st.floats(0.0, 3.0))
    # admissibility: kappa (1 - exp(-q alpha)) <= alpha p
    k_max = alpha * p / (1 - math.exp(-q * alpha))
    assume(k_max > 1.0)
    kappa = draw(st.floats(1.0, min(k_max, 20.0)))
    return dict(alpha=alpha, p=p, q=q, kappa=kappa)


@st.composite
def sahara_params(draw):
    g1, g2 = draw(st.floats(0.1, 3.0)), draw(st.floats(0.1, 3.0))
    assume(abs(g1 - 1) > 1e-3 and abs(g2 - 1) > 1e-3)
    b1, b2 = draw(st.floats(0.05, 2.0)), draw(st.floats(0.05, 2.0))
    alpha = draw(ALPHA)
    spec = make_sahara(alpha, g1, b1, g2, b2)
    assume(spec.satisfies_moderate_loss())
    return dict(alpha=alpha, gamma1=g1, beta1=b1, gamma2=g2, beta2=b2)


@st.composite
def aby22_params(draw):
    return dict(alpha=draw(st.floats(0.1, 1.0)), kappa=draw(st.floats(1.0, 1000.0)), epsilon=draw(st.floats(0.01, 1.0)))


@st.composite
def shifted_power_params(draw):
    p = draw(st.floats(-3.0, 0.9))
    assume(abs(p) > 1e-2)
    alpha, q = draw(ALPHA), draw(st.floats(0.05, 1.0))
    kappa = draw(st.floats(0.1, 20.0))
    return dict(alpha=alpha, p=p, q=q, kappa=kappa)


STRATEGIES = {
    "power": power_params(),
    "exponential": exponential_params(),
    "sahara": sahara_params(),
    "aby22": aby22_params(),
    "shifted_power": shifted_power_params(),
}


def check_envelope_properties(spec) -> None:
    env = concavify(spec)
    assert env.c0 >= spec.alpha
    assert abs(gap_excess(spec, env.excess) if env.excess > 0 else 0.0) < 1e-9
    c = np.linspace(0.0, 10.0 * env.c0, 10_000)
    ut = envelope_value(spec, env, c)
    u = spec.value(c)
    scale = 1.0 + np.abs(u)
    assert np.all(ut - u >= -1e-12 * scale)
    above = c >= env.c0
    assert np.all(np.abs(ut[above] - u[above]) <= 1e-12 * scale[above])


@pytest.mark.parametrize("family", sorted(STRATEGIES))
def test_envelope_property_suite(family):
    @given(STRATEGIES[family])
    @settings(max_examples=100, deadline=None, derandomize=True, suppress_health_check=[HealthCheck.filter_too_much])
    def run(params):
        spec = FAMILIES[family](**params)
        assume(spec.satisfies_moderate_loss())
        check_envelope_properties(spec)

    run()


def test_inverse_marginal_identity_all_families():
    specs = [
        make_power(0.75, 0.2, 0.5, 2.0),
        make_exponential(0.75, 1.0, 1.5, 1.0),
        make_sahara(0.75, 0.5, 0.1, 0.5, 0.5),
        make_aby22_approx(0.75, 15.0, 0.35),
        make_shifted_power(0.1, -1.0, 0.5, 2.0),
    ]
    xs = np.geomspace(1e-3, 1e2, 60)
    for spec in specs:
        back = spec.gain_inv_marginal(spec.gain_marginal(xs))
        assert np.max(np.abs(back / xs - 1)) < 1e-10, spec.family
        m = spec.gain_marginal(xs)
        assert np.all(m > 0) and np.all(np.diff(m) < 0)
        assert spec.gain_marginal(1e8) < 1e-3 * spec.gain_marginal(1e-3)
