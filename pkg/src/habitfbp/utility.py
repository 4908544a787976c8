"""S-shaped utilities of the consumption-to-habit ratio and their concave envelope.

A utility is described by a reference point ``alpha`` and two increasing,
concave branches vanishing at zero: the gain branch ``U+`` (used for
``c > alpha`` as ``U+(c - alpha)``) and the loss branch ``U-`` (used for
``c <= alpha`` as ``-U-(alpha - c)``).

The solver only needs the gain branch through its marginal and the inverse of
that marginal, so every family provides ``gain_inv_marginal``; families
without a closed form fall back to :func:`habitfbp._numerics.invert_decreasing`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._numerics import SolverError, bisect, invert_decreasing

Fn = Callable[[float], float]


@dataclass(frozen=True)
class UtilitySpec:
    """Two-branch S-shaped utility.

    Attributes
    ----------
    alpha : float
        Loss reference point for the consumption-to-habit ratio.
    gain_value, gain_marginal : callable
        ``U+`` and ``U+'`` on ``[0, inf)``.
    gain_inv_marginal : callable
        ``(U+')^{-1}`` on ``(0, marginal_sup]``.
    loss_value, loss_marginal : callable
        ``U-`` and ``U-'`` on ``[0, alpha]``.
    marginal_sup : float
        ``U+'(0+)``; ``inf`` for families with an Inada condition at zero.
    family : str
        Family tag, used for config round trips and reports.
    params : dict
        Constructor arguments of the family.
    growth_verified : bool
        True when the growth condition on ``U+`` has an analytic argument
        for this family; user-assembled utilities carry ``False``.
    """

    alpha: float
    gain_value: Fn
    gain_marginal: Fn
    gain_inv_marginal: Fn
    loss_value: Fn
    loss_marginal: Fn
    marginal_sup: float = math.inf
    family: str = "custom"
    params: dict = field(default_factory=dict)
    growth_verified: bool = False

    def value(self, c):
        """The S-shaped utility ``U(c)`` for ``c >= 0`` (vectorized)."""
        c = np.asarray(c, dtype=float)
        gain = np.where(c > self.alpha, c - self.alpha, 0.0)
        loss = np.where(c <= self.alpha, self.alpha - c, 0.0)
        out = np.where(c > self.alpha, _vec(self.gain_value)(gain), -_vec(self.loss_value)(loss))
        return out if out.ndim else float(out)

    @property
    def u_at_zero(self) -> float:
        return -float(self.loss_value(self.alpha))

    def __reduce__(self):
        # closures do not pickle; built-in families rebuild from their parameters
        if self.family not in FAMILIES:
            raise TypeError("custom utilities cannot be pickled; build them inside the worker")
        return (_rebuild, (self.family, dict(self.params)))

    def satisfies_moderate_loss(self) -> bool:
        """``U-(alpha) <= alpha * U+'(0+)``; vacuous when the marginal is unbounded."""
        if math.isinf(self.marginal_sup):
            return True
        return self.loss_value(self.alpha) <= self.alpha * self.marginal_sup * (1 + 1e-14)


def _vec(f):
    def g(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            return np.asarray(f(float(x)))
        try:
            return np.asarray(f(x), dtype=float)
        except (TypeError, ValueError):
            return np.array([f(float(v)) for v in x.ravel()]).reshape(x.shape)

    return g


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def make_power(alpha: float, p: float, q: float, kappa: float) -> UtilitySpec:
    """Two-part power utility ``(c - alpha)^p`` on gains, ``-kappa (alpha - c)^q`` on losses."""
    _check(alpha > 0, "alpha must be positive")
    _check(0 < p < 1, "power family needs 0 < p < 1")
    _check(0 < q <= 1, "power family needs 0 < q <= 1")
    _check(kappa >= 1, "power family needs kappa >= 1")
    inv_exp = 1.0 / (p - 1.0)

    def gain_marginal(x):
        return p * x ** (p - 1.0)

    def gain_inv(phi):
        return (phi / p) ** inv_exp

    return UtilitySpec(
        alpha=alpha,
        gain_value=lambda x: x**p,
        gain_marginal=gain_marginal,
        gain_inv_marginal=gain_inv,
        loss_value=lambda x: kappa * x**q,
        loss_marginal=lambda x: kappa * q * x ** (q - 1.0),
        family="power",
        params=dict(alpha=alpha, p=p, q=q, kappa=kappa),
        growth_verified=True,
    )


def make_shifted_power(alpha: float, p: float, q: float, kappa: float) -> UtilitySpec:
    """Power utility of consumption shifted to vanish at the reference point.

    The gain branch is ``((x + alpha)^p - alpha^p) / p``, i.e. ``U(c) =
    (c^p - alpha^p) / p`` for ``c > alpha``; with ``p = -1`` this is
    ``1/alpha - 1/c``. Any ``p < 1, p != 0`` is accepted, which covers the
    negative exponents used for strictly concave habit models. Losses follow
    ``-kappa (alpha - c)^q``.
    """
    _check(alpha > 0, "alpha must be positive")
    _check(p < 1 and p != 0, "shifted power family needs p < 1, p != 0")
    _check(0 < q <= 1, "shifted power family needs 0 < q <= 1")
    _check(kappa > 0, "kappa must be positive")
    sup = alpha ** (p - 1.0)
    inv_exp = 1.0 / (p - 1.0)
    a_p = alpha**p

    def gain_inv(phi):
        if isinstance(phi, float):
            if phi > sup * (1 + 1e-14):
                raise ValueError("marginal above U+'(0)")
            return max(phi**inv_exp - alpha, 0.0)
        if np.any(np.asarray(phi) > sup * (1 + 1e-14)):
            raise ValueError("marginal above U+'(0)")
        return np.maximum(np.asarray(phi, dtype=float) ** inv_exp - alpha, 0.0)

    return UtilitySpec(
        alpha=alpha,
        gain_value=lambda x: ((x + alpha) ** p - a_p) / p,
        gain_marginal=lambda x: (x + alpha) ** (p - 1.0),
        gain_inv_marginal=gain_inv,
        loss_value=lambda x: kappa * x**q,
        loss_marginal=lambda x: kappa * q * x ** (q - 1.0),
        marginal_sup=sup,
        family="shifted_power",
        params=dict(alpha=alpha, p=p, q=q, kappa=kappa),
        growth_verified=True,
    )


def make_exponential(alpha: float, p: float, q: float, kappa: float) -> UtilitySpec:
    """Exponential S-shape: ``1 - exp(-p x)`` on gains, ``kappa (1 - exp(-q x))`` on losses.

    The gain marginal is bounded by ``p``, so the inverse marginal only
    accepts ``phi`` in ``(0, p]``.
    """
    _check(alpha > 0, "alpha must be positive")
    _check(q >= p > 0, "exponential family needs q >= p > 0")
    _check(kappa >= 1, "exponential family needs kappa >= 1")

    def gain_inv(phi):
        if isinstance(phi, float):
            if phi > p * (1 + 1e-14):
                raise ValueError("exponential inverse marginal needs phi <= p")
            return max(-math.log(phi / p) / p, 0.0)
        if np.any(np.asarray(phi) > p * (1 + 1e-14)):
            raise ValueError("exponential inverse marginal needs phi <= p")
        return np.maximum(-np.log(np.asarray(phi) / p) / p, 0.0)

    return UtilitySpec(
        alpha=alpha,
        gain_value=lambda x: 1.0 - np.exp(-p * x),
        gain_marginal=lambda x: p * np.exp(-p * x),
        gain_inv_marginal=gain_inv,
        loss_value=lambda x: kappa * (1.0 - np.exp(-q * x)),
        loss_marginal=lambda x: kappa * q * np.exp(-q * x),
        marginal_sup=p,
        family="exponential",
        params=dict(alpha=alpha, p=p, q=q, kappa=kappa),
        growth_verified=True,
    )


def sahara(x, gamma: float, beta: float):
    """SAHARA utility with absolute risk aversion ``gamma / sqrt(x^2 + beta^2)``."""
    root = np.sqrt(x * x + beta * beta)
    if gamma == 1.0:
        return 0.5 * np.log(x + root) + x / (2.0 * (x + root))
    return (x + gamma * root) * (x + root) ** (-gamma) / (1.0 - gamma * gamma)


def sahara_marginal(x, gamma: float, beta: float):
    return (x + np.sqrt(x * x + beta * beta)) ** (-gamma)


def make_sahara(
    alpha: float, gamma1: float, beta1: float, gamma2: float, beta2: float
) -> UtilitySpec:
    """SAHARA gain and loss branches, each shifted to vanish at zero.

    The marginal ``(x + sqrt(x^2 + beta^2))^(-gamma)`` inverts in closed form:
    with ``t = phi^(-1/gamma)``, ``x = (t^2 - beta^2) / (2 t)``.
    """
    _check(alpha > 0, "alpha must be positive")
    _check(gamma1 > 0 and beta1 > 0 and gamma2 > 0 and beta2 > 0, "SAHARA needs gamma, beta > 0")
    g0 = float(sahara(0.0, gamma1, beta1))
    l0 = float(sahara(0.0, gamma2, beta2))
    sup = beta1 ** (-gamma1)

    def gain_inv(phi):
        if isinstance(phi, float):
            if phi > sup * (1 + 1e-14):
                raise ValueError("marginal above U+'(0)")
            t = phi ** (-1.0 / gamma1)
            return max((t * t - beta1 * beta1) / (2.0 * t), 0.0)
        if np.any(np.asarray(phi) > sup * (1 + 1e-14)):
            raise ValueError("marginal above U+'(0)")
        t = np.asarray(phi, dtype=float) ** (-1.0 / gamma1)
        return np.maximum((t * t - beta1 * beta1) / (2.0 * t), 0.0)

    return UtilitySpec(
        alpha=alpha,
        gain_value=lambda x: sahara(x, gamma1, beta1) - g0,
        gain_marginal=lambda x: sahara_marginal(x, gamma1, beta1),
        gain_inv_marginal=gain_inv,
        loss_value=lambda x: sahara(x, gamma2, beta2) - l0,
        loss_marginal=lambda x: sahara_marginal(x, gamma2, beta2),
        marginal_sup=sup,
        family="sahara",
        params=dict(alpha=alpha, gamma1=gamma1, beta1=beta1, gamma2=gamma2, beta2=beta2),
        growth_verified=True,
    )


def make_aby22_approx(alpha: float, kappa: float, epsilon: float) -> UtilitySpec:
    """Three-piece utility approximating ``1/alpha - 1/c`` under ``c >= alpha``.

    On ``[alpha, alpha + epsilon)`` the gain is a power segment glued to
    ``1/alpha - 1/c`` at ``alpha + epsilon``; value and slope agree there.
    Losses are ``-2 kappa (alpha - c)^0.5``.
    """
    _check(alpha > 0 and kappa > 0 and epsilon > 0, "aby22 family needs alpha, kappa, epsilon > 0")
    a = alpha / (alpha + epsilon)
    k = epsilon ** (epsilon / (alpha + epsilon)) / (alpha * (alpha + epsilon))
    phi_glue = 1.0 / (alpha + epsilon) ** 2

    def gain_value(x):
        x = np.asarray(x, dtype=float)
        seg = k * np.power(np.maximum(x, 0.0), a)
        tail = 1.0 / alpha - 1.0 / (alpha + np.maximum(x, epsilon))
        out = np.where(x < epsilon, seg, tail)
        return out if out.ndim else float(out)

    def gain_marginal(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            seg = k * a * np.power(np.minimum(x, epsilon), a - 1.0)
        tail = 1.0 / (alpha + x) ** 2
        out = np.where(x < epsilon, seg, tail)
        return out if out.ndim else float(out)

    def gain_inv(phi):
        if isinstance(phi, float):
            if phi >= phi_glue:
                return (phi / (k * a)) ** (1.0 / (a - 1.0))
            return phi**-0.5 - alpha
        phi_a = np.asarray(phi, dtype=float)
        seg = (np.maximum(phi_a, phi_glue) / (k * a)) ** (1.0 / (a - 1.0))
        tail = np.minimum(phi_a, phi_glue) ** -0.5 - alpha
        out = np.where(phi_a >= phi_glue, seg, tail)
        return out if out.ndim else float(out)

    return UtilitySpec(
        alpha=alpha,
        gain_value=gain_value,
        gain_marginal=gain_marginal,
        gain_inv_marginal=gain_inv,
        loss_value=lambda x: 2.0 * kappa * x**0.5,
        loss_marginal=lambda x: kappa * x**-0.5,
        family="aby22",
        params=dict(alpha=alpha, kappa=kappa, epsilon=epsilon),
        growth_verified=True,
    )


def make_custom(
    alpha: float,
    gain_value: Fn,
    gain_marginal: Fn,
    loss_value: Fn,
    loss_marginal: Fn,
    gain_inv_marginal: Fn | None = None,
    marginal_sup: float = math.inf,
) -> UtilitySpec:
    """Assemble a utility from user callables.

    Without ``gain_inv_marginal`` the inverse is computed numerically by
    bracketed bisection. The growth condition is not machine-checked, so the
    result is flagged ``growth_verified=False``.
    """
    _check(alpha > 0, "alpha must be positive")
    if gain_inv_marginal is None:

        def gain_inv_marginal(phi):
            if np.ndim(phi):
                return np.array([invert_decreasing(gain_marginal, float(v)) for v in np.ravel(phi)]).reshape(
                    np.shape(phi)
                )
            return invert_decreasing(gain_marginal, float(phi))

    return UtilitySpec(
        alpha=alpha,
        gain_value=gain_value,
        gain_marginal=gain_marginal,
        gain_inv_marginal=gain_inv_marginal,
        loss_value=loss_value,
        loss_marginal=loss_marginal,
        marginal_sup=marginal_sup,
        family="custom",
        growth_verified=False,
    )


FAMILIES = {
    "power": make_power,
    "shifted_power": make_shifted_power,
    "exponential": make_exponential,
    "sahara": make_sahara,
    "aby22": make_aby22_approx,
}


def _rebuild(family: str, params: dict) -> UtilitySpec:
    return FAMILIES[family](**params)


def from_config(cfg: dict) -> UtilitySpec:
    """Build a utility from ``{"family": name, "params": {...}}``."""
    family = cfg.get("family", "power")
    if family not in FAMILIES:
        raise KeyError("unknown utility family %r" % family)
    return FAMILIES[family](**cfg.get("params", {}))


@dataclass(frozen=True)
class Envelope:
    """Constants of the concave envelope: kink ``c0``, slope ``phi0``, ``U(0)``."""

    c0: float
    phi0: float
    u_at_zero: float
    excess: float = float("nan")  # c0 - alpha at full precision


def envelope_gap(spec: UtilitySpec, c: float) -> float:
    """``c U+'(c - alpha) - U+(c - alpha) - U-(alpha)``; decreasing in ``c``."""
    x = c - spec.alpha
    if x <= 0.0:
        return spec.alpha * spec.marginal_sup + spec.u_at_zero
    return c * float(spec.gain_marginal(x)) - float(spec.gain_value(x)) + spec.u_at_zero


def concavify(spec: UtilitySpec, xtol: float = 1e-12, ftol: float = 1e-10) -> Envelope:
    """Concave-envelope constants of an S-shaped utility.

    ``c0`` is the tangency point of the line from ``(0, U(0))`` to the gain
    branch, found by bisection on the gap function; ``phi0 = U+'(c0 - alpha)``.
    """
    if not spec.satisfies_moderate_loss():
        raise ValueError(
            "loss at zero consumption exceeds alpha * U+'(0): U-(alpha)=%g > %g"
            % (spec.loss_value(spec.alpha), spec.alpha * spec.marginal_sup)
        )
    alpha = spec.alpha
    u0 = spec.u_at_zero
    if not math.isinf(spec.marginal_sup):
        g_alpha = alpha * spec.marginal_sup + u0
        if g_alpha <= ftol * max(1.0, abs(u0)):
            return Envelope(c0=alpha, phi0=float(spec.marginal_sup), u_at_zero=u0, excess=0.0)

    # bisect on t = log(c - alpha): with heavy loss aversion the tangency can
    # sit ~1e-20 above alpha, below the resolution of c itself
    def g(t):
        return gap_excess(spec, math.exp(t))

    x_hi = 1e-3 * alpha
    while gap_excess(spec, x_hi) > 0:
        x_hi *= 2.0
        if x_hi > 1e6 * alpha:
            raise SolverError("concavify: no sign change of the envelope gap below 1e6*alpha")
    x_lo = x_hi
    while True:
        x_lo *= 1e-3
        if x_lo < 1e-290:
            raise SolverError("concavify: envelope gap negative down to c - alpha = 1e-290")
        gl = gap_excess(spec, x_lo)
        if math.isfinite(gl) and gl > 0:
            break
        if not math.isfinite(gl):
            # infinite gap means positive; step back up to a finite point
            while not math.isfinite(gl):
                x_lo *= 10.0
                gl = gap_excess(spec, x_lo)
            if gl > 0:
                break
    t0 = bisect(g, math.log(x_lo), math.log(x_hi), xtol=xtol, ftol=0.0)
    x0 = math.exp(t0)
    return Envelope(c0=alpha + x0, phi0=float(spec.gain_marginal(x0)), u_at_zero=u0, excess=x0)


def gap_excess(spec: UtilitySpec, x: float) -> float:
    """Envelope gap as a function of the gain excess ``x = c - alpha > 0``."""
    return (spec.alpha + x) * float(spec.gain_marginal(x)) - float(spec.gain_value(x)) + spec.u_at_zero


def envelope_value(spec: UtilitySpec, env: Envelope, c):
    """Concave envelope: linear ``U(0) + phi0 c`` up to ``c0``, then ``U``."""
    c = np.asarray(c, dtype=float)
    lin = env.u_at_zero + env.phi0 * c
    out = np.where(c <= env.c0, lin, spec.value(np.maximum(c, env.c0)))
    return out if out.ndim else float(out)


def chat(spec: UtilitySpec, env: Envelope, phi):
    """Maximizer of ``U(c) - phi c`` over ``c >= 0``.

    Zero above ``phi0``, ``alpha + (U+')^{-1}(phi)`` below; at the tie
    ``phi == phi0`` the larger maximizer ``c0`` is returned.
    """
    phi_a = np.asarray(phi, dtype=float)
    if phi_a.ndim == 0:
        phi_f = float(phi_a)
        if phi_f > env.phi0:
            return 0.0
        if phi_f == env.phi0:
            return env.c0
        return spec.alpha + float(spec.gain_inv_marginal(phi_f))
    inside = phi_a < env.phi0
    safe = np.where(inside, phi_a, env.phi0)
    out = np.where(inside, spec.alpha + np.asarray(spec.gain_inv_marginal(safe), dtype=float), 0.0)
    return np.where(phi_a == env.phi0, env.c0, out)


def G(spec: UtilitySpec, phi):
    """``U+(I(phi)) - phi (alpha + I(phi))`` with ``I = (U+')^{-1}``, for ``0 < phi <= phi0``."""
    x = spec.gain_inv_marginal(phi)
    return spec.gain_value(x) - phi * (spec.alpha + x)
