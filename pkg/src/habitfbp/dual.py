"""Dual free-boundary problem: roots, the (phi, psi) ODE system and shooting.

All integration happens in ``s = log y``, backward from a candidate boundary
``ybar`` toward ``y_min``. In these coordinates the system reads

    dphi/ds = phi (1 - psi)
    dpsi/ds = -(1 - psi)(psi - k I(phi) + k c1) + k (r + rho) y / (rho phi) - k delta / rho

with ``k = 2 rho sigma^2 / mu^2``, ``c1 = (r - delta)/rho + 1 - alpha`` and
``I`` the inverse gain marginal.

Shooting
--------
Candidates with a small ``ybar`` leave the domain through ``psi = 1`` and
candidates with a large ``ybar`` through ``psi = 0``. Bisection on ``ybar``
pins the switch point ``y0``. In double precision the two bracketing
trajectories still separate at a finite depth, because the surviving
trajectory is repelling for backward integration. Whenever that happens the
solver restarts from the last point where both agree and bisects on ``psi``
there instead (``phi`` held fixed), continuing until ``y_min`` is reached.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._numerics import DP_A, DP_B, DP_E, CubicHermite, SolverError
from .utility import Envelope, UtilitySpec, G, concavify

log = logging.getLogger(__name__)

# unpacked tableau for the hand-rolled 2-D step
_A21 = DP_A[1][0]
_A31, _A32 = DP_A[2]
_A41, _A42, _A43 = DP_A[3]
_A51, _A52, _A53, _A54 = DP_A[4]
_A61, _A62, _A63, _A64, _A65 = DP_A[5]
_B1, _, _B3, _B4, _B5, _B6, _ = DP_B
_E1, _, _E3, _E4, _E5, _E6, _E7 = DP_E
_C = (0.0, 0.2, 0.3, 0.8, 8 / 9, 1.0, 1.0)

PSI_BAND = 1e-12


@dataclass(frozen=True)
class MarketParams:
    """Market and preference rates.

    ``delta`` is the effective discount rate (subjective rate plus any
    mortality intensity).
    """

    r: float = 0.02
    mu: float = 0.1
    sigma: float = 0.2
    rho: float = 1.0
    delta: float = 0.3

    def __post_init__(self):
        if not self.r >= 0:
            raise ValueError("r must be >= 0")
        for name in ("mu", "sigma", "rho", "delta"):
            if not getattr(self, name) > 0:
                raise ValueError("%s must be > 0" % name)


@dataclass(frozen=True)
class Roots:
    lam: float
    lamp: float
    gamma: float


def solve_roots(m: MarketParams) -> Roots:
    """Negative and positive roots of ``a x^2 - (a + r + rho - delta) x - delta``.

    ``a = mu^2 / (2 sigma^2)``. The negative root uses the cancellation-free
    form when ``b > 0``.
    """
    a = m.mu**2 / (2.0 * m.sigma**2)
    b = a + m.r + m.rho - m.delta
    root = math.sqrt(b * b + 4.0 * a * m.delta)
    lam = -2.0 * m.delta / (b + root) if b > 0 else (b - root) / (2.0 * a)
    lamp = -m.delta / (a * lam)
    return Roots(lam=lam, lamp=lamp, gamma=lam / (lam - 1.0))


def psi_cap(ybar: float, env: Envelope, roots: Roots) -> float:
    """Affine cap ``(lam - 1)(ybar - phi0) / phi0``; 1 at ``gamma phi0``, 0 at ``phi0``."""
    return (roots.lam - 1.0) * (ybar - env.phi0) / env.phi0


def ode_rhs(y: float, phi: float, psi: float, market: MarketParams, spec: UtilitySpec):
    """Right-hand side ``(phi'(y), psi'(y))`` of the coupled system in ``y``."""
    m = market
    k = 2.0 * m.rho * m.sigma**2 / m.mu**2
    inv = float(spec.gain_inv_marginal(phi))
    dphi = phi * (1.0 - psi) / y
    bracket = (1.0 - psi) / y * (psi / k - inv + (m.r - m.delta) / m.rho + 1.0 - spec.alpha)
    dpsi = -k * (bracket - (m.r + m.rho) / (m.rho * phi) + m.delta / (m.rho * y))
    return dphi, dpsi


def make_log_rhs(market: MarketParams, spec: UtilitySpec):
    """``(s, phi, psi) -> (dphi/ds, dpsi/ds)`` with ``s = log y``."""
    m = market
    k = 2.0 * m.rho * m.sigma**2 / m.mu**2
    kc1 = k * ((m.r - m.delta) / m.rho + 1.0 - spec.alpha)
    kc2 = k * (m.r + m.rho) / m.rho
    kc3 = k * m.delta / m.rho
    inv = spec.gain_inv_marginal
    exp = math.exp

    def rhs(s, phi, psi):
        om = 1.0 - psi
        return phi * om, -om * (psi - k * float(inv(phi)) + kc1) + kc2 * exp(s) / phi - kc3

    return rhs


def _dp_step(rhs, s, f, q, h, k1):
    """Dormand-Prince step for the 2-D system; returns new state, error, k7."""
    f1, q1 = k1
    f2, q2 = rhs(s + _C[1] * h, f + h * _A21 * f1, q + h * _A21 * q1)
    f3, q3 = rhs(s + _C[2] * h, f + h * (_A31 * f1 + _A32 * f2), q + h * (_A31 * q1 + _A32 * q2))
    f4, q4 = rhs(
        s + _C[3] * h,
        f + h * (_A41 * f1 + _A42 * f2 + _A43 * f3),
        q + h * (_A41 * q1 + _A42 * q2 + _A43 * q3),
    )
    f5, q5 = rhs(
        s + _C[4] * h,
        f + h * (_A51 * f1 + _A52 * f2 + _A53 * f3 + _A54 * f4),
        q + h * (_A51 * q1 + _A52 * q2 + _A53 * q3 + _A54 * q4),
    )
    f6, q6 = rhs(
        s + h,
        f + h * (_A61 * f1 + _A62 * f2 + _A63 * f3 + _A64 * f4 + _A65 * f5),
        q + h * (_A61 * q1 + _A62 * q2 + _A63 * q3 + _A64 * q4 + _A65 * q5),
    )
    fn = f + h * (_B1 * f1 + _B3 * f3 + _B4 * f4 + _B5 * f5 + _B6 * f6)
    qn = q + h * (_B1 * q1 + _B3 * q3 + _B4 * q4 + _B5 * q5 + _B6 * q6)
    k7 = rhs(s + h, fn, qn)
    ef = h * (_E1 * f1 + _E3 * f3 + _E4 * f4 + _E5 * f5 + _E6 * f6 + _E7 * k7[0])
    eq = h * (_E1 * q1 + _E3 * q3 + _E4 * q4 + _E5 * q5 + _E6 * q6 + _E7 * k7[1])
    return fn, qn, ef, eq, k7


class ExitKind(enum.Enum):
    THROUGH_PSI_ZERO = "ThroughPsiZero"
    THROUGH_PSI_ONE = "ThroughPsiOne"
    REACHED_Y_MIN = "ReachedYMin"


@dataclass(frozen=True)
class SolverControls:
    """Integration and shooting settings.

    ``y_min_factor`` sets ``y_min = y_min_factor * phi0``; ``shoot_tol`` is the
    bisection bracket width relative to ``phi0`` guaranteed for ``y0``;
    ``max_ds`` caps the step in ``log y`` so the stored grid stays dense;
    ``sep_tol`` is the largest ``psi`` disagreement between bracketing
    trajectories tolerated before a restart.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    y_min_factor: float = 1e-8
    shoot_tol: float = 1e-10
    max_steps: int = 200_000
    max_ds: float = 0.05
    sep_tol: float = 1e-9
    max_stages: int = 400

    def __post_init__(self):
        if not (0 < self.rel_tol < 1 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.y_min_factor < 1:
            raise ValueError("y_min_factor must lie in (0, 1)")
        if not self.shoot_tol > 0 or self.max_steps < 1 or self.max_ds <= 0:
            raise ValueError("shoot_tol, max_steps and max_ds must be positive")


@dataclass
class Trajectory:
    """Backward trajectory of ``(phi, psi)`` from ``ybar``.

    ``ys`` is increasing; ``dphis``/``dpsis`` are derivatives with respect to
    ``log y``. ``y_exit`` is the refined barrier crossing (or the last point
    for ``ReachedYMin``).
    """

    ybar: float
    ys: np.ndarray
    phis: np.ndarray
    psis: np.ndarray
    dphis: np.ndarray
    dpsis: np.ndarray
    exit: ExitKind
    y_exit: float
    steps: int = 0


class _Segment:
    """Mutable storage for an integration run, in integration (decreasing s) order."""

    __slots__ = ("s", "f", "q", "df", "dq", "exit", "s_exit", "steps")

    def __init__(self):
        self.s, self.f, self.q, self.df, self.dq = [], [], [], [], []
        self.exit = None
        self.s_exit = None
        self.steps = 0

    def append(self, s, f, q, k):
        self.s.append(s)
        self.f.append(f)
        self.q.append(q)
        self.df.append(k[0])
        self.dq.append(k[1])


def _classify(q):
    if q <= PSI_BAND:
        return ExitKind.THROUGH_PSI_ZERO
    if q >= 1.0 - PSI_BAND:
        return ExitKind.THROUGH_PSI_ONE
    return None


def _integrate(rhs, s0, f0, q0, s_end, ctl: SolverControls, store=True, y_scale=1.0) -> _Segment:
    """Adaptive backward DP5 run from ``s0`` to ``s_end`` with barrier detection."""
    seg = _Segment()
    s, f, q = s0, f0, q0
    k1 = rhs(s, f, q)
    seg.append(s, f, q, k1)
    h = -min(ctl.max_ds, 1e-3)
    beta = 0.04
    expo = 0.2 - 0.75 * beta
    facold = 1e-4
    rtol, atol = ctl.rel_tol, ctl.abs_tol
    steps = 0
    while s > s_end:
        steps += 1
        if steps > ctl.max_steps:
            raise SolverError(
                "max_steps exceeded at y=%.6g" % math.exp(s), y=math.exp(s), phi=f, psi=q
            )
        if s + h < s_end:
            h = s_end - s
        try:
            fn, qn, ef, eq, k7 = _dp_step(rhs, s, f, q, h, k1)
            ok = math.isfinite(fn) and math.isfinite(qn) and math.isfinite(ef) and math.isfinite(eq)
        except (ValueError, ZeroDivisionError, OverflowError):
            ok = False
        if not ok:
            # left the inverse-marginal domain or overflowed inside the step
            h *= 0.25
            if abs(h) < 1e-14:
                kind = ExitKind.THROUGH_PSI_ONE if q > 0.5 else ExitKind.THROUGH_PSI_ZERO
                seg.exit, seg.s_exit = kind, s
                break
            continue
        sf = atol + rtol * max(abs(f), abs(fn))
        sq = atol + rtol * max(abs(q), abs(qn))
        en = math.sqrt(0.5 * ((ef / sf) ** 2 + (eq / sq) ** 2))
        if en <= 1.0:
            kind = _classify(qn)
            if kind is not None:
                seg.exit = kind
                seg.s_exit = _refine_exit(rhs, s, f, q, h, k1, kind, y_scale)
                break
            s, f, q, k1 = s + h, fn, qn, k7
            if store:
                seg.append(s, f, q, k1)
            else:
                seg.s[-1], seg.f[-1], seg.q[-1] = s, f, q
            fac = en**expo / facold**beta / 0.9
            fac = min(5.0, max(0.1, fac))
            facold = max(en, 1e-4)
            h = max(h / fac, -ctl.max_ds)
        else:
            h /= min(5.0, en**expo / 0.9)
    seg.steps = steps
    if seg.exit is None:
        seg.exit = ExitKind.REACHED_Y_MIN
        seg.s_exit = s
    return seg


def _refine_exit(rhs, s, f, q, h, k1, kind, y_scale):
    """Bisect the step length until the barrier crossing is located to 1e-12 ybar."""
    inside, outside = 0.0, h
    target = 1e-12 * y_scale
    for _ in range(200):
        if abs(math.exp(s + inside) - math.exp(s + outside)) < target:
            break
        mid = 0.5 * (inside + outside)
        try:
            _, qm, _, _, _ = _dp_step(rhs, s, f, q, mid, k1)
            crossed = _classify(qm) is not None
        except (ValueError, ZeroDivisionError, OverflowError):
            crossed = True
        if crossed:
            outside = mid
        else:
            inside = mid
    return s + 0.5 * (inside + outside)


def _to_trajectory(ybar, seg: _Segment) -> Trajectory:
    s = np.array(seg.s[::-1])
    return Trajectory(
        ybar=ybar,
        ys=np.exp(s),
        phis=np.array(seg.f[::-1]),
        psis=np.array(seg.q[::-1]),
        dphis=np.array(seg.df[::-1]),
        dpsis=np.array(seg.dq[::-1]),
        exit=seg.exit,
        y_exit=math.exp(seg.s_exit),
        steps=seg.steps,
    )


def integrate_candidate(
    ybar: float,
    market: MarketParams,
    spec: UtilitySpec,
    env: Envelope,
    controls: SolverControls = SolverControls(),
    roots: Roots | None = None,
) -> Trajectory:
    """Integrate backward from ``phi(ybar) = phi0, psi(ybar) = Psi(ybar)`` and classify the exit."""
    roots = roots or solve_roots(market)
    lo = roots.gamma * env.phi0
    if not lo < ybar < env.phi0:
        raise ValueError("ybar must lie in (gamma phi0, phi0) = (%g, %g)" % (lo, env.phi0))
    rhs = make_log_rhs(market, spec)
    s_end = math.log(controls.y_min_factor * env.phi0)
    seg = _integrate(rhs, math.log(ybar), env.phi0, psi_cap(ybar, env, roots), s_end, controls, y_scale=ybar)
    return _to_trajectory(ybar, seg)


@dataclass
class DualSolution:
    """Shot solution of the dual free-boundary problem.

    The grid holds ``(y, phi, psi)`` on ``[y_reached, y0]`` together with
    ``u, u', u''`` from the closed formulas; above ``y0`` the Euler branch is
    closed-form.
    """

    market: MarketParams
    spec: UtilitySpec
    envelope: Envelope
    roots: Roots
    controls: SolverControls
    y0: float
    bracket: tuple
    ys: np.ndarray
    phis: np.ndarray
    psis: np.ndarray
    dphis: np.ndarray
    dpsis: np.ndarray
    y_min: float
    asymptote: dict
    stages: int = 1
    restarts: list = field(default_factory=list)

    def __post_init__(self):
        s = np.log(self.ys)
        self._s = s
        self._phi_i = CubicHermite(s, self.phis, self.dphis, monotone=True)
        self._psi_i = CubicHermite(s, self.psis, self.dpsis)
        u, du, ddu = self._formulas(self.ys, self.phis, self.psis)
        self.us, self.dus, self.ddus = u, du, ddu
        self._rhs = make_log_rhs(self.market, self.spec)

    def __getstate__(self):
        state = dict(self.__dict__)
        state.pop("_rhs", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._rhs = make_log_rhs(self.market, self.spec)

    @property
    def y_reached(self) -> float:
        return float(self.ys[0])

    @property
    def x_max(self) -> float:
        return float(-self.dus[0])

    def _formulas(self, y, phi, psi):
        m = self.market
        a = m.mu**2 / (2.0 * m.rho * m.sigma**2)
        g = np.asarray(G(self.spec, phi), dtype=float)
        u = (a * phi * psi + g + (m.delta - m.r - m.rho) / m.rho * (y - phi)) / m.delta
        du = (y - phi) / (m.rho * y)
        ddu = phi * psi / (m.rho * y * y)
        return u, du, ddu

    def phi_psi(self, y):
        """Interpolated ``(phi, psi)`` on ``(0, y0]``; clamped below the grid."""
        s = np.log(np.clip(np.asarray(y, dtype=float), self.ys[0], self.ys[-1]))
        return self._phi_i(s), self._psi_i(s)

    def local_state(self, y, anchor: int | None = None):
        """``(phi, psi)`` at ``y`` by integrating one DP5 step from a stored node.

        With a fixed ``anchor`` the result is a smooth function of ``y``, which
        makes it suitable for numerical differentiation.
        """
        s_t = math.log(y)
        if anchor is None:
            anchor = int(np.clip(np.searchsorted(self._s, s_t, side="left"), 0, self._s.size - 1))
        s = self._s[anchor]
        f, q = float(self.phis[anchor]), float(self.psis[anchor])
        h = s_t - s
        if h == 0.0:
            return f, q
        n = max(1, int(math.ceil(abs(h) / self.controls.max_ds)))
        hs = h / n
        for _ in range(n):
            k1 = self._rhs(s, f, q)
            f, q, _, _, _ = _dp_step(self._rhs, s, f, q, hs, k1)
            s += hs
        return f, q

    def u_from_state(self, y, phi, psi):
        return self._formulas(np.asarray(y, float), np.asarray(phi, float), np.asarray(psi, float))


def _side(seg: _Segment) -> ExitKind:
    """Exit class, with survivors to ``y_min`` classified by their terminal trend.

    A trajectory that reaches ``y_min`` with ``psi`` falling as ``y`` decreases
    is peeling off toward zero; otherwise it counts as the one side.
    """
    if seg.exit is not ExitKind.REACHED_Y_MIN:
        return seg.exit
    return ExitKind.THROUGH_PSI_ZERO if seg.dq[-1] > 0.0 else ExitKind.THROUGH_PSI_ONE


def _stage_bisect(run, lo_arg, hi_arg):
    """Bisection on a scalar where ``run(lo)`` exits through one and ``run(hi)`` through zero.

    Runs to floating-point stall and returns ``(lo_arg, hi_arg, seg_lo, seg_hi)``.
    """
    seg_lo = run(lo_arg)
    seg_hi = run(hi_arg)
    if _side(seg_lo) is not ExitKind.THROUGH_PSI_ONE or _side(seg_hi) is not ExitKind.THROUGH_PSI_ZERO:
        raise SolverError(
            "bracket endpoints misclassified: lo=%s hi=%s" % (seg_lo.exit.value, seg_hi.exit.value),
            lo=lo_arg,
            hi=hi_arg,
        )
    while True:
        mid = 0.5 * (lo_arg + hi_arg)
        if mid <= lo_arg or mid >= hi_arg:
            break
        seg = run(mid)
        if _side(seg) is ExitKind.THROUGH_PSI_ONE:
            lo_arg, seg_lo = mid, seg
        else:
            hi_arg, seg_hi = mid, seg
    return lo_arg, hi_arg, seg_lo, seg_hi


def _restart_index(rhs, seg_lo: _Segment, seg_hi: _Segment, sep_tol: float) -> int:
    """Last index of ``seg_lo`` where the hi trajectory still agrees within ``sep_tol``.

    The hi trajectory is evaluated at the lo nodes by a single DP5 step from
    the preceding hi node, so the comparison carries no interpolation error.
    """
    hs = seg_hi.s
    j = 0
    n_hi = len(hs)
    last_ok = 0
    for i in range(1, len(seg_lo.s)):
        s_t = seg_lo.s[i]
        while j + 1 < n_hi and hs[j + 1] >= s_t:
            j += 1
        if j + 1 >= n_hi and hs[j] > s_t and seg_hi.s_exit is not None and s_t < seg_hi.s_exit:
            break
        h = s_t - hs[j]
        if h == 0.0:
            fh, qh = seg_hi.f[j], seg_hi.q[j]
        else:
            try:
                fh, qh, _, _, _ = _dp_step(rhs, hs[j], seg_hi.f[j], seg_hi.q[j], h, (seg_hi.df[j], seg_hi.dq[j]))
            except (ValueError, ZeroDivisionError, OverflowError):
                break
        fl, ql = seg_lo.f[i], seg_lo.q[i]
        if abs(ql - qh) > sep_tol or abs(fl - fh) > sep_tol * abs(fl):
            break
        last_ok = i
    return last_ok


def shoot_y0(
    market: MarketParams,
    spec: UtilitySpec,
    env: Envelope | None = None,
    controls: SolverControls = SolverControls(),
) -> DualSolution:
    """Locate the free boundary ``y0`` and build the dual solution down to ``y_min``."""
    env = env or concavify(spec)
    if not math.isinf(spec.marginal_sup) and env.phi0 > spec.marginal_sup * (1 + 1e-12):
        raise SolverError("phi0 exceeds the gain marginal supremum")
    roots = solve_roots(market)
    rhs = make_log_rhs(market, spec)
    phi0 = env.phi0
    y_min = controls.y_min_factor * phi0
    s_end = math.log(y_min)
    lo0 = roots.gamma * phi0
    width = phi0 - lo0
    eta = 1e-7 * width
    if y_min >= 0.5 * lo0:
        raise SolverError(
            "y_min = %.3g phi0 leaves no room below gamma phi0 = %.3g phi0; lower y_min_factor"
            % (controls.y_min_factor, roots.gamma)
        )

    def run_ybar(yb):
        return _integrate(rhs, math.log(yb), phi0, psi_cap(yb, env, roots), s_end, controls, y_scale=yb)

    # y0 can sit within ~rho^2 phi0 of phi0; pull the upper end in until it exits through zero
    hi_eta = eta
    while _side(run_ybar(phi0 - hi_eta)) is ExitKind.THROUGH_PSI_ONE and hi_eta > 1e-15 * phi0:
        hi_eta /= 16.0
    lo, hi, seg_lo, seg_hi = _stage_bisect(run_ybar, lo0 + eta, phi0 - hi_eta)
    if hi - lo > controls.shoot_tol * phi0:
        raise SolverError("shooting bracket did not shrink below shoot_tol", lo=lo, hi=hi)
    y0 = lo
    log.info("y0 bracket [%.16g, %.16g], width %.3g", lo, hi, hi - lo)

    pieces = []  # segments in decreasing s, without overlap
    restarts = []
    stages = 1
    while True:
        idx = _restart_index(rhs, seg_lo, seg_hi, controls.sep_tol)
        last = len(seg_lo.s) - 1
        if idx == last and seg_lo.exit is ExitKind.REACHED_Y_MIN:
            pieces.append(seg_lo)
            break
        if idx < 1 or stages >= controls.max_stages:
            pieces.append(_head(seg_lo, max(idx, 0) + 1))
            log.warning("shooting stalled at y=%.3g after %d stages", math.exp(seg_lo.s[max(idx, 0)]), stages)
            break
        s_r, f_r = seg_lo.s[idx], seg_lo.f[idx]
        q_one, q_zero = seg_lo.q[idx], seg_hi_state(rhs, seg_hi, s_r)
        pieces.append(_head(seg_lo, idx))
        restarts.append(math.exp(s_r))
        stages += 1

        def run_psi(qv, s_r=s_r, f_r=f_r):
            return _integrate(rhs, s_r, f_r, qv, s_end, controls, y_scale=math.exp(s_r))

        q_one, q_zero = _expand_bracket(run_psi, q_one, q_zero)
        # psi bracket: larger psi exits through one, so the "lo" argument is -psi
        _, _, seg_lo, seg_hi = _stage_bisect(lambda nq: run_psi(-nq), -q_one, -q_zero)

    if sum(len(p.s) for p in pieces) < 2:
        raise SolverError("shot grid has fewer than two nodes", y0=y0)
    s = np.concatenate([np.asarray(p.s) for p in pieces])[::-1]
    f = np.concatenate([np.asarray(p.f) for p in pieces])[::-1]
    q = np.concatenate([np.asarray(p.q) for p in pieces])[::-1]
    df = np.concatenate([np.asarray(p.df) for p in pieces])[::-1]
    dq = np.concatenate([np.asarray(p.dq) for p in pieces])[::-1]
    ys = np.exp(s)
    asym = {
        "y": float(ys[0]),
        "phi": float(f[0]),
        "psi": float(q[0]),
        "psi_to_one": bool(q[0] > 0.999),
        "phi_positive": bool(f[0] > 1e-6),
        "psi_tends_to_one": _psi_tends_to_one(s, q),
        "reached_y_min": bool(ys[0] <= y_min * (1 + 1e-9)),
    }
    return DualSolution(
        market=market,
        spec=spec,
        envelope=env,
        roots=roots,
        controls=controls,
        y0=float(y0),
        bracket=(float(lo), float(hi)),
        ys=ys,
        phis=f,
        psis=q,
        dphis=df,
        dpsis=dq,
        y_min=y_min,
        asymptote=asym,
        stages=stages,
        restarts=restarts,
    )


def _head(seg: _Segment, n: int) -> _Segment:
    cut = _Segment()
    cut.s, cut.f, cut.q = seg.s[:n], seg.f[:n], seg.q[:n]
    cut.df, cut.dq = seg.df[:n], seg.dq[:n]
    return cut


def _psi_tends_to_one(s, q) -> bool:
    """``psi`` above 0.9 and still rising over the deepest decade of the grid."""
    tail = s <= s[0] + math.log(10.0)
    qt = q[tail]
    return bool(qt.size > 2 and qt[0] > 0.9 and qt[0] >= qt[-1])


def seg_hi_state(rhs, seg_hi: _Segment, s_t: float) -> float:
    """``psi`` of the hi trajectory at ``s_t`` (one DP5 step from the preceding node)."""
    hs = seg_hi.s
    j = 0
    while j + 1 < len(hs) and hs[j + 1] >= s_t:
        j += 1
    h = s_t - hs[j]
    if h == 0.0:
        return seg_hi.q[j]
    _, q, _, _, _ = _dp_step(rhs, hs[j], seg_hi.f[j], seg_hi.q[j], h, (seg_hi.df[j], seg_hi.dq[j]))
    return q


def _expand_bracket(run_psi, q_one, q_zero):
    """Widen ``(q_zero, q_one)`` until the runs exit through zero and one respectively.

    The restart point is where the two previous trajectories still agree, so
    both re-integrations can land on the same side; the gap is doubled
    outward until they separate.
    """
    gap = max(q_one - q_zero, 1e-15)
    for _ in range(60):
        if _side(run_psi(q_one)) is ExitKind.THROUGH_PSI_ONE:
            break
        q_one = min(q_one + gap, 1.0)
        gap *= 2.0
    else:
        raise SolverError("restart bracket for psi not found (one side)", q_one=q_one)
    gap = max(q_one - q_zero, 1e-15)
    for _ in range(60):
        if q_zero < q_one and _side(run_psi(q_zero)) is ExitKind.THROUGH_PSI_ZERO:
            return q_one, q_zero
        q_zero = max(q_one - 2.0 * gap, 0.0)
        gap *= 2.0
        if q_zero == 0.0:
            return q_one, q_zero
    raise SolverError("restart bracket for psi not found (zero side)", q_one=q_one)


def dual_u(sol: DualSolution, y):
    """``(u, u', u'')`` at ``y > 0``: shot grid below ``y0``, Euler branch above."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("dual_u needs y > 0")
    env, lam, rho = sol.envelope, sol.roots.lam, sol.market.rho
    y0 = sol.y0
    a1 = (y0 - env.phi0) / (rho * lam)
    hi = y > y0
    yh = np.where(hi, y, y0)
    t = (yh / y0) ** lam
    u_hi = a1 * t + env.u_at_zero / sol.market.delta
    du_hi = a1 * lam * t / yh
    ddu_hi = a1 * lam * (lam - 1.0) * t / (yh * yh)
    yl = np.where(hi, y0, y)
    phi, psi = sol.phi_psi(yl)
    u_lo, du_lo, ddu_lo = sol.u_from_state(yl, phi, psi)
    out = (
        np.where(hi, u_hi, u_lo),
        np.where(hi, du_hi, du_lo),
        np.where(hi, ddu_hi, ddu_lo),
    )
    if y.ndim == 0:
        return tuple(float(v) for v in out)
    return out


def solve(market: MarketParams, spec: UtilitySpec, controls: SolverControls = SolverControls()) -> DualSolution:
    return shoot_y0(market, spec, concavify(spec), controls)
