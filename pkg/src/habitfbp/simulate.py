"""Monte-Carlo paths of the optimally controlled wealth-to-habit ratio.

The state is integrated on ``Z = log X`` with an explicit Euler step,

    dZ = [r + rho + mu w - (1/X + rho) c - sigma^2 w^2 / 2] dt + sigma w dB,

where ``w = pi*(X) / X`` and ``c = c*(X)`` are evaluated at the left end of
the step. Habit is advanced exactly for piecewise-constant ``c``:
``H <- H exp(rho (c - 1) dt)``. Wealth and consumption follow as
``W = X H`` and ``C = c H``.

Each path owns a Philox stream keyed by ``(seed, path)``, so path ``i``
does not depend on how many other paths are run. Gaussians come from the
inverse normal CDF applied to 53-bit uniforms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from ._numerics import CubicHermite
from .primal import PrimalSolution

log = logging.getLogger(__name__)

TRANSVERSALITY_HORIZONS = (5.0, 10.0, 20.0, 40.0)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``record_every`` is the recording stride in steps (0 records only the
    start and the end). ``scheme`` is fixed to ``"log-euler"``.
    """

    x_init: float
    h_init: float = 1.0
    T: float = 10.0
    dt: float = 1e-2
    n_paths: int = 1000
    seed: int = 0
    record_every: int = 100
    scheme: str = "log-euler"

    def __post_init__(self):
        if not (self.x_init > 0 and self.h_init > 0):
            raise ValueError("x_init and h_init must be positive")
        if not self.dt > 0 or self.T < self.dt:
            raise ValueError("need dt > 0 and T >= dt")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.scheme != "log-euler":
            raise ValueError("only the log-euler scheme is available")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class PathSet:
    """Recorded paths, shape ``(n_paths, n_records)`` for each state array."""

    t: np.ndarray
    X: np.ndarray
    H: np.ndarray
    W: np.ndarray
    C: np.ndarray
    Pi: np.ndarray
    crossings: np.ndarray  # per path, number of times X crossed x0
    clamp_events: int  # policy queries beyond x_max (clamped tail)
    aborted: np.ndarray  # per path, True if a NaN guard fired
    W_sde: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    def summary(self) -> dict:
        """Means and 5/50/95% quantiles per recorded time."""
        out = {"t": self.t.tolist()}
        ok = ~self.aborted
        for name in ("X", "H", "W", "C", "Pi"):
            a = getattr(self, name)[ok]
            q05, q50, q95 = np.quantile(a, [0.05, 0.5, 0.95], axis=0)
            out[name] = {
                "mean": a.mean(axis=0).tolist(),
                "q05": q05.tolist(),
                "q50": q50.tolist(),
                "q95": q95.tolist(),
            }
        out["crossings_total"] = int(self.crossings.sum())
        out["clamp_events"] = int(self.clamp_events)
        out["aborted"] = int(self.aborted.sum())
        return out


class PolicyTable:
    """Fast vectorized feedback policies.

    Above ``x0`` the consumption ratio and the risky weight ``pi/x`` are
    tabulated on a log grid from the exact evaluators and interpolated with
    cubic Hermite pieces in ``log x``. Below ``x0`` and beyond ``x_max`` the
    closed forms are used directly, so the jump of ``c*`` at ``x0`` is exact.
    """

    def __init__(self, primal: PrimalSolution, per_decade: int = 400):
        m = primal.market
        self.x0 = primal.x0
        self.x_max = primal.x_max
        lam = primal.dual.roots.lam
        self.w_aus = m.mu * (1.0 - lam) / m.sigma**2
        n = max(int(per_decade * np.log10(self.x_max / self.x0)), 8)
        xs = np.geomspace(self.x0, self.x_max, n)
        lx = np.log(xs)
        c = np.asarray(primal.policy_c(xs), dtype=float)
        w = np.asarray(primal.policy_pi(xs), dtype=float) / xs
        # node slopes in log x from the exact evaluators; forward at x0, backward at x_max
        eps = 1e-6
        lo = np.exp(lx - eps)
        hi = np.exp(lx + eps)
        lo[0], hi[-1] = xs[0], xs[-1]
        span = np.log(hi / lo)
        dc = (np.asarray(primal.policy_c(hi)) - np.asarray(primal.policy_c(lo))) / span
        dw = (np.asarray(primal.policy_pi(hi)) / hi - np.asarray(primal.policy_pi(lo)) / lo) / span
        self._c = CubicHermite(lx, c, dc)
        self._w = CubicHermite(lx, w, dw)
        self.c_tail = float(self._c.y[-1])
        self._pi_tail = m.mu / (m.sigma**2 * m.rho) * primal.psi_min
        self._rho = m.rho

    def __call__(self, x: np.ndarray):
        """Return ``(c, w, n_clamped)`` with ``w = pi / x``."""
        x = np.asarray(x, dtype=float)
        c = np.zeros_like(x)
        w = np.full_like(x, self.w_aus)
        mid = (x >= self.x0) & (x <= self.x_max)
        tail = x > self.x_max
        if mid.any():
            lx = np.log(x[mid])
            c[mid] = self._c(lx)
            w[mid] = self._w(lx)
        if tail.any():
            c[tail] = self.c_tail
            w[tail] = self._pi_tail * (1.0 + self._rho * x[tail]) / x[tail]
        return c, w, int(tail.sum())


def _path_generators(seed: int, n_paths: int, first: int = 0):
    return [np.random.Generator(np.random.Philox(key=[seed, first + i])) for i in range(n_paths)]


def _normals(gens, n: int) -> np.ndarray:
    """``(len(gens), n)`` standard normals by inverse CDF of open-interval uniforms."""
    out = np.empty((len(gens), n))
    for i, g in enumerate(gens):
        k = g.integers(0, 2**53, size=n, dtype=np.uint64, endpoint=False)
        out[i] = ndtri((k.astype(np.float64) + 0.5) * 2.0**-53)
    return out


def brownian_increments(cfg: SimConfig, n_steps: int | None = None, first_path: int = 0) -> np.ndarray:
    """All Brownian increments of a run, shape ``(n_paths, n_steps)``.

    The same values the simulator draws internally; useful to share noise
    across step sizes (sum adjacent columns with :func:`coarsen`).
    """
    n_steps = cfg.n_steps if n_steps is None else n_steps
    gens = _path_generators(cfg.seed, cfg.n_paths, first_path)
    return _normals(gens, n_steps) * np.sqrt(cfg.dt)


def coarsen(dW: np.ndarray, k: int) -> np.ndarray:
    """Sum groups of ``k`` adjacent increments."""
    n, m = dW.shape
    if m % k:
        raise ValueError("number of steps must be divisible by k")
    return dW.reshape(n, m // k, k).sum(axis=2)


def simulate(
    primal: PrimalSolution,
    cfg: SimConfig,
    dW: np.ndarray | None = None,
    zero_vol: bool = False,
    policy: PolicyTable | None = None,
    record_times=None,
    track_wealth_sde: bool = False,
    chunk: int = 256,
    first_path: int = 0,
) -> PathSet:
    """Simulate ``cfg.n_paths`` optimal paths.

    Parameters
    ----------
    dW : ndarray, optional
        Brownian increments ``(n_paths, n_steps)`` overriding the RNG.
    zero_vol : bool
        Test hook: drop the diffusion term, so ``X`` follows the drift ODE.
    record_times : sequence of float, optional
        Record at these times (rounded to the step grid) instead of the
        regular ``record_every`` stride.
    track_wealth_sde : bool
        Also integrate wealth directly from its SDE with an Euler step,
        for the ``W = X H`` consistency check.
    first_path : int
        Global index of the first path; lets a run be split across workers
        without changing any path's random stream.
    """
    m = primal.market
    pol = policy or PolicyTable(primal)
    n, n_steps, dt = cfg.n_paths, cfg.n_steps, cfg.dt
    if dW is not None and dW.shape != (n, n_steps):
        raise ValueError("dW must have shape (n_paths, n_steps) = (%d, %d)" % (n, n_steps))
    if record_times is not None:
        rec = sorted({int(round(t / dt)) for t in record_times} | {0})
    elif cfg.record_every > 0:
        rec = list(range(0, n_steps + 1, cfg.record_every))
        if rec[-1] != n_steps:
            rec.append(n_steps)
    else:
        rec = [0, n_steps]
    rec_set = {k: j for j, k in enumerate(rec)}
    shape = (n, len(rec))
    X_r, H_r, C_r, P_r = (np.empty(shape) for _ in range(4))
    Ws_r = np.empty(shape) if track_wealth_sde else None

    z = np.full(n, np.log(cfg.x_init))
    h = np.full(n, float(cfg.h_init))
    w_sde = np.full(n, cfg.x_init * cfg.h_init)
    above = np.exp(z) >= pol.x0
    crossings = np.zeros(n, dtype=np.int64)
    aborted = np.zeros(n, dtype=bool)
    clamps = 0
    gens = None if (dW is not None or zero_vol) else _path_generators(cfg.seed, n, first_path)
    noise = None
    sig = 0.0 if zero_vol else m.sigma
    sqdt = np.sqrt(dt)
    a0 = m.r + m.rho

    for k in range(n_steps + 1):
        x = np.exp(z)
        c, w, nc = pol(x)
        clamps += nc
        if k in rec_set:
            j = rec_set[k]
            X_r[:, j], H_r[:, j], C_r[:, j], P_r[:, j] = x, h, c * h, w * x * h
            if track_wealth_sde:
                Ws_r[:, j] = w_sde
        if k == n_steps:
            break
        if dW is not None:
            db = dW[:, k]
        elif zero_vol:
            db = 0.0
        else:
            off = k % chunk
            if off == 0:
                noise = _normals(gens, min(chunk, n_steps - k)) * sqdt
            db = noise[:, off]
        drift = a0 + m.mu * w - (1.0 / x + m.rho) * c - 0.5 * (sig * w) ** 2
        if track_wealth_sde:
            wealth = w_sde
            w_sde = wealth + (m.r * wealth + m.mu * w * x * h - c * h) * dt + sig * w * x * h * db
        z = z + drift * dt + sig * w * db
        h = h * np.exp(m.rho * (c - 1.0) * dt)
        bad = ~np.isfinite(z) & ~aborted
        if bad.any():
            for i in np.flatnonzero(bad):
                log.error("path %d aborted at t=%.6g: X=%r, c=%r, w=%r", i, k * dt, x[i], c[i], w[i])
            aborted |= bad
            z = np.where(aborted, np.log(cfg.x_init), z)
        now_above = np.exp(z) >= pol.x0
        crossings += now_above != above
        above = now_above

    t = np.asarray(rec, dtype=float) * dt
    ps = PathSet(
        t=t,
        X=X_r,
        H=H_r,
        W=X_r * H_r,
        C=C_r,
        Pi=P_r,
        crossings=crossings,
        clamp_events=clamps,
        aborted=aborted,
        W_sde=Ws_r,
    )
    if clamps:
        log.warning("simulate: %d policy queries beyond x_max used the clamped tail", clamps)
    log.info("simulate: %d paths, %d steps, %d crossings of x0", n, n_steps, int(crossings.sum()))
    return ps


def concat_pathsets(parts) -> PathSet:
    """Join path sets that share a time grid, in the given order."""
    parts = list(parts)

    def cat(name):
        return np.concatenate([getattr(p, name) for p in parts], axis=0)

    w_sde = cat("W_sde") if all(p.W_sde is not None for p in parts) else None
    return PathSet(
        t=parts[0].t,
        X=cat("X"),
        H=cat("H"),
        W=cat("W"),
        C=cat("C"),
        Pi=cat("Pi"),
        crossings=cat("crossings"),
        clamp_events=sum(p.clamp_events for p in parts),
        aborted=cat("aborted"),
        W_sde=w_sde,
    )


def drift_ode_rk4(primal: PrimalSolution, x_init: float, T: float, n_steps: int, policy: PolicyTable | None = None):
    """Classical RK4 on the zero-volatility drift ODE for ``log X`` (test oracle)."""
    m = primal.market
    pol = policy or PolicyTable(primal)

    def f(z):
        x = np.exp(z)
        c, w, _ = pol(np.atleast_1d(x))
        return float(m.r + m.rho + m.mu * w[0] - (1.0 / x + m.rho) * c[0])

    z = np.log(x_init)
    hstep = T / n_steps
    for _ in range(n_steps):
        k1 = f(z)
        k2 = f(z + 0.5 * hstep * k1)
        k3 = f(z + 0.5 * hstep * k2)
        k4 = f(z + hstep * k3)
        z += hstep * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return float(np.exp(z))


@dataclass
class TransversalityReport:
    horizons: list
    mean: list
    stderr: list
    v_init: float
    decreasing: bool
    small_at_end: bool

    def as_dict(self) -> dict:
        return {
            "horizons": self.horizons,
            "mean": self.mean,
            "stderr": self.stderr,
            "v_init": self.v_init,
            "decreasing": self.decreasing,
            "small_at_end": self.small_at_end,
        }


def transversality(primal: PrimalSolution, cfg: SimConfig, horizons=TRANSVERSALITY_HORIZONS) -> TransversalityReport:
    """Sample ``E[exp(-delta T) v(X_T)]`` at each horizon from one set of paths.

    ``decreasing`` allows each successive mean to exceed its predecessor by
    at most three combined standard errors. ``small_at_end`` asks the last
    mean minus three standard errors to fall below ``0.1 |v(x_init)|``.
    """
    horizons = [float(t) for t in horizons]
    run = SimConfig(**{**cfg.__dict__, "T": max(horizons)})
    ps = simulate(primal, run, record_times=horizons)
    delta = primal.market.delta
    means, ses = [], []
    for t in horizons:
        j = int(np.argmin(np.abs(ps.t - t)))
        vals = np.exp(-delta * t) * np.asarray(primal.value(ps.X[~ps.aborted, j]))
        means.append(float(vals.mean()))
        ses.append(float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0)
    dec = all(means[i + 1] < means[i] + 3.0 * np.hypot(ses[i], ses[i + 1]) for i in range(len(means) - 1))
    v0 = float(primal.value(cfg.x_init))
    small = means[-1] - 3.0 * ses[-1] < 0.1 * abs(v0)
    return TransversalityReport(horizons, means, ses, v0, bool(dec), bool(small))
