"""Independent dense-scan classifier for the free boundary.

Used only to cross-check :func:`habitfbp.dual.shoot_y0`. It shares nothing
with the shooting code path beyond the utility's inverse marginal: the
candidates are integrated together with a fixed-step classical RK4 in
``log y`` on numpy arrays, and the exit pattern is read off the whole scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dual import MarketParams, solve_roots
from .utility import Envelope, UtilitySpec

ONE, ZERO, SURVIVED = 1, 0, 2


@dataclass(frozen=True)
class ScanResult:
    """Bracket ``[lo, hi]`` around the switch point plus the raw scan levels."""

    lo: float
    hi: float
    levels: tuple
    monotone: bool

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)


def classify_many(
    ybars: np.ndarray,
    market: MarketParams,
    spec: UtilitySpec,
    env: Envelope,
    ds: float = 2e-3,
    y_min_factor: float = 1e-8,
) -> np.ndarray:
    """Exit class of every candidate: 1 through ``psi = 1``, 0 through ``psi = 0``, 2 survived."""
    m = market
    roots = solve_roots(m)
    k = 2.0 * m.rho * m.sigma**2 / m.mu**2
    c1 = (m.r - m.delta) / m.rho + 1.0 - spec.alpha
    c2 = (m.r + m.rho) / m.rho
    c3 = m.delta / m.rho
    inv = spec.gain_inv_marginal

    # literal transcription of the y-form system, multiplied by y
    def f(s, phi, psi):
        y = np.exp(s)
        dphi = phi * (1.0 - psi)
        dpsi = -k * ((1.0 - psi) * (psi / k - inv(phi) + c1) - c2 * y / phi + c3)
        return dphi, dpsi

    ybars = np.asarray(ybars, dtype=float)
    s = np.log(ybars)
    phi = np.full_like(ybars, env.phi0)
    psi = (roots.lam - 1.0) * (ybars - env.phi0) / env.phi0
    out = np.full(ybars.shape, SURVIVED)
    active = np.ones(ybars.shape, dtype=bool)
    s_end = np.log(y_min_factor * env.phi0)
    h = -ds
    with np.errstate(all="ignore"):
        while active.any():
            idx = np.nonzero(active)[0]
            sa, pa, qa = s[idx], phi[idx], psi[idx]
            k1 = f(sa, pa, qa)
            k2 = f(sa + h / 2, pa + h / 2 * k1[0], qa + h / 2 * k1[1])
            k3 = f(sa + h / 2, pa + h / 2 * k2[0], qa + h / 2 * k2[1])
            k4 = f(sa + h, pa + h * k3[0], qa + h * k3[1])
            pn = pa + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            qn = qa + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            sn = sa + h
            phi[idx], psi[idx], s[idx] = pn, qn, sn
            # a non-finite state can only come from leaving the domain; attribute it to the nearer face
            bad = ~np.isfinite(qn) | ~np.isfinite(pn)
            one = (qn >= 1.0) | (bad & (qa > 0.5))
            zero = ((qn <= 0.0) | (bad & (qa <= 0.5))) & ~one
            out[idx[one]] = ONE
            out[idx[zero]] = ZERO
            done = one | zero | (sn <= s_end)
            active[idx[done]] = False
    return out


def _is_monotone(cls: np.ndarray) -> bool:
    """Pattern ``1...1 (2...2) 0...0`` along increasing ybar."""
    rank = np.where(cls == ONE, 0, np.where(cls == SURVIVED, 1, 2))
    return bool(np.all(np.diff(rank) >= 0))


def scan_y0(
    market: MarketParams,
    spec: UtilitySpec,
    env: Envelope,
    n: int = 2000,
    levels: int = 2,
    ds: float = 2e-3,
    y_min_factor: float = 1e-8,
) -> ScanResult:
    """Bracket the free boundary by classifying ``n`` candidates per level.

    Level one covers the open interval ``(gamma phi0, phi0)``; each further
    level rescans the bracketing cell of the previous one.
    """
    roots = solve_roots(market)
    lo, hi = roots.gamma * env.phi0, env.phi0
    recorded = []
    monotone = True
    for _ in range(levels):
        grid = np.linspace(lo, hi, n + 2)[1:-1]
        cls = classify_many(grid, market, spec, env, ds=ds, y_min_factor=y_min_factor)
        recorded.append((grid, cls))
        monotone &= _is_monotone(cls)
        ones = np.nonzero(cls == ONE)[0]
        zeros = np.nonzero(cls == ZERO)[0]
        new_lo = grid[ones[-1]] if ones.size else lo
        new_hi = grid[zeros[0]] if zeros.size else hi
        if new_hi <= new_lo:
            monotone = False
            break
        lo, hi = new_lo, new_hi
    return ScanResult(lo=float(lo), hi=float(hi), levels=tuple(recorded), monotone=monotone)
