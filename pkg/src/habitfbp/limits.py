"""Limiting-case experiments: the model against simpler known models.

Each function solves a short sequence of parameter sets approaching a limit
and reports sup-gaps of the policy curves, both against closed forms (Merton)
and between successive members of the sequence (self-convergence). Reports
are plain dicts of floats and lists, so they serialize byte-identically.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .dual import MarketParams, SolverControls, shoot_y0
from .primal import PrimalSolution, merton
from .utility import FAMILIES, concavify

log = logging.getLogger(__name__)

# parameter sets of the limit experiments
SONG_MARKET = dict(r=0.01, mu=0.04, sigma=0.2, delta=0.07)
SONG_UTILITY = dict(alpha=1.0, p=0.68, q=0.68, kappa=2.25)
ROGERS_MARKET = dict(r=0.05, mu=0.09, sigma=0.35, delta=0.02, rho=1.0)
ROGERS_UTILITY = dict(p=-1.0, q=0.5, kappa=2.0)


@dataclass(frozen=True)
class Case:
    """A picklable solve request: market fields, utility family and parameters."""

    market: dict
    family: str
    params: dict
    x_cover: float = 0.0  # deepen y_min until x_max exceeds this


def solve_case(case: Case) -> PrimalSolution:
    """Solve one case, lowering ``y_min`` until the grid covers ``x_cover``.

    Families with a very large ``phi0`` (tiny reference point with a
    negative power exponent) need ``y`` far below ``1e-8 phi0`` before the
    wealth range of interest is reached.
    """
    market = MarketParams(**case.market)
    spec = FAMILIES[case.family](**case.params)
    env = concavify(spec)
    factor = SolverControls().y_min_factor
    while True:
        primal = PrimalSolution(shoot_y0(market, spec, env, SolverControls(y_min_factor=factor)))
        if primal.x_max >= case.x_cover or factor < 1e-30:
            return primal
        factor *= 1e-3
        log.info("x_max=%.3g below %.3g; retrying with y_min factor %.0e", primal.x_max, case.x_cover, factor)


def _solve_all(cases, jobs: int = 1):
    if jobs > 1 and len(cases) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(solve_case, cases))
    return [solve_case(c) for c in cases]


def _curves(primal: PrimalSolution, xs: np.ndarray) -> dict:
    return {"x": xs, "weight": primal.policy_pi(xs) / xs, "cw": primal.policy_c(xs) / xs, "v": primal.value(xs)}


def _strictly_decreasing(vals) -> bool:
    return all(b < a for a, b in zip(vals, vals[1:]))


def _tolist(curves: dict) -> dict:
    return {k: np.asarray(v, dtype=float).tolist() for k, v in curves.items()}


def merton_limit(
    market: MarketParams = MarketParams(),
    p: float = 0.2,
    alphas=(0.1, 0.01, 1e-3),
    rhos=(0.1, 0.01, 1e-3),
    q: float = 0.5,
    kappa: float = 2.0,
    window=(0.5, 5.0),
    n: int = 200,
    jobs: int = 1,
) -> dict:
    """Relative sup-gaps of ``pi*/x`` and ``c*/x`` to the Merton constants as ``alpha, rho -> 0``.

    Only ``x > 2 x0`` inside ``window`` counts.
    """
    base = asdict(market)
    cases = [
        Case({**base, "rho": rho}, "power", dict(alpha=a, p=p, q=q, kappa=kappa))
        for a, rho in zip(alphas, rhos)
    ]
    bench = merton(MarketParams(**{**base, "rho": rhos[-1]}), p)
    rows = []
    curves = []
    for (a, rho), primal in zip(zip(alphas, rhos), _solve_all(cases, jobs)):
        xs = np.linspace(window[0], window[1], n)
        xs = xs[xs > 2.0 * primal.x0]
        cv = _curves(primal, xs)
        rows.append(
            {
                "alpha": a,
                "rho": rho,
                "x0": primal.x0,
                "weight_gap": float(np.max(np.abs(cv["weight"] - bench.weight)) / bench.weight),
                "cw_gap": float(np.max(np.abs(cv["cw"] - bench.gammaM)) / bench.gammaM),
            }
        )
        curves.append({"alpha": a, "rho": rho, **_tolist(cv)})
    return {
        "case": "merton",
        "merton_weight": bench.weight,
        "merton_gamma": bench.gammaM,
        "runs": rows,
        "weight_gap_decreasing": _strictly_decreasing([r["weight_gap"] for r in rows]),
        "cw_gap_decreasing": _strictly_decreasing([r["cw_gap"] for r in rows]),
        "curves": curves,
    }


def _successive_gaps(curves, key):
    return [float(np.max(np.abs(a[key] - b[key]))) for a, b in zip(curves, curves[1:])]


def fixed_reference_limit(rhos=(1e-2, 1e-4, 1e-5), x_probe: float = 10.0, n: int = 200, jobs: int = 1) -> dict:
    """Self-convergence of the policies as ``rho -> 0`` (habit frozen at its initial level).

    Curves are compared on ``[2 x0, 10 x0]`` with ``x0`` the largest
    threshold of the sequence. The limit at ``x_probe`` is estimated by
    linear extrapolation in ``rho`` from the two smallest values.
    """
    cases = [Case({**SONG_MARKET, "rho": rho}, "power", dict(SONG_UTILITY)) for rho in rhos]
    prims = _solve_all(cases, jobs)
    x0_max = max(pr.x0 for pr in prims)
    xs = np.geomspace(2.0 * x0_max, 10.0 * x0_max, n)
    curves = [_curves(pr, xs) for pr in prims]
    wg = _successive_gaps(curves, "weight")
    cg = _successive_gaps(curves, "cw")
    probe = [float(pr.policy_pi(x_probe) / x_probe) for pr in prims]
    r2, r3 = rhos[-2], rhos[-1]
    limit = probe[-1] + (probe[-1] - probe[-2]) * r3 / (r2 - r3)
    return {
        "case": "fixed_reference",
        "rhos": list(rhos),
        "x0": [pr.x0 for pr in prims],
        "weight_gaps": wg,
        "cw_gaps": cg,
        "converging": bool(wg[-1] < wg[0] and cg[-1] < cg[0]),
        "x_probe": x_probe,
        "weight_at_probe": probe,
        "weight_limit_estimate": float(limit),
        "curves": [{"rho": rho, **_tolist(cv)} for rho, cv in zip(rhos, curves)],
    }


def rogers_limit(alphas=(0.1, 0.01, 1e-4), window=(0.05, 10.0), n: int = 200, jobs: int = 1) -> dict:
    """Vanishing loss aversion with ``U+(c) = 1/alpha - 1/c``.

    For this exponent the nonlinear dual branch does not depend on
    ``alpha``; only the free boundary moves. Gaps between successive curves
    on ``window`` therefore shrink as the thresholds drop below the window.
    """
    cases = [
        Case(dict(ROGERS_MARKET), "shifted_power", dict(alpha=a, **ROGERS_UTILITY), x_cover=10.0 * window[1])
        for a in alphas
    ]
    prims = _solve_all(cases, jobs)
    xs = np.geomspace(window[0], window[1], n)
    curves = [_curves(pr, xs) for pr in prims]
    wg = _successive_gaps(curves, "weight")
    cg = _successive_gaps(curves, "cw")
    x0s = [pr.x0 for pr in prims]
    bench = merton(MarketParams(**ROGERS_MARKET), ROGERS_UTILITY["p"])
    return {
        "case": "rogers",
        "alphas": list(alphas),
        "x0": x0s,
        "x0_decreasing": _strictly_decreasing(x0s),
        "weight_gaps": wg,
        "cw_gaps": cg,
        "converging": bool(wg[-1] <= wg[0] and cg[-1] <= cg[0]),
        "merton_weight": bench.weight,
        "merton_gamma": bench.gammaM,
        "curves": [{"alpha": a, **_tolist(cv)} for a, cv in zip(alphas, curves)],
    }


def no_bankruptcy_bound(market: MarketParams, alpha: float) -> float:
    """``alpha / (r + rho (1 - alpha))``."""
    return alpha / (market.r + market.rho * (1.0 - alpha))


def aby22_limit(
    pairs=((15.0, 0.35), (100.0, 0.1), (1000.0, 0.03)),
    power_kappas=(15.0, 100.0, 1000.0),
    market: MarketParams = MarketParams(),
    alpha: float = 0.75,
    n: int = 401,
    jobs: int = 1,
) -> dict:
    """Extreme loss aversion approaching the constraint ``C >= alpha H``.

    Two sequences are solved: the three-piece approximating utility for
    ``(kappa, epsilon)`` pairs, and the default power family with growing
    ``kappa``. For both the minimum risky weight in a 5% window around the
    no-bankruptcy bound is reported; it should fall toward zero.
    """
    base = asdict(market)
    xl = no_bankruptcy_bound(market, alpha)
    cases = [Case(base, "aby22", dict(alpha=alpha, kappa=k, epsilon=e)) for k, e in pairs]
    cases += [Case(base, "power", dict(alpha=alpha, p=0.2, q=0.5, kappa=k)) for k in power_kappas]
    prims = _solve_all(cases, jobs)
    near = np.linspace(0.95 * xl, 1.05 * xl, n)
    above = np.geomspace(xl, 4.0 * xl, 200)

    def summarize(sub):
        mins = []
        for pr in sub:
            w = pr.policy_pi(near) / near
            mins.append({"min_weight": float(w.min()), "at": float(near[int(w.argmin())]), "x0": pr.x0})
        cv = [_curves(pr, above) for pr in sub]
        return mins, _successive_gaps(cv, "weight"), cv

    k = len(pairs)
    a_min, a_gaps, a_cv = summarize(prims[:k])
    p_min, p_gaps, p_cv = summarize(prims[k:])
    return {
        "case": "aby22",
        "x_bound": xl,
        "pairs": [list(pq) for pq in pairs],
        "approx": a_min,
        "approx_weight_gaps": a_gaps,
        "approx_min_decreasing": _strictly_decreasing([m["min_weight"] for m in a_min]),
        "power_kappas": list(power_kappas),
        "power": p_min,
        "power_weight_gaps": p_gaps,
        "power_min_decreasing": _strictly_decreasing([m["min_weight"] for m in p_min]),
        "curves": [{"kappa": pq[0], "epsilon": pq[1], **_tolist(cv)} for pq, cv in zip(pairs, a_cv)]
        + [{"kappa": kk, "epsilon": None, **_tolist(cv)} for kk, cv in zip(power_kappas, p_cv)],
    }


CASES = {
    "merton": merton_limit,
    "fixed_reference": fixed_reference_limit,
    "rogers": rogers_limit,
    "aby22": aby22_limit,
}
