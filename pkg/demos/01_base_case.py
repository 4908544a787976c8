# %% [markdown]
# # Base case: from utility to feedback policies
#
# The default market (r=2%, mu=10%, sigma=20%, rho=1, delta=0.3) and the
# two-part power utility with reference point alpha=0.75. We build the
# concave envelope, shoot for the free boundary of the dual problem, and
# read off the austerity threshold and the optimal policies.

# %%
import sys
from pathlib import Path

import numpy as np

from habitfbp import FAMILIES, MarketParams, PrimalSolution, concavify, merton, shoot_y0, solve_roots
from habitfbp.report import line_chart

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out") / "base_case"
out.mkdir(parents=True, exist_ok=True)

market = MarketParams()
spec = FAMILIES["power"](alpha=0.75, p=0.2, q=0.5, kappa=2.0)

# %% [markdown]
# The S-shaped utility is convex below alpha. Its concave envelope is linear
# from 0 up to the tangency point c0 and equals U above it.

# %%
env = concavify(spec)
print("c0 = %.12f  phi0 = %.12f  U(0) = %.6f" % (env.c0, env.phi0, env.u_at_zero))

roots = solve_roots(market)
print("roots: lambda = %.12f  lambda' = %.12f  gamma = %.12f" % (roots.lam, roots.lamp, roots.gamma))

# %% [markdown]
# Shooting: bisect on the candidate boundary until the backward trajectory
# survives all the way down to y_min.

# %%
dual = shoot_y0(market, spec, env)
primal = PrimalSolution(dual)
print("y0 = %.15g  (bracket width %.1e)" % (dual.y0, dual.bracket[1] - dual.bracket[0]))
print("austerity threshold x0 = %.12f, grid covers x up to %.3g" % (primal.x0, primal.x_max))

# %% [markdown]
# Below x0 nothing is consumed and a constant fraction is held in the risky
# asset; at x0 consumption jumps to c0.

# %%
xs = np.array([0.5, 1.0, primal.x0, 2.0, 5.0, 10.0])
for x, c, w in zip(xs, primal.policy_c(xs), primal.policy_pi(xs) / xs):
    print("x = %7.4f   c* = %.5f   pi*/x = %.5f" % (x, c, w))

bench = merton(market, 0.2)
print("Merton reference: weight %.4f, consumption rate %.6f" % (bench.weight, bench.gammaM))

# %%
grid = np.geomspace(primal.x0 / 20, 20 * primal.x0, 400)
for name, ys in (("value", primal.value(grid)), ("weight", primal.policy_pi(grid) / grid), ("consumption", primal.policy_c(grid) / grid)):
    line_chart(out / (name + ".svg"), [(name, grid, ys)], title=name, xlabel="x", vlines=[(primal.x0, "x0")], logx=True)
print("charts in", out)
