# %% [markdown]
# # Optimal paths
#
# Simulate wealth, habit and consumption under the optimal feedback
# policies. Every path has its own counter-based random stream keyed by
# (seed, path index), so any subset of paths can be regenerated alone and
# parallel runs reproduce serial ones byte for byte.

# %%
import numpy as np

from habitfbp import FAMILIES, MarketParams, PolicyTable, PrimalSolution, SimConfig, simulate, solve, transversality
from habitfbp.runs import simulate_parallel

primal = PrimalSolution(solve(MarketParams(), FAMILIES["power"](alpha=0.75, p=0.2, q=0.5, kappa=2.0)))
table = PolicyTable(primal)

# %%
cfg = SimConfig(x_init=2 * primal.x0, T=20.0, dt=0.01, n_paths=2000, seed=42, record_every=500)
ps = simulate_parallel(primal, cfg, jobs=4, table=table)
for t, q05, q50, q95 in zip(ps.t, *np.quantile(ps.X, [0.05, 0.5, 0.95], axis=0)):
    print("t = %5.1f   X quantiles %.3f / %.3f / %.3f" % (t, q05, q50, q95))
print("share of time in austerity:", float(np.mean(ps.X < primal.x0)))

# %% [markdown]
# Starting deep in austerity, nothing is consumed and the habit decays
# exactly like h exp(-rho t).

# %%
deep = simulate(primal, SimConfig(x_init=primal.x0 / 20, T=0.5, dt=1e-3, n_paths=100, seed=1), policy=table)
print("max |H / e^{-rho t} - 1| =", float(np.max(np.abs(deep.H / np.exp(-primal.market.rho * deep.t) - 1))))

# %% [markdown]
# The discounted value along optimal paths must vanish as the horizon grows.

# %%
tr = transversality(primal, SimConfig(x_init=2 * primal.x0, n_paths=2000, seed=0))
for T, m, se in zip(tr.horizons, tr.mean, tr.stderr):
    print("T = %4.0f   E[exp(-delta T) v(X_T)] = %.4g +/- %.1g" % (T, m, se))
