# %% [markdown]
# # Sensitivity of the austerity threshold
#
# How x0 and the policies move with loss aversion kappa and with habit
# persistence rho. Each solve is independent, so the sweep runs in a
# process pool; results do not depend on the number of workers.

# %%
import sys
from pathlib import Path

from habitfbp import config, runs

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
cfg = config.normalize({})

# %%
kappa = runs.run_sweep(cfg, "kappa", [1.0, 2.0, 5.0, 20.0], out / "sweep_kappa", jobs=4)
for r in kappa["runs"]:
    print("kappa = %5.1f   c0 = %.5f   x0 = %.5f" % (r["value"], r["c0"], r["x0"]))

# %% [markdown]
# More loss aversion pushes c0 down toward alpha, and the austerity
# threshold falls with it. In rho the threshold is not monotone: it rises
# from rho = 0.25 to rho = 1 and drops again at rho = 2.

# %%
rho = runs.run_sweep(cfg, "rho", [0.25, 0.5, 1.0, 2.0], out / "sweep_rho", jobs=4)
for r in rho["runs"]:
    print("rho = %4.2f   lambda = %.5f   x0 = %.5f" % (r["value"], r["lambda"], r["x0"]))
print("overlaid charts in", out / "sweep_kappa", "and", out / "sweep_rho")
