# %% [markdown]
# # Checking a solution
#
# Three independent views of the same problem: residuals of the dual and
# primal equations on fine grids, a finite-difference policy-iteration
# solve of the primal HJB, and a dense fixed-step scan for the free
# boundary.

# %%
from habitfbp import FAMILIES, MarketParams, PrimalSolution, solve
from habitfbp.validate import fd_check, run_suite, scan_check

cases = {
    "power": FAMILIES["power"](alpha=0.75, p=0.2, q=0.5, kappa=2.0),
    "exponential": FAMILIES["exponential"](alpha=0.75, p=1.0, q=1.5, kappa=1.0),
    "sahara": FAMILIES["sahara"](alpha=0.75, gamma1=0.5, beta1=0.1, gamma2=0.5, beta2=0.5),
}

# %%
for name, spec in cases.items():
    primal = PrimalSolution(solve(MarketParams(), spec))
    checks = run_suite(primal) + [fd_check(primal), scan_check(primal)]
    print("== %s  (x0 = %.6f)" % (name, primal.x0))
    for c in checks:
        print("  %-4s %-22s %.3g" % ("ok" if c.passed else "FAIL", c.name, c.measured))

# %% [markdown]
# The residual of the dual system only sees consistency between the closed
# formulas and the integrated ODE. Errors in the stored nodes show up in
# smooth pasting at y0 and in the finite-difference comparison instead.
