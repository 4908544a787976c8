# %% [markdown]
# # Limiting cases
#
# The model nests simpler ones. As alpha and rho go to zero the policies
# approach Merton's constants; with extreme loss aversion the risky weight
# collapses near the no-bankruptcy level alpha / (r + rho (1 - alpha)).

# %%
from habitfbp.limits import aby22_limit, merton_limit, rogers_limit

m = merton_limit(jobs=3)
print("Merton weight %.4f, consumption rate %.6f" % (m["merton_weight"], m["merton_gamma"]))
for r in m["runs"]:
    print("alpha = rho = %.0e   weight gap %.2f%%   consumption gap %.2f%%" % (r["alpha"], 100 * r["weight_gap"], 100 * r["cw_gap"]))

# %% [markdown]
# The gap shrinks with alpha but is still about 2% at alpha = 1e-3, mostly at
# the low end of the wealth window.

# %%
a = aby22_limit(jobs=4)
print("no-bankruptcy level x = %.4f" % a["x_bound"])
for k, row in zip(a["power_kappas"], a["power"]):
    print("power utility, kappa = %6.0f   min weight %.4f at x = %.4f" % (k, row["min_weight"], row["at"]))
for (k, eps), row in zip(a["pairs"], a["approx"]):
    print("constrained approximation, kappa = %6.0f eps = %.2f   min weight %.4f" % (k, eps, row["min_weight"]))

# %%
r = rogers_limit(jobs=3)
print("multiplicative-habit limit: x0 =", ", ".join("%.3g" % v for v in r["x0"]), " converging:", r["converging"])
