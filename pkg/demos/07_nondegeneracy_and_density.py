"""
Nondegeneracy and transition densities
======================================

Inverse moments of the Malliavin matrix are probed through doubling
stability and small-ball decay of |M xi| over a direction net.  For the
Gaussian class the Malliavin weight gives the density directly.
"""
import numpy as np

from bismutlab import check_density, check_nondegeneracy, density_estimate, make_model, small_ball
from bismutlab.catalog import gaussian_marginal

print(check_nondegeneracy("ou", n_paths=20_000, seed=31).summary_line())
print(check_nondegeneracy("gbm", x=1.0, n_paths=100_000, seed=32, form="flow").summary_line())
print(check_nondegeneracy("degenerate2d", x=[0.0, 0.0], n_paths=2000, seed=33).summary_line())

sb = small_ball(make_model("gbm"), [1.0], np.logspace(-2, 0, 7), 1.0, 1.0, 100_000, seed=34, form="flow")
for e, p in zip(sb.epsilons, sb.probabilities):
    print(f"  P(|U V| < {e:.3f}) = {p:.2e}")
print(f"  fitted slope {sb.slope:.2f}")

ou = make_model("ou")
m, v = gaussian_marginal(ou, 0.0, 1.0)
y = np.array([-1.0, 0.0, 1.0])
w = density_estimate(ou, 0.0, 1.0, y, "MALLIAVIN_WEIGHT", 200_000, seed=35)
exact = np.exp(-0.5 * (y - m) ** 2 / v) / np.sqrt(2 * np.pi * v)
print("weight density", np.round(w.values, 4), "exact", np.round(exact, 4))
print(check_density("bm", n_paths=200_000, seed=36).summary_line())
