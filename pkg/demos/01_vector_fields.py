"""
Vector fields, generators and ellipticity
=========================================

A diffusion is described by a drift field X0 and noise fields X1..Xm, with
generator L = X0 + 1/2 sum Xi^2.  This walk-through builds the catalog
models, applies L to test functions and probes ellipticity.
"""
import numpy as np

from bismutlab import apply_generator, ellipticity_exact, ellipticity_margin, ito_drift, make_model
from bismutlab.catalog import bump, coordinate, square

# The catalog: Brownian motion, Ornstein-Uhlenbeck, geometric BM and a
# cubic-drift polynomial model.
for name in ("bm", "ou", "gbm", "poly"):
    vfs = make_model(name)
    print(f"{vfs.name:28s} dim={vfs.dim} noises={vfs.num_noise}")

# For gbm the Stratonovich correction 1/2 DX1 X1 shows up in the Ito drift.
gbm = make_model("gbm")
print("Ito drift of gbm at x=1:", float(np.ravel(ito_drift(gbm, 1.0))[0]))

# L x^2 = 1 for Brownian motion, L x = -x for OU.
print("L[x^2] for bm at 0.3:", apply_generator(make_model("bm"), square(), 0.3))
print("L[x]   for ou at 0.6:", apply_generator(make_model("ou"), coordinate(), 0.6))
xs = np.linspace(-2, 2, 5)[:, None]
print("L[bump] for poly on a grid:", np.round(apply_generator(make_model("poly"), bump(), xs), 4))

# Ellipticity: smallest eigenvalue of sum Xi Xi^T, estimated over a
# direction net and computed exactly.  The 2-d control model only moves
# along the first axis, so it is degenerate.
deg = make_model("degenerate2d")
print("margin bm:", ellipticity_margin(make_model("bm"), 0.0))
print("margin degenerate2d:", ellipticity_margin(deg, [0.0, 0.0]), ellipticity_exact(deg, [0.0, 0.0]))
