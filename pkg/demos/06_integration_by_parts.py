"""
Integration by parts: elementary and Bismut
===========================================

The derivative of P^{eps h}_t f in eps equals the IBP-weighted average
E[f(x_t) u_t] with du = h dw.  The left side is assembled by Gauss-Legendre
quadrature over nested grid solves.  The Bismut form moves a spatial
derivative onto the weight u_T = int U^{-1} X dw.
"""
from bismutlab import check_bismut, check_elementary_ibp, check_gradient_transfer

for model, h, f in (("bm", 0.5, "x^2"), ("ou", 1.0, "x")):
    print(check_elementary_ibp(model, h, f, x=1.0, n_paths=100_000, seed=21).summary_line())

for model, f, x in (("ou", "x", 0.0), ("gbm", "x", 1.0), ("poly", "bump", 0.2)):
    print(check_bismut(model, f, x=x, n_paths=100_000, seed=22).summary_line())

print(check_gradient_transfer("poly", "bump", n_paths=100_000, seed=23).summary_line())

# A mismatched pairing must fail: the right side is built from a different model.
print(check_bismut("ou", "x", n_paths=100_000, seed=24, rhs_model="bm").summary_line())
