"""
Cubic B-splines with thinned edge knots
=======================================

The radial functions live on psi in [-1, 1]. Interior knots are denser in the
core and spread out toward the edge, and roughness is measured by the squared
third derivative, so quadratics cost nothing.
"""

import numpy as np

from logadditive.splines import SplineBasis, make_knots

# 20 interior knots with edge thinning 2.5 give 24 basis functions
basis = SplineBasis.clamped()
print("basis functions:", basis.K)

interior = make_knots(20)[4:-4]
gaps = np.diff(interior)
print("outermost / central knot gap: %.2f" % (gaps[0] / gaps[gaps.size // 2]))

# the basis sums to one everywhere
x = np.linspace(-1, 1, 1001)
B = basis.design(x)
print("max |sum_k B_k - 1| = %.1e" % np.max(np.abs(B.sum(axis=1) - 1)))

# penalty: a quadratic is free, x^3 costs int (6)^2 dx = 72
def coefficients(f):
    return np.linalg.lstsq(B, f(x), rcond=None)[0]

S = basis.penalty
for label, f in [("1 + x - x^2", lambda t: 1 + t - t**2), ("x^3", lambda t: t**3)]:
    a = coefficients(f)
    print("penalty of %-12s %.6f" % (label + ":", a @ S @ a))

# three null directions: constants, lines and parabolas
ev = np.linalg.eigvalsh(S)
print("penalty eigenvalues below 1e-9 * max:", int(np.sum(ev < 1e-9 * ev.max())))
