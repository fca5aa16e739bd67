"""
Risk estimators and what they penalize
======================================

For a linear smoother with hat trace t, the criteria trade the weighted
residual sum of squares against complexity in different ways:

    EASE  = rss - (N - 2t)
    GCV   = N rss / (N - t)^2
    Rice  = rss / (N - 2t)

Rice charges roughly twice as much per effective parameter near saturation,
so it picks smoother fits than GCV. Correlated errors inflate the
complexity through tr[K G].
"""

import numpy as np

from logadditive.design import DesignSystem
from logadditive.pwls import solve
from logadditive.risk import CorrelationModel, autocorr_K, ease_estimate, gcv, rice
from logadditive.splines import SplineBasis

rng = np.random.default_rng(0)
basis = SplineBasis.clamped()
x = np.linspace(-1, 1, 120)
mu = 1 - x**2 + 0.3 * np.sin(5 * x)
y = mu + 0.2 * rng.normal(size=x.size)

system = DesignSystem.from_arrays(basis.design(x), y, np.full(x.size, 25.0),
                                  penalties=[basis.penalty], psi=x)
print("%10s %8s %8s %8s %8s" % ("lambda", "tr[CG]", "EASE", "GCV", "Rice"))
for lam in 10.0 ** np.arange(-8, 1):
    f = solve(system, lam)
    print("%10.0e %8.2f %8.2f %8.3f %8.3f" % (lam, f.trace_CG, ease_estimate(f), gcv(f), rice(f)))

# a correlation of 0.6 between points 0.05 apart in psi
K = autocorr_K(system, CorrelationModel.from_rho(0.6))
f = solve(system, 1e-5, K)
print("\nat lambda 1e-5: tr[CG] = %.2f, tr[KG] = %.2f under AR(1) correlation" % (f.trace_CG, f.trace_KG))
