"""
Forward selection of radial functions
=====================================

Start from the shape function alone and add, one at a time, the covariate
whose free radial function lowers the Rice criterion most. Each candidate
gets its own smoothing-parameter search. The stage table marks the winner
of each stage with a star.
"""

import warnings

from logadditive.simulate import simulate_profiles
from logadditive.selection import forward_select
from logadditive.tables import TABLE_TEMP_UNIT_EV, table3_model

candidates = ["nbar", "qgeo", "Ip", "Vloop", "Bt", "kappa", "li", "a", "R", "Zeff", "time"]

sim = simulate_profiles(table3_model(), seed=1)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    trace = forward_select(sim, candidates, max_stages=5, temp_unit_ev=TABLE_TEMP_UNIT_EV)

print(trace.render())
print("selected:", ", ".join(trace.selected))
print("stopped because:", trace.stop_reason)
