"""
Shapes of the extended Richards curve
=====================================

The cumulative mean rises from a lower asymptote ``b`` to ``b + r``.
``h`` sets how fast, ``p`` where the inflection sits, ``s`` how lopsided.
"""

import numpy as np

from wnvdb.estimation import final_epidemic_size
from wnvdb.richards import RichardsParams, Variant, expected_incidence, richards_mean

weeks = np.arange(0, 31)

# s below one pulls the peak earlier, above one pushes it later
for s in (0.3, 1.0, 3.0):
    params = RichardsParams(0.0, 100.0, 0.5, 15.0, s)
    inc = np.diff(richards_mean(weeks, params))
    print(f"s={s:<4} peak week {inc.argmax() + 1:2d}  cumulative at week 30: {richards_mean(30, params):6.1f}")

# the plateau is b + r whatever the shape parameters
params = RichardsParams(0.19, 0.2517, 0.8082, 5.4322, 0.0553)
print("final size", round(final_epidemic_size(params), 4))

# weekly means used by the likelihood; week 1 carries the whole of lambda(1)
mu = expected_incidence(10, [2.0, 50.0, 0.8, 5.0, 1.0])
print(np.round(mu, 2), mu.sum())

# with drift the baseline is b * t and the curve never levels off
drift = RichardsParams(0.5, 50.0, 0.8, 5.0, 1.0, Variant.LINEAR_DRIFT)
print(richards_mean(np.array([40.0, 80.0]), drift))
