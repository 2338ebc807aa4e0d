"""
Fitting a season and forecasting the next weeks
================================================

Simulate a Poisson season from known parameters, recover them by maximum
likelihood, then forecast three weeks ahead and check a holdout.
"""

import numpy as np

from wnvdb import estimation as est
from wnvdb.pipeline import WeeklySeries
from wnvdb.richards import expected_incidence

truth = [3.0, 250.0, 0.6, 11.0, 1.0]
y = np.random.default_rng(7).poisson(expected_incidence(22, truth))
series = WeeklySeries.from_incidence(y.tolist())

result = est.fit(series, est.FitConfig(seed=1))
print("converged", result.converged, " R2", round(result.r_squared, 3))
for name, value in result.estimates().items():
    ci = result.ci[name]
    band = "unavailable" if ci is None else f"[{ci[0]:.3g}, {ci[1]:.3g}]"
    print(f"  {name:>2} {value:9.4g}  {band}")

# the negative binomial adds a dispersion k; on Poisson data k runs off towards infinity
nb = est.fit(series, est.FitConfig(family="negbin", seed=1))
print(f"negbin k={nb.dispersion_hat:.3g}  loglik gain {nb.loglik_hat - result.loglik_hat:.2g}")

fc = est.forecast(result, series, 3, seed=1)
for week, point, (lo, hi) in zip(fc.weeks, fc.point, fc.interval):
    print(f"week {week}: {point:.0f} ({lo:.0f}-{hi:.0f})")

# hide the last three weeks, refit, see how many land inside the 95% band
report = est.holdout_check(series, 3, est.FitConfig(seed=1), seed=1)
print(f"holdout: {report.hits}/{report.total} inside")
