"""
From cumulative bulletins to weekly counts
==========================================

Bulletins report running totals. Differencing gives new cases per week,
and a drop in the running total (a correction) becomes a missing week.
"""

from datetime import date

from wnvdb import pipeline
from wnvdb.pipeline import SliceKey, WeeklySeries
from wnvdb.schema import Host

cumulative = [0, 2, 5, 5, 4, 9, 14]
print(pipeline.difference_cumulative(cumulative))

# the inverse needs the anchors where a correction broke the chain
inc = pipeline.difference_cumulative(cumulative)
assert pipeline.rebuild_cumulative(inc, cumulative) == cumulative

dates = pipeline.weekly_dates(date(2022, 6, 8), len(cumulative))
key = SliceKey(2022, Host.HUMANS, "province", "028")
padova = WeeklySeries.from_cumulative(cumulative, dates, key)
rovigo = WeeklySeries.from_cumulative([0, 0, 1, 1, 3, 3, 4], dates, key.with_geo("province", "029"))

# provinces sum to a regional series on the union of their dates
veneto = pipeline.aggregate([padova, rovigo], "region", "05")
print(veneto.key.label(), veneto.cumulative, veneto.incidence)

# a regional series published separately can be audited against its provinces
print(pipeline.consistency_audit(veneto, [padova, rovigo]))

print(pipeline.format_series_csv([veneto]))
