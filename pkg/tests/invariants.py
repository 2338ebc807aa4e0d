"""Invariant checks shared by the property tests and the acceptance suite.

Each ``check_*`` takes a ``numpy.random.Generator`` and raises AssertionError
on a violation.
"""
from __future__ import annotations

from datetime import date, timedelta

import numpy as np

from wnvdb import analytics, pipeline
from wnvdb.pipeline import SliceKey, WeeklySeries
from wnvdb.richards import LikelihoodFamily, RichardsParams, loglik_counts
from wnvdb.schema import GeoUnit, Host, SurveillanceRecord

START = date(2022, 6, 6)


def random_cumulative(rng: np.random.Generator, n: int | None = None, monotone: bool = False) -> list[int]:
    n = int(rng.integers(1, 40)) if n is None else n
    steps = rng.integers(0, 30, size=n)
    if not monotone:
        # occasional downward revisions
        steps = np.where(rng.random(n) < 0.15, -rng.integers(0, 10, size=n), steps)
    return np.maximum(np.cumsum(steps), 0).astype(int).tolist()


def check_round_trip(rng):
    c = random_cumulative(rng)
    assert pipeline.rebuild_cumulative(pipeline.difference_cumulative(c), c) == c


def check_masking(rng):
    c = random_cumulative(rng)
    y = pipeline.difference_cumulative(c)
    prev = [0] + c[:-1]
    for t, (a, b) in enumerate(zip(prev, c)):
        assert (y[t] is None) == (b < a)
        if y[t] is not None:
            assert y[t] == b - a


def check_telescoping(rng):
    c = random_cumulative(rng, monotone=True)
    y = pipeline.difference_cumulative(c)
    assert None not in y
    assert sum(y) == c[-1]


def _random_series(rng, key, grid):
    keep = sorted(rng.choice(len(grid), size=int(rng.integers(1, len(grid) + 1)), replace=False))
    c = random_cumulative(rng, n=len(keep))
    return WeeklySeries.from_cumulative(c, [grid[i] for i in keep], key)


def check_aggregation(rng):
    grid = [START + timedelta(weeks=i) for i in range(int(rng.integers(1, 25)))]
    key = SliceKey(2022, Host.HUMANS, "province", "028")
    members = [_random_series(rng, key.with_geo("province", f"{i:03d}"), grid)
               for i in range(int(rng.integers(1, 6)))]
    agg = pipeline.aggregate(members, "region", "05")
    union = sorted(set().union(*(m.dates for m in members)))
    assert list(agg.dates) == union
    summed = np.zeros(len(union), int)
    for m in members:
        lookup, level = dict(zip(m.dates, m.cumulative)), 0
        for i, d in enumerate(union):
            level = lookup.get(d, level)
            summed[i] += level
    assert list(agg.cumulative) == summed.tolist()
    assert list(agg.incidence) == pipeline.difference_cumulative(summed.tolist())
    # order of members is irrelevant
    perm = [members[i] for i in rng.permutation(len(members))]
    assert pipeline.aggregate(perm, "region", "05") == agg


def check_na_likelihood(rng):
    params = RichardsParams(float(rng.uniform(0, 5)), float(rng.uniform(1, 500)), float(rng.uniform(0.05, 2)),
                            float(rng.uniform(-5, 25)), float(rng.uniform(0.1, 5)))
    n = int(rng.integers(6, 30))
    y = rng.poisson(5.0, size=n).astype(float)
    family = LikelihoodFamily.poisson() if rng.random() < 0.5 else LikelihoodFamily.negbin(float(rng.uniform(0.5, 50)))
    i = int(rng.integers(0, n))
    masked = y.copy()
    masked[i] = np.nan
    single = np.full(n, np.nan)
    single[i] = y[i]
    full = loglik_counts(y, params.as_array(), family)
    assert abs(loglik_counts(masked, params.as_array(), family) + loglik_counts(single, params.as_array(), family)
               - full) <= 1e-9 * max(1.0, abs(full))


REGIONS = [("05", "Veneto"), ("08", "Emilia-Romagna"), ("03", "Lombardia"), ("01", "Piemonte")]


def random_records(rng, n: int | None = None) -> list[SurveillanceRecord]:
    n = int(rng.integers(0, 60)) if n is None else n
    out = []
    for _ in range(n):
        code, name = REGIONS[int(rng.integers(0, len(REGIONS)))]
        year = int(rng.integers(2012, 2023))
        new = None if rng.random() < 0.1 else int(rng.integers(0, 20))
        out.append(SurveillanceRecord("u", date(year, 8, 1), Host(int(rng.integers(0, 5))), 100, new,
                                      GeoUnit(code, name), season=year))
    return out


def check_share_normalisation(rng):
    records = random_records(rng)
    reports = [
        analytics.yearly_totals(records, Host.HUMANS),
        analytics.regional_breakdown(records, Host(int(rng.integers(0, 5)))),
        analytics.host_region_composition(records, Host.MOSQUITOES),
        analytics.host_region_composition(records, Host.EQUIDS, pooled=True),
    ]
    for rep in reports:
        groups: dict[tuple, float] = {}
        counts: dict[tuple, int] = {}
        for row in rep.rows:
            assert row.count >= 0
            groups[row.key[:-1]] = groups.get(row.key[:-1], 0.0) + row.share
            counts[row.key[:-1]] = counts.get(row.key[:-1], 0) + row.count
        for g, total in groups.items():
            if counts[g] > 0:
                assert abs(total - 1.0) <= 1e-9


def check_determinism(rng):
    records = random_records(rng, int(rng.integers(1, 60)))
    n, seed = int(rng.integers(0, len(records) + 1)), int(rng.integers(0, 2**31))
    assert pipeline.qa_sample(records, n, seed) == pipeline.qa_sample(records, n, seed)
    a = analytics.format_report_csv(analytics.regional_breakdown(records, Host.HUMANS))
    b = analytics.format_report_csv(analytics.regional_breakdown(list(records), Host.HUMANS))
    assert a == b
    series = pipeline.build_series(records, "region")
    assert pipeline.format_series_csv(series) == pipeline.format_series_csv(pipeline.build_series(records, "region"))


SUITES = {
    "differencing/rebuild round-trip": check_round_trip,
    "NA-masking exactness": check_masking,
    "likelihood NA masking": check_na_likelihood,
    "aggregation commutation": check_aggregation,
    "telescoping sum": check_telescoping,
    "share normalisation": check_share_normalisation,
    "determinism": check_determinism,
}


def run_suite(check, n: int, seed: int) -> int:
    """Run ``check`` on ``n`` independent instances; returns the number of failures."""
    failures = 0
    for i in range(n):
        try:
            check(np.random.default_rng([seed, i]))
        except AssertionError:
            failures += 1
    return failures

