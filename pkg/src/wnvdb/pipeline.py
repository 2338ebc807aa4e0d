"""Cumulative-to-incidence pre-processing, geographic aggregation and QA sampling."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, replace
from datetime import date, timedelta
from typing import Iterable, Sequence

import numpy as np

from .errors import InconsistentAnchor, MixedSlices, SampleTooLarge
from .geo import is_not_indicated
from .schema import Host, SurveillanceRecord

LEVELS = ("national", "region", "province")
STRATA = ("age", "infection_type", "species")


def difference_cumulative(cumulative: Sequence[int]) -> list[int | None]:
    """First differences with ``Y_0 = 0``; decreases become NA (``None``)."""
    out: list[int | None] = []
    previous = 0
    for value in cumulative:
        value = int(value)
        if value < 0:
            raise ValueError(f"cumulative counts must be non-negative, got {value}")
        step = value - previous
        out.append(step if step >= 0 else None)
        previous = value
    return out


def rebuild_cumulative(incidence: Sequence[int | None], anchor: Sequence[int | None]) -> list[int]:
    """Invert :func:`difference_cumulative`.

    Non-NA increments are accumulated; the anchor supplies the level at NA
    weeks and must agree with the accumulated level wherever it is given.
    """
    if len(anchor) != len(incidence):
        raise InconsistentAnchor(f"anchor has {len(anchor)} weeks, incidence has {len(incidence)}")
    out = []
    level = 0
    for t, (step, fixed) in enumerate(zip(incidence, anchor)):
        if step is None:
            if fixed is None:
                raise InconsistentAnchor(f"no anchor value at NA week {t}")
            level = int(fixed)
        else:
            level += int(step)
            if fixed is not None and int(fixed) != level:
                raise InconsistentAnchor(f"week {t}: increments give {level}, anchor says {fixed}")
        out.append(level)
    return out


@dataclass(frozen=True)
class SliceKey:
    year: int | None
    host: Host | None
    level: str
    geo_id: str
    stratum: str | None = None

    def with_geo(self, level: str, geo_id: str, stratum: str | None = None) -> "SliceKey":
        return replace(self, level=level, geo_id=geo_id, stratum=stratum)

    def label(self) -> str:
        host = self.host.label if self.host is not None else "-"
        parts = [str(self.year), host, self.level, self.geo_id]
        if self.stratum:
            parts.append(self.stratum)
        return "/".join(parts)


@dataclass(frozen=True)
class WeeklySeries:
    """Weekly cumulative and incident counts for one slice.

    ``incidence[t]`` equals ``cumulative[t] - cumulative[t-1]`` wherever it
    is not NA, with ``cumulative[-1] = 0``.
    """

    key: SliceKey
    dates: tuple[date, ...]
    cumulative: tuple[int, ...]
    incidence: tuple[int | None, ...]

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "cumulative", tuple(int(c) for c in self.cumulative))
        object.__setattr__(self, "incidence", tuple(None if y is None else int(y) for y in self.incidence))
        n = len(self.dates)
        if not (len(self.cumulative) == len(self.incidence) == n):
            raise ValueError("dates, cumulative and incidence must have equal length")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")
        if any(c < 0 for c in self.cumulative):
            raise ValueError("cumulative counts must be non-negative")
        previous = 0
        for t, (c, y) in enumerate(zip(self.cumulative, self.incidence)):
            if y is not None and (y < 0 or y != c - previous):
                raise ValueError(f"week {t}: incidence {y} inconsistent with cumulative {previous} -> {c}")
            previous = c

    @property
    def T(self) -> int:
        return len(self.dates)

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def gaps(self) -> tuple[int, ...]:
        """Positions whose step from the previous date is not exactly one week."""
        return tuple(t for t in range(1, self.T) if (self.dates[t] - self.dates[t - 1]).days != 7)

    def incidence_array(self) -> np.ndarray:
        return np.array([np.nan if y is None else y for y in self.incidence], dtype=float)

    def truncate(self, n_weeks: int) -> "WeeklySeries":
        return WeeklySeries(self.key, self.dates[:n_weeks], self.cumulative[:n_weeks], self.incidence[:n_weeks])

    @classmethod
    def from_cumulative(cls, cumulative: Sequence[int], dates: Sequence[date] | None = None,
                        key: SliceKey | None = None, start: date = date(2018, 6, 4)) -> "WeeklySeries":
        dates = tuple(dates) if dates is not None else weekly_dates(start, len(cumulative))
        key = key or SliceKey(dates[0].year if dates else None, None, "custom", "-")
        return cls(key, dates, tuple(cumulative), tuple(difference_cumulative(cumulative)))

    @classmethod
    def from_incidence(cls, incidence: Sequence[int | None], dates: Sequence[date] | None = None,
                       key: SliceKey | None = None, start: date = date(2018, 6, 4)) -> "WeeklySeries":
        """Build a series from weekly counts; NA weeks leave the cumulative unchanged."""
        cumulative = []
        level = 0
        for y in incidence:
            level += 0 if y is None else int(y)
            cumulative.append(level)
        dates = tuple(dates) if dates is not None else weekly_dates(start, len(incidence))
        key = key or SliceKey(dates[0].year if dates else None, None, "custom", "-")
        return cls(key, dates, tuple(cumulative), tuple(incidence))


def weekly_dates(start: date, n: int) -> tuple[date, ...]:
    return tuple(start + timedelta(weeks=i) for i in range(n))


def _on_grid(series: WeeklySeries, grid: Sequence[date]) -> list[int]:
    """Cumulative on ``grid``: zero before the first date, carried forward across gaps."""
    lookup = dict(zip(series.dates, series.cumulative))
    out, level = [], 0
    for d in grid:
        level = lookup.get(d, level)
        out.append(level)
    return out


def aggregate(series: Sequence[WeeklySeries], target_level: str, geo_id: str | None = None, *,
              collapse_strata: bool = False) -> WeeklySeries:
    """Sum member cumulatives on the union date grid and re-derive incidence."""
    if not series:
        raise ValueError("nothing to aggregate")
    if target_level not in LEVELS:
        raise ValueError(f"target level must be one of {LEVELS}")
    first = series[0].key
    for s in series[1:]:
        if (s.key.year, s.key.host) != (first.year, first.host):
            raise MixedSlices(f"cannot aggregate {s.key.label()} with {first.label()}")
        if not collapse_strata and s.key.stratum != first.stratum:
            raise MixedSlices(f"stratum {s.key.stratum!r} differs from {first.stratum!r}")
    grid = sorted(set().union(*(s.dates for s in series)))
    total = np.zeros(len(grid), dtype=np.int64)
    for s in series:
        total += np.asarray(_on_grid(s, grid), dtype=np.int64)
    if geo_id is None:
        geo_id = "IT" if target_level == "national" else first.geo_id
    key = first.with_geo(target_level, geo_id, None if collapse_strata else first.stratum)
    return WeeklySeries.from_cumulative(total.tolist(), grid, key)


def qa_sample(records: Sequence[SurveillanceRecord], n: int, seed: int) -> list[SurveillanceRecord]:
    """Draw ``n`` distinct records uniformly without replacement for manual checking."""
    if n < 0:
        raise ValueError("sample size must be non-negative")
    if n > len(records):
        raise SampleTooLarge(f"requested {n} records from {len(records)}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(records), size=n, replace=False)
    return [records[i] for i in picks]


def _geo_id(record: SurveillanceRecord, level: str) -> str:
    if level == "national" or record.geo is None:
        return "IT"
    if level == "region":
        return record.geo.region_code
    geo = record.geo
    if geo.province_code is None or is_not_indicated(geo.province_name):
        return f"{geo.region_code}-NI"
    return geo.province_code


def _stratum(record: SurveillanceRecord, by: str | None) -> str | None:
    if by is None:
        return None
    value = getattr(record, by)
    if value is None:
        return "NA"
    return getattr(value, "value", value)


def _stream_key(record: SurveillanceRecord) -> tuple:
    geo = record.geo
    geo_part = () if geo is None else (geo.region_code, geo.province_code, geo.province_name)
    return geo_part + (record.age, record.infection_type, record.species)


def build_series(records: Iterable[SurveillanceRecord], level: str = "region", *,
                 by: str | None = None) -> list[WeeklySeries]:
    """Turn raw rows from one table family into weekly series per slice.

    Every row stream (one geography and stratum combination) is placed on the
    season's bulletin-date grid, then streams are summed to ``level``.
    Incidence is always re-derived from ``casi_totali``.
    """
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    if by is not None and by not in STRATA:
        raise ValueError(f"stratum must be one of {STRATA}")
    seasons: dict[tuple, list[SurveillanceRecord]] = defaultdict(list)
    for r in records:
        seasons[(r.season, r.host)].append(r)

    out = []
    for (season, host), rows in sorted(seasons.items(), key=lambda kv: (kv[0][0], int(kv[0][1]))):
        grid = sorted({r.week_date for r in rows})
        streams: dict[tuple, dict[date, int]] = defaultdict(dict)
        targets: dict[tuple, tuple[str, str | None]] = {}
        for r in rows:
            sk = _stream_key(r)
            # duplicated rows for the same stream and week: keep the largest report
            streams[sk][r.week_date] = max(streams[sk].get(r.week_date, 0), r.total_cases)
            targets[sk] = (_geo_id(r, level), _stratum(r, by))
        grouped: dict[tuple[str, str | None], list[WeeklySeries]] = defaultdict(list)
        for sk, values in streams.items():
            dates = sorted(values)
            geo_id, stratum = targets[sk]
            key = SliceKey(season, host, level, geo_id, stratum)
            grouped[(geo_id, stratum)].append(
                WeeklySeries.from_cumulative([values[d] for d in dates], dates, key))
        for (geo_id, stratum), members in sorted(grouped.items(), key=lambda kv: (kv[0][0], kv[0][1] or "")):
            agg = aggregate(members, level, geo_id)
            cum = _on_grid(agg, grid)
            out.append(WeeklySeries.from_cumulative(cum, grid, agg.key))
    return out


@dataclass(frozen=True)
class Discrepancy:
    week: date
    region_cumulative: int
    province_cumulative: int


def consistency_audit(region: WeeklySeries, provinces: Sequence[WeeklySeries]) -> list[Discrepancy]:
    """Compare a region series with the sum of its province series, week by week."""
    summed = aggregate(provinces, "region", region.key.geo_id, collapse_strata=True)
    grid = sorted(set(region.dates) | set(summed.dates))
    a, b = _on_grid(region, grid), _on_grid(summed, grid)
    return [Discrepancy(d, x, y) for d, x, y in zip(grid, a, b) if x != y]


SERIES_COLUMNS = ("anno", "ospite", "livello", "codice", "strato", "data", "nuovi_casi", "casi_totali")


def format_series_csv(series: Iterable[WeeklySeries]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SERIES_COLUMNS)
    for s in series:
        k = s.key
        head = ["NA" if k.year is None else k.year, k.host.label if k.host is not None else "NA",
                k.level, k.geo_id, k.stratum if k.stratum is not None else "NA"]
        for d, y, c in zip(s.dates, s.incidence, s.cumulative):
            writer.writerow(head + [d.isoformat(), "NA" if y is None else y, c])
    return out.getvalue()


def parse_series_csv(text: str) -> list[WeeklySeries]:
    """Read series written by :func:`format_series_csv` (slices in file order)."""
    reader = csv.DictReader(io.StringIO(text))
    missing = set(SERIES_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"series CSV lacks columns {sorted(missing)}")
    rows: dict[SliceKey, list[tuple]] = {}
    for row in reader:
        key = SliceKey(
            None if row["anno"] in ("", "NA") else int(row["anno"]),
            None if row["ospite"] in ("", "NA") else Host.parse(row["ospite"]),
            row["livello"], row["codice"],
            None if row["strato"] in ("", "NA") else row["strato"],
        )
        y = row["nuovi_casi"].strip()
        rows.setdefault(key, []).append(
            (date.fromisoformat(row["data"]), None if y in ("", "NA") else int(y), int(row["casi_totali"])))
    return [
        WeeklySeries(key, [d for d, _, _ in vals], [c for _, _, c in vals], [y for _, y, _ in vals])
        for key, vals in rows.items()
    ]


QA_COLUMNS = ("campione", "anno", "ospite", "data", "codice_regione", "codice_provincia",
              "nuovi_casi", "casi_totali", "url_bollettino")


def format_qa_csv(sample: Iterable[SurveillanceRecord]) -> str:
    """QA sample with the bulletin URL as provenance for manual cross-checking."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(QA_COLUMNS)
    for i, r in enumerate(sample, start=1):
        geo = r.geo
        writer.writerow([
            i, r.season, r.host.label, r.week_date.isoformat(),
            geo.region_code if geo else "NA",
            (geo.province_code or "NA") if geo else "NA",
            "NA" if r.new_cases is None else r.new_cases, r.total_cases, r.bulletin_url,
        ])
    return out.getvalue()
