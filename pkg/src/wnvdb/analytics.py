"""Descriptive summaries of the corpus and the province-week weather join."""
from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, Mapping, Sequence

from .errors import DuplicateWeatherKey
from .geo import GeoRegistry, is_not_indicated, load_registry
from .pipeline import WeeklySeries
from .schema import AgeClass, Host, InfectionType, SurveillanceRecord

SYMPTOMATIC_TYPES = frozenset({InfectionType.NEUROINVASIVE, InfectionType.FEVER, InfectionType.SYMPTOMATIC})


@dataclass(frozen=True)
class StatRow:
    key: tuple[str, ...]
    count: int
    share: float


@dataclass(frozen=True)
class StatReport:
    """Counts per group with shares.

    Shares are normalised within rows sharing every key component but the
    last, so a ``(year, region)`` report has shares summing to one per year.
    ``excluded`` holds quantities reported outside the shares (NA increments,
    missing age class).
    """

    grouping: tuple[str, ...]
    rows: tuple[StatRow, ...]
    excluded: Mapping[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(r.count for r in self.rows)

    @property
    def mean(self) -> float:
        return self.total / len(self.rows) if self.rows else 0.0

    def count(self, *key) -> int:
        key = tuple(str(k) for k in key)
        return sum(r.count for r in self.rows if r.key == key)

    def share(self, *key) -> float:
        key = tuple(str(k) for k in key)
        for r in self.rows:
            if r.key == key:
                return r.share
        return 0.0

    def as_dict(self) -> dict:
        return {
            "grouping": list(self.grouping),
            "total": self.total,
            "rows": [{"key": list(r.key), "count": r.count, "share": r.share} for r in self.rows],
            "excluded": dict(sorted(self.excluded.items())),
        }


def _report(grouping, counts: Mapping[tuple, int], excluded=None, order="key") -> StatReport:
    partitions: dict[tuple, int] = defaultdict(int)
    for key, n in counts.items():
        partitions[key[:-1]] += n
    rows = [StatRow(key, int(n), (n / partitions[key[:-1]]) if partitions[key[:-1]] else 0.0)
            for key, n in counts.items()]
    if order == "count":
        rows.sort(key=lambda r: (r.key[:-1], -r.count, r.key[-1]))
    else:
        rows.sort(key=lambda r: r.key)
    return StatReport(tuple(grouping), tuple(rows), dict(excluded or {}))


def _select(records: Iterable[SurveillanceRecord], host: Host | None) -> list[SurveillanceRecord]:
    return [r for r in records if host is None or r.host == host]


def yearly_totals(records: Iterable[SurveillanceRecord], host: Host = Host.HUMANS, *,
                  exclude_years: Iterable[int] = ()) -> StatReport:
    """New cases per season; NA increments are counted in ``excluded['unattributable']``."""
    skip = set(exclude_years)
    counts: dict[tuple, int] = {}
    na = 0
    for r in _select(records, host):
        if r.season in skip:
            continue
        key = (str(r.season),)
        counts.setdefault(key, 0)
        if r.new_cases is None:
            na += 1
        else:
            counts[key] += r.new_cases
    return _report(("year",), counts, {"unattributable": na})


def _region_name(record: SurveillanceRecord, registry: GeoRegistry) -> str:
    entry = registry.regions.get(record.geo.region_code)
    return entry.name if entry else record.geo.region_name


def _province_name(record: SurveillanceRecord, registry: GeoRegistry) -> str:
    geo = record.geo
    if geo.province_code is None or is_not_indicated(geo.province_name):
        return f"Not indicated ({_region_name(record, registry)})"
    entry = registry.provinces.get(geo.province_code)
    return entry.name if entry else (geo.province_name or geo.province_code)


def regional_breakdown(records: Iterable[SurveillanceRecord], host: Host = Host.HUMANS,
                       level: str = "region", registry: GeoRegistry | None = None) -> StatReport:
    """Totals per region or province, sorted by descending count."""
    if level not in ("region", "province"):
        raise ValueError("level must be 'region' or 'province'")
    registry = registry or load_registry()
    name = _region_name if level == "region" else _province_name
    counts: dict[tuple, int] = defaultdict(int)
    na = 0
    for r in _select(records, host):
        if r.geo is None:
            continue
        key = (name(r, registry),)
        if r.new_cases is None:
            na += 1
            counts[key] += 0
        else:
            counts[key] += r.new_cases
    return _report((level,), counts, {"unattributable": na}, order="count")


def age_composition(records: Iterable[SurveillanceRecord], year: int | None = None, *,
                    by_year: bool = False) -> StatReport:
    """Shares of human cases per age class; the missing class is kept out of the shares."""
    counts: dict[tuple, int] = {}
    missing = na = 0
    for r in _select(records, Host.HUMANS):
        if r.age is None or (year is not None and r.season != year):
            continue
        if r.new_cases is None:
            na += 1
            continue
        if r.age is AgeClass.MISSING:
            missing += r.new_cases
            continue
        key = ((str(r.season),) if by_year else ()) + (r.age.value,)
        counts[key] = counts.get(key, 0) + r.new_cases
    grouping = (("year",) if by_year else ()) + ("age",)
    return _report(grouping, counts, {"missing": missing, "unattributable": na})


def infection_composition(records: Iterable[SurveillanceRecord], year: int | None = None, *,
                          basis: str = "symptomatic", by_year: bool = False) -> StatReport:
    """Shares per infection type.

    ``basis="symptomatic"`` keeps neuro-invasive, febrile and generic
    symptomatic cases (blood donors and asymptomatic cases excluded);
    ``basis="all"`` keeps every reported type.
    """
    if basis not in ("symptomatic", "all"):
        raise ValueError("basis must be 'symptomatic' or 'all'")
    counts: dict[tuple, int] = {}
    missing = na = 0
    for r in _select(records, Host.HUMANS):
        if r.infection_type is None or (year is not None and r.season != year):
            continue
        if r.new_cases is None:
            na += 1
            continue
        if r.infection_type is InfectionType.MISSING:
            missing += r.new_cases
            continue
        if basis == "symptomatic" and r.infection_type not in SYMPTOMATIC_TYPES:
            continue
        key = ((str(r.season),) if by_year else ()) + (r.infection_type.value,)
        counts[key] = counts.get(key, 0) + r.new_cases
    grouping = (("year",) if by_year else ()) + ("infection_type",)
    return _report(grouping, counts, {"missing": missing, "unattributable": na})


def host_region_composition(records: Iterable[SurveillanceRecord], host: Host,
                            years: Iterable[int] | None = None, *, pooled: bool = False,
                            registry: GeoRegistry | None = None) -> StatReport:
    """Per-year (or pooled) regional shares of cases for one host."""
    registry = registry or load_registry()
    keep = set(years) if years is not None else None
    counts: dict[tuple, int] = defaultdict(int)
    na = 0
    for r in _select(records, host):
        if r.geo is None or (keep is not None and r.season not in keep):
            continue
        key = (() if pooled else (str(r.season),)) + (_region_name(r, registry),)
        if r.new_cases is None:
            na += 1
            counts[key] += 0
        else:
            counts[key] += r.new_cases
    grouping = (() if pooled else ("year",)) + ("region",)
    return _report(grouping, counts, {"unattributable": na}, order="count")


def format_report_csv(report: StatReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("group_key", "count", "share"))
    for r in report.rows:
        writer.writerow(("/".join(r.key), r.count, repr(r.share)))
    for name, n in sorted(report.excluded.items()):
        writer.writerow((name, n, "NA"))
    return out.getvalue()


def format_report_json(report: StatReport) -> str:
    return json.dumps(report.as_dict(), indent=2, ensure_ascii=False) + "\n"


TMAX_RANGE = (-30.0, 55.0)


@dataclass(frozen=True)
class WeatherWeek:
    """Weather observation for one province; daily rows are averaged onto case weeks."""

    province_code: str
    week_date: date
    t_max_mean: float | None
    precip_mean: float | None
    wind_mean: float | None

    def __post_init__(self):
        object.__setattr__(self, "province_code", str(self.province_code).zfill(3))
        t, pr, w = self.t_max_mean, self.precip_mean, self.wind_mean
        if t is not None and not TMAX_RANGE[0] <= t <= TMAX_RANGE[1]:
            raise ValueError(f"maximum temperature {t} outside {TMAX_RANGE}")
        if pr is not None and pr < 0:
            raise ValueError(f"negative precipitation {pr}")
        if w is not None and w < 0:
            raise ValueError(f"negative wind speed {w}")


WEATHER_COLUMNS = ("codice_provincia", "data", "tmax_c", "precip_mm", "wind_kmh")


def _maybe_float(text: str) -> float | None:
    text = text.strip()
    if text in ("", "NA"):
        return None
    value = float(text)
    return None if math.isnan(value) else value


def parse_weather_csv(text: str) -> list[WeatherWeek]:
    reader = csv.DictReader(io.StringIO(text))
    missing = set(WEATHER_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"weather CSV lacks columns {sorted(missing)}")
    return [
        WeatherWeek(row["codice_provincia"].strip(), date.fromisoformat(row["data"].strip()),
                    _maybe_float(row["tmax_c"]), _maybe_float(row["precip_mm"]), _maybe_float(row["wind_kmh"]))
        for row in reader
    ]


@dataclass(frozen=True)
class JoinedRow:
    year: int | None
    host: str
    province_code: str
    week_date: date
    new_cases: int | None
    total_cases: int
    tmax_c: float | None
    precip_mm: float | None
    wind_kmh: float | None
    n_weather_days: int


def _mean(values: list[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return sum(present) / len(present) if present else None


def join_weather(cases: Sequence[WeeklySeries], weather: Sequence[WeatherWeek]) -> list[JoinedRow]:
    """Left join of province case-weeks with weather.

    A weather row dated ``d`` is assigned to the case week ending on the
    first week date ``w`` with ``w - 6 days <= d <= w``; several rows in one
    week (daily data) are averaged per variable.  Case rows are never
    dropped or duplicated.
    """
    by_key: dict[tuple[str, date], WeatherWeek] = {}
    for w in weather:
        key = (w.province_code, w.week_date)
        if key in by_key:
            raise DuplicateWeatherKey(f"two weather rows for province {key[0]} on {key[1]}")
        by_key[key] = w
    by_province: dict[str, list[WeatherWeek]] = defaultdict(list)
    for w in by_key.values():
        by_province[w.province_code].append(w)

    out = []
    for s in cases:
        code = s.key.geo_id
        rows = by_province.get(code, [])
        host = s.key.host.label if s.key.host is not None else "NA"
        for d, y, c in zip(s.dates, s.incidence, s.cumulative):
            lo = d - timedelta(days=6)
            hits = [w for w in rows if lo <= w.week_date <= d]
            out.append(JoinedRow(
                s.key.year, host, code, d, y, c,
                _mean([w.t_max_mean for w in hits]),
                _mean([w.precip_mean for w in hits]),
                _mean([w.wind_mean for w in hits]),
                len(hits),
            ))
    return out


JOINED_COLUMNS = ("anno", "ospite", "codice_provincia", "data", "nuovi_casi", "casi_totali",
                  "tmax_c", "precip_mm", "wind_kmh", "giorni_meteo")


def format_joined_csv(rows: Iterable[JoinedRow]) -> str:
    def fmt(v):
        return "NA" if v is None else (repr(v) if isinstance(v, float) else str(v))

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(JOINED_COLUMNS)
    for r in rows:
        writer.writerow([fmt(r.year), r.host, r.province_code, r.week_date.isoformat(), fmt(r.new_cases),
                         r.total_cases, fmt(r.tmax_c), fmt(r.precip_mm), fmt(r.wind_kmh), r.n_weather_days])
    return out.getvalue()
