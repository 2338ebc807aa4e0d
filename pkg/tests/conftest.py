"""Shared fixtures: a small synthetic WNVDB tree written through the package's own serialiser."""
from __future__ import annotations

import math
import os
from datetime import date, timedelta
from pathlib import Path

import pytest

from wnvdb.geo import load_registry
from wnvdb.schema import FAMILIES, AgeClass, FamilyKind, GeoUnit, Host, InfectionType, SurveillanceRecord, format_table

START = date(2022, 6, 8)
N_WEEKS = 22
URL = "https://www.epicentro.iss.it/westnile/bollettino/Bollettino_WND_{:%Y_%m_%d}.pdf"

# (province code, age class, infection type, final size, midpoint week)
HUMAN_STREAMS = [
    ("028", AgeClass.FROM_45_TO_64, InfectionType.NEUROINVASIVE, 60, 9.0),
    ("028", AgeClass.FROM_65_TO_74, InfectionType.FEVER, 25, 10.0),
    ("029", AgeClass.FROM_75, InfectionType.NEUROINVASIVE, 40, 8.0),
    ("023", AgeClass.FROM_15_TO_44, InfectionType.FEVER, 12, 11.0),
    ("038", AgeClass.FROM_65_TO_74, InfectionType.NEUROINVASIVE, 30, 10.0),
    ("037", AgeClass.MISSING, InfectionType.FEVER, 8, 12.0),
]


def logistic_cumulative(final: int, mid: float, rate: float = 0.7, n: int = N_WEEKS) -> list[int]:
    return [int(round(final / (1.0 + math.exp(rate * (mid - t))))) for t in range(1, n + 1)]


def week_dates(n: int = N_WEEKS) -> list[date]:
    return [START + timedelta(weeks=i) for i in range(n)]


def _geo(code: str) -> GeoUnit:
    reg = load_registry()
    p = reg.provinces[code]
    r = reg.regions[p.region_code]
    return GeoUnit(r.code, r.name, p.code, p.name, p.abbrev, p.lat, p.long)


def human_province_records() -> list[SurveillanceRecord]:
    out = []
    for code, age, itype, final, mid in HUMAN_STREAMS:
        for d, c in zip(week_dates(), logistic_cumulative(final, mid)):
            out.append(SurveillanceRecord(URL.format(d), d, Host.HUMANS, c, None, _geo(code),
                                          infection_type=itype, age=age))
    return _with_increments(out)


def _with_increments(records: list[SurveillanceRecord]) -> list[SurveillanceRecord]:
    """Fill ``nuovi_casi`` as the week-on-week difference within each stream."""
    from dataclasses import replace

    last: dict[tuple, int] = {}
    out = []
    for r in records:
        key = (r.geo.province_code if r.geo else None, r.geo.region_code if r.geo else None,
               r.age, r.infection_type, r.species)
        prev = last.get(key, 0)
        out.append(replace(r, new_cases=r.total_cases - prev))
        last[key] = r.total_cases
    return out


def human_region_records() -> list[SurveillanceRecord]:
    reg = load_registry()
    totals: dict[tuple, dict[date, int]] = {}
    for r in human_province_records():
        key = (r.geo.region_code, r.infection_type)
        totals.setdefault(key, {})
        totals[key][r.week_date] = totals[key].get(r.week_date, 0) + r.total_cases
    out = []
    for (region, itype), by_date in sorted(totals.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        entry = reg.regions[region]
        geo = GeoUnit(entry.code, entry.name, lat=entry.lat, long=entry.long)
        for d in sorted(by_date):
            out.append(SurveillanceRecord(URL.format(d), d, Host.HUMANS, by_date[d], None, geo, infection_type=itype))
    return _with_increments(out)


def national_records() -> list[SurveillanceRecord]:
    totals: dict[date, int] = {}
    for r in human_province_records():
        totals[r.week_date] = totals.get(r.week_date, 0) + r.total_cases
    out = [SurveillanceRecord(URL.format(d), d, Host.HUMANS, c) for d, c in sorted(totals.items())]
    return _with_increments(out)


def equid_records() -> list[SurveillanceRecord]:
    out = []
    for code, final, mid in (("028", 6, 10.0), ("038", 3, 12.0)):
        for d, c in zip(week_dates(), logistic_cumulative(final, mid)):
            out.append(SurveillanceRecord(URL.format(d), d, Host.EQUIDS, c, None, _geo(code),
                                          outbreak_equids=1 if c else 0, new_deaths=0, total_deaths=0))
    return _with_increments(out)


def write_corpus(root: Path) -> Path:
    """Write one season of every human family plus equids under ``root``; returns ``root``."""
    files = {
        FamilyKind.HUMAN_PROVINCE: ("dati-sorveglianza-umana/wn-ita-province-sorveglianza-umana-2022.csv",
                                    human_province_records()),
        FamilyKind.HUMAN_REGION: ("dati-sorveglianza-umana/wn-ita-regioni-sorveglianza-umana-2022.csv",
                                  human_region_records()),
        FamilyKind.NATIONAL_TREND: ("dati-andamento-nazionale/wn-ita-andamento-nazionale-2022.csv",
                                    national_records()),
        FamilyKind.EQUID: ("dati-sorveglianza-equidi/wn-ita-sorveglianza-equidi-2022.csv", equid_records()),
    }
    for kind, (rel, records) in files.items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_table(records, FAMILIES[kind]), encoding="utf-8")
    return root


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory) -> Path:
    return write_corpus(tmp_path_factory.mktemp("wnvdb"))


def snapshot_dir() -> Path | None:
    """Location of a real WNVDB checkout, if one is available."""
    for candidate in (os.environ.get("WNV_DATA_DIR"), Path(__file__).parent / "data" / "wnvdb"):
        if candidate and Path(candidate).is_dir() and any(Path(candidate).rglob("*.csv")):
            return Path(candidate)
    return None


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
