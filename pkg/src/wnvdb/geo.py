"""ISTAT region/province registry and the geographic audit of parsed records."""
from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable

from .schema import SurveillanceRecord, _norm

NOT_INDICATED = frozenset({
    "not indicated", "non indicato", "non indicata", "non indicati",
    "in fase di definizione", "in fase di definizione aggiornamento",
    "non specificato", "non specificata",
})

_STOPWORDS = frozenset({"e", "di", "del", "della", "dell", "nell", "nella"})


def _name_key(name: str) -> frozenset[str]:
    """Spelling-insensitive keys; bilingual names like 'Bolzano/Bozen' yield one key per part."""
    keys = set()
    for part in re.split(r"/", name):
        words = [w for w in _norm(part).split() if w not in _STOPWORDS]
        if words:
            keys.add(" ".join(words))
    return frozenset(keys)


# alternative spellings seen in bulletins, keyed by ISTAT code
_REGION_ALIASES = {
    "02": ("Valle d'Aosta/Vallée d'Aoste",),
    "04": ("Trentino-Alto Adige/Südtirol", "Trentino Alto Adige"),
}
_PROVINCE_ALIASES = {
    "007": ("Aosta/Aoste", "Valle d'Aosta"),
    "021": ("Bolzano/Bozen", "P.A. Bolzano"),
    "022": ("P.A. Trento",),
    "035": ("Reggio Emilia",),
    "040": ("Forli", "Forlì Cesena"),
    "041": ("Pesaro Urbino",),
    "045": ("Massa Carrara",),
    "080": ("Reggio Calabria",),
    "108": ("Monza Brianza",),
    "103": ("Verbania",),
}


@dataclass(frozen=True)
class RegionEntry:
    code: str
    name: str
    capital: str
    lat: float
    long: float
    population: int


@dataclass(frozen=True)
class ProvinceEntry:
    code: str
    region_code: str
    name: str
    abbrev: str
    lat: float
    long: float
    historical: bool


@dataclass(frozen=True)
class GeoRegistry:
    """Static snapshot of ISTAT codes with capital coordinates and resident population."""

    regions: dict[str, RegionEntry]
    provinces: dict[str, ProvinceEntry]

    def region_by_name(self, name: str) -> RegionEntry | None:
        keys = _name_key(name)
        for entry in self.regions.values():
            if keys & self.region_keys(entry.code):
                return entry
        return None

    def province_by_name(self, name: str) -> ProvinceEntry | None:
        keys = _name_key(name)
        for entry in self.provinces.values():
            if keys & self.province_keys(entry.code):
                return entry
        return None

    def region_keys(self, code: str) -> frozenset[str]:
        names = (self.regions[code].name,) + _REGION_ALIASES.get(code, ())
        return frozenset().union(*map(_name_key, names))

    def province_keys(self, code: str) -> frozenset[str]:
        names = (self.provinces[code].name,) + _PROVINCE_ALIASES.get(code, ())
        return frozenset().union(*map(_name_key, names))

    def population(self, region: str) -> int:
        entry = self.regions.get(region) or self.region_by_name(region)
        if entry is None:
            raise KeyError(region)
        return entry.population


def _read_csv(name: str) -> list[dict[str, str]]:
    text = resources.files("wnvdb").joinpath("data", name).read_text(encoding="utf-8")
    return list(csv.DictReader(io.StringIO(text)))


@lru_cache(maxsize=1)
def load_registry() -> GeoRegistry:
    regions = {
        r["codice_regione"]: RegionEntry(r["codice_regione"], r["denominazione_regione"], r["capoluogo"],
                                         float(r["lat"]), float(r["long"]), int(r["popolazione"]))
        for r in _read_csv("istat_regions.csv")
    }
    provinces = {
        p["codice_provincia"]: ProvinceEntry(p["codice_provincia"], p["codice_regione"],
                                             p["denominazione_provincia"], p["sigla_provincia"],
                                             float(p["lat"]), float(p["long"]), p["storica"] == "1")
        for p in _read_csv("istat_provinces.csv")
    }
    return GeoRegistry(regions, provinces)


@dataclass(frozen=True)
class GeoIssue:
    index: int  # position of the record in the audited list
    columns: tuple[str, ...]
    severity: str
    message: str

    def as_dict(self, file: str | None = None, row: int | None = None) -> dict:
        return {"file": file, "row": row if row is not None else self.index,
                "column": ",".join(self.columns), "severity": self.severity, "message": self.message}


def is_not_indicated(name: str | None) -> bool:
    return name is not None and _norm(name) in NOT_INDICATED


def _far(lat, long, ref_lat, ref_long, tol) -> bool:
    return math.hypot(lat - ref_lat, long - ref_long) > tol


def _audit(record: SurveillanceRecord, reg: GeoRegistry, tol: float, region_tol: float):
    geo = record.geo
    errors: list[tuple[str, str]] = []
    warnings: list[tuple[str, str]] = []
    region = reg.regions.get(geo.region_code)
    if region is None:
        errors.append(("codice_regione", f"unknown region code {geo.region_code}"))
    elif not _name_key(geo.region_name) & reg.region_keys(region.code):
        errors.append(("denominazione_regione",
                       f"region name {geo.region_name!r} does not match {region.name!r} ({region.code})"))

    has_coords = geo.lat is not None and geo.long is not None
    province_level = geo.province_code is not None or geo.province_name is not None or geo.province_abbrev is not None

    if province_level and (is_not_indicated(geo.province_name) or geo.province_name is None and geo.province_code is None):
        warnings.append(("denominazione_provincia", "province not indicated; record kept for regional aggregation"))
    elif province_level:
        province = reg.provinces.get(geo.province_code) if geo.province_code else None
        if province is None:
            errors.append(("codice_provincia", f"unknown province code {geo.province_code}"))
        else:
            if region is not None and province.region_code != region.code:
                errors.append(("codice_provincia",
                               f"province {province.code} ({province.name}) is not in region {region.code}"))
            if province.historical:
                warnings.append(("codice_provincia",
                                 f"province {province.code} ({province.name}) no longer exists in the current ISTAT coding"))
            if geo.province_name is not None and not _name_key(geo.province_name) & reg.province_keys(province.code):
                errors.append(("denominazione_provincia",
                               f"province name {geo.province_name!r} does not match {province.name!r} ({province.code})"))
            if geo.province_abbrev is not None and geo.province_abbrev != province.abbrev:
                errors.append(("sigla_provincia",
                               f"abbreviation {geo.province_abbrev} does not match {province.abbrev} ({province.code})"))
            if has_coords and _far(geo.lat, geo.long, province.lat, province.long, tol):
                errors.append(("lat,long", f"coordinates ({geo.lat}, {geo.long}) are far from {province.name}"))
    elif region is not None and has_coords and _far(geo.lat, geo.long, region.lat, region.long, region_tol):
        errors.append(("lat,long", f"coordinates ({geo.lat}, {geo.long}) are far from {region.name}"))
    return errors, warnings


def validate_geo(records: Iterable[SurveillanceRecord], registry: GeoRegistry | None = None, *,
                 coord_tolerance: float = 0.3, region_coord_tolerance: float = 1.5) -> list[GeoIssue]:
    """Audit codes, names, abbreviations and coordinates against the registry.

    Emits at most one issue per record, at error severity when anything
    disagrees and at warning severity for not-indicated or historical
    provinces.  Records without geography are skipped.
    """
    reg = registry or load_registry()
    issues = []
    for i, record in enumerate(records):
        if record.geo is None:
            continue
        errors, warnings = _audit(record, reg, coord_tolerance, region_coord_tolerance)
        found = errors + warnings
        if not found:
            continue
        columns = tuple(dict.fromkeys(c for col, _ in found for c in col.split(",")))
        issues.append(GeoIssue(i, columns, "error" if errors else "warning",
                               "; ".join(msg for _, msg in found)))
    return issues
