"""Typed records and strict CSV parsers for the WNVDB table families."""
from __future__ import annotations

import csv
import enum
import io
import re
import unicodedata
from dataclasses import dataclass, fields
from datetime import date
from typing import Iterable, NamedTuple

from .errors import AmbiguousFile, EmptyFile, HeaderMismatch, UnknownFile, UnreadableFile

NA_TOKENS = frozenset({"", "NA"})
NA_OUT = "NA"

LAT_RANGE = (35.0, 48.0)
LONG_RANGE = (6.0, 19.0)

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_INT_RE = re.compile(r"^[+-]?\d+(\.0*)?$")
_ABBREV_RE = re.compile(r"^[A-Z]{2}$")


def _norm(text: str) -> str:
    text = unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode()
    return " ".join(re.sub(r"[-_/.']", " ", text.lower()).split())


class Host(enum.IntEnum):
    HUMANS = 0
    EQUIDS = 1
    TARGET_BIRDS = 2
    WILD_BIRDS = 3
    MOSQUITOES = 4

    @property
    def label(self) -> str:
        """Italian label used by the CLI and the rollup file."""
        return _HOST_LABELS[self]

    @classmethod
    def parse(cls, value) -> "Host":
        if isinstance(value, cls):
            return value
        key = _norm(str(value))
        if re.fullmatch(r"\d+(\.0*)?", key):
            return cls(int(float(key)))
        try:
            return _HOST_ALIASES[key]
        except KeyError:
            raise ValueError(f"unknown host {value!r}") from None


_HOST_LABELS = {
    Host.HUMANS: "umani",
    Host.EQUIDS: "equidi",
    Host.TARGET_BIRDS: "uccelli-bersaglio",
    Host.WILD_BIRDS: "uccelli-selvatici",
    Host.MOSQUITOES: "zanzare",
}
_HOST_ALIASES = {
    **{_norm(v): k for k, v in _HOST_LABELS.items()},
    **{_norm(k.name): k for k in Host},
    "umano": Host.HUMANS, "uomo": Host.HUMANS, "human": Host.HUMANS, "umana": Host.HUMANS,
    "equid": Host.EQUIDS, "equini": Host.EQUIDS, "cavalli": Host.EQUIDS,
    "bersaglio": Host.TARGET_BIRDS, "specie bersaglio": Host.TARGET_BIRDS,
    "uccelli specie bersaglio": Host.TARGET_BIRDS,
    "selvatici": Host.WILD_BIRDS, "uccelli selvatici": Host.WILD_BIRDS,
    "mosquito": Host.MOSQUITOES, "zanzara": Host.MOSQUITOES,
    "entomologica": Host.MOSQUITOES, "insetti": Host.MOSQUITOES,
}


class AgeClass(str, enum.Enum):
    UP_TO_14 = "<=14"
    FROM_15_TO_44 = "15-44"
    FROM_45_TO_64 = "45-64"
    FROM_65_TO_74 = "65-74"
    FROM_75 = ">=75"
    MISSING = "NA"

    @classmethod
    def parse(cls, text: str) -> "AgeClass":
        raw = text.strip().replace(" ", "")
        if raw in NA_TOKENS:
            return cls.MISSING
        raw = raw.replace("≤", "<=").replace("≥", ">=").replace("–", "-")
        try:
            return _AGE_ALIASES[raw.lower()]
        except KeyError:
            if _norm(text) in {"non indicato", "non indicata", "not indicated", "missing"}:
                return cls.MISSING
            raise ValueError(f"unknown age class {text!r}") from None


_AGE_ALIASES = {
    "<=14": AgeClass.UP_TO_14, "0-14": AgeClass.UP_TO_14, "<15": AgeClass.UP_TO_14,
    "15-44": AgeClass.FROM_15_TO_44,
    "45-64": AgeClass.FROM_45_TO_64,
    "65-74": AgeClass.FROM_65_TO_74,
    ">=75": AgeClass.FROM_75, "75+": AgeClass.FROM_75, ">74": AgeClass.FROM_75,
}


class InfectionType(str, enum.Enum):
    NEUROINVASIVE = "neuroinvasive"
    FEVER = "fever"
    BLOOD_DONOR = "blood_donor"
    SYMPTOMATIC = "symptomatic"
    ASYMPTOMATIC = "asymptomatic"
    MISSING = "NA"

    @classmethod
    def parse(cls, text: str) -> "InfectionType":
        if text.strip() in NA_TOKENS:
            return cls.MISSING
        key = _norm(text)
        for pattern, kind in _INFECTION_PATTERNS:
            if re.search(pattern, key):
                return kind
        raise ValueError(f"unknown infection type {text!r}")


# order matters: "asintomatic" must be tested before "sintomatic"
_INFECTION_PATTERNS = (
    (r"neuro|wn n\b", InfectionType.NEUROINVASIVE),
    (r"febbr|fever|wn f\b", InfectionType.FEVER),
    (r"donat|donor", InfectionType.BLOOD_DONOR),
    (r"asint|asympt", InfectionType.ASYMPTOMATIC),
    (r"sint|sympt|wn s\b", InfectionType.SYMPTOMATIC),
    (r"^(missing|non indicat[oa]|not indicated)$", InfectionType.MISSING),
)


@dataclass(frozen=True)
class GeoUnit:
    """Geography carried by one record.

    Only formats are checked here; membership in the ISTAT registry is an
    audit concern (see :func:`wnvdb.geo.validate_geo`).
    """

    region_code: str
    region_name: str
    province_code: str | None = None
    province_name: str | None = None
    province_abbrev: str | None = None
    lat: float | None = None
    long: float | None = None

    def __post_init__(self):
        if not re.fullmatch(r"\d{2}", self.region_code):
            raise ValueError(f"region code must be 2 digits, got {self.region_code!r}")
        if self.province_code is not None and not re.fullmatch(r"\d{3}", self.province_code):
            raise ValueError(f"province code must be 3 digits, got {self.province_code!r}")
        if self.province_abbrev is not None and not _ABBREV_RE.match(self.province_abbrev):
            raise ValueError(f"province abbreviation must be 2 uppercase letters, got {self.province_abbrev!r}")
        if self.lat is not None and not LAT_RANGE[0] <= self.lat <= LAT_RANGE[1]:
            raise ValueError(f"latitude {self.lat} outside {LAT_RANGE}")
        if self.long is not None and not LONG_RANGE[0] <= self.long <= LONG_RANGE[1]:
            raise ValueError(f"longitude {self.long} outside {LONG_RANGE}")


@dataclass(frozen=True)
class SurveillanceRecord:
    bulletin_url: str
    week_date: date
    host: Host
    total_cases: int
    new_cases: int | None = None
    geo: GeoUnit | None = None
    infection_type: InfectionType | None = None
    age: AgeClass | None = None
    species: str | None = None
    outbreak_equids: int | None = None
    new_deaths: int | None = None
    total_deaths: int | None = None
    season: int | None = None

    def __post_init__(self):
        if self.total_cases < 0:
            raise ValueError("total_cases must be non-negative")
        for name in ("new_cases", "outbreak_equids", "new_deaths", "total_deaths"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be non-negative or NA")
        if self.season is None:
            object.__setattr__(self, "season", self.week_date.year)

    @property
    def year(self) -> int:
        return self.season


class FamilyKind(str, enum.Enum):
    NATIONAL_TREND = "national_trend"
    HUMAN_REGION = "human_region"
    HUMAN_PROVINCE = "human_province"
    ENTOMOLOGICAL = "entomological"
    EQUID = "equid"
    TARGET_BIRDS = "target_birds"
    WILD_BIRDS = "wild_birds"
    LATEST_ROLLUP = "latest_rollup"


@dataclass(frozen=True)
class TableFamily:
    kind: FamilyKind
    filename_pattern: str
    expected_columns: tuple[str, ...]
    host: Host | None = None
    # column -> first season in which it is mandatory
    optional_until: tuple[tuple[str, int], ...] = ()
    folder: str = ""

    def matches(self, filename: str) -> re.Match | None:
        return re.fullmatch(self.filename_pattern, filename)

    def required_columns(self, year: int | None) -> tuple[str, ...]:
        since = dict(self.optional_until)
        return tuple(
            c for c in self.expected_columns
            if c not in since or (year is not None and year >= since[c])
        )

    @property
    def has_province(self) -> bool:
        return "codice_provincia" in self.expected_columns

    @property
    def has_geo(self) -> bool:
        return "codice_regione" in self.expected_columns


_HEAD = ("url_bollettino", "data")
_REGION = ("codice_regione", "denominazione_regione")
_PROVINCE = ("codice_provincia", "denominazione_provincia", "sigla_provincia")
_COORDS = ("lat", "long")
_COUNTS = ("nuovi_casi", "casi_totali")

FAMILIES: dict[FamilyKind, TableFamily] = {f.kind: f for f in (
    TableFamily(
        FamilyKind.NATIONAL_TREND,
        r"wn-ita-(?:andamento|sorveglianza)-nazionale-(?P<year>\d{4})\.csv",
        _HEAD + ("host",) + _COUNTS,
        folder="dati-andamento-nazionale",
    ),
    TableFamily(
        FamilyKind.HUMAN_REGION,
        r"wn-ita-regioni-sorveglianza-umana-(?P<year>\d{4})\.csv",
        _HEAD + _REGION + _COORDS + _COUNTS + ("tipo_infezione",),
        host=Host.HUMANS,
        optional_until=(("tipo_infezione", 2013),),
        folder="dati-sorveglianza-umana",
    ),
    TableFamily(
        FamilyKind.HUMAN_PROVINCE,
        r"wn-ita-province-sorveglianza-umana-(?P<year>\d{4})\.csv",
        _HEAD + _REGION + _PROVINCE + _COORDS + ("eta",) + _COUNTS + ("tipo_infezione",),
        host=Host.HUMANS,
        optional_until=(("eta", 2013), ("tipo_infezione", 2013)),
        folder="dati-sorveglianza-umana",
    ),
    TableFamily(
        FamilyKind.ENTOMOLOGICAL,
        r"wn-ita-sorveglianza-entomologic(?:a|al)-(?P<year>\d{4})\.csv",
        _HEAD + _REGION + _PROVINCE + _COORDS + _COUNTS,
        host=Host.MOSQUITOES,
        folder="dati-sorveglianza-entomologica",
    ),
    TableFamily(
        FamilyKind.EQUID,
        r"wn-ita-sorveglianza-equidi-(?P<year>\d{4})\.csv",
        _HEAD + _REGION + _PROVINCE + _COORDS + _COUNTS
        + ("nuovi_morti_abbattuti", "totale_morti_abbattuti", "equidi_presenti_focolaio"),
        host=Host.EQUIDS,
        folder="dati-sorveglianza-equidi",
    ),
    TableFamily(
        FamilyKind.TARGET_BIRDS,
        r"wn-ita-(?:regioni-)?sorveglianza-uccelli-bersaglio-(?P<year>\d{4})\.csv",
        _HEAD + _REGION + _PROVINCE + _COORDS + ("specie",) + _COUNTS,
        host=Host.TARGET_BIRDS,
        folder="dati-sorveglianza-uccelli",
    ),
    TableFamily(
        FamilyKind.WILD_BIRDS,
        r"wn-ita-(?:regioni-)?sorveglianza-uccelli-selvatici-(?P<year>\d{4})\.csv",
        _HEAD + _REGION + _PROVINCE + _COORDS + ("specie",) + _COUNTS,
        host=Host.WILD_BIRDS,
        folder="dati-sorveglianza-uccelli",
    ),
    TableFamily(
        FamilyKind.LATEST_ROLLUP,
        r"latest-wnv\.csv",
        _HEAD + _REGION + _PROVINCE + _COORDS + _COUNTS + ("ospite_recettivo",),
    ),
)}


class DetectedFile(NamedTuple):
    family: TableFamily
    year: int | None


def detect_family(filename: str) -> DetectedFile:
    if "/" in filename or "\\" in filename:
        raise ValueError(f"expected a base name, got a path: {filename!r}")
    hits = [(f, m) for f in FAMILIES.values() if (m := f.matches(filename))]
    if not hits:
        raise UnknownFile(filename)
    if len(hits) > 1:
        raise AmbiguousFile(f"{filename} matches {[f.kind.value for f, _ in hits]}")
    family, match = hits[0]
    year = match.groupdict().get("year")
    return DetectedFile(family, int(year) if year else None)


@dataclass(frozen=True)
class RowIssue:
    row: int  # 1-based line number; the header is line 1
    column: str | None
    severity: str  # "error" | "warning"
    message: str
    file: str | None = None

    def as_dict(self) -> dict:
        return {"file": self.file, "row": self.row, "column": self.column,
                "severity": self.severity, "message": self.message}


class ParsedTable(NamedTuple):
    records: list[SurveillanceRecord]
    issues: list[RowIssue]
    lines: list[int]  # source line of each record


class _RowError(ValueError):
    def __init__(self, column, message):
        super().__init__(message)
        self.column = column


def _is_na(text: str) -> bool:
    return text.strip() in NA_TOKENS


def _parse_count(text: str, column: str) -> int | None:
    text = text.strip()
    if text in NA_TOKENS:
        return None
    if not _INT_RE.match(text):
        raise _RowError(column, f"not an integer count: {text!r}")
    return int(float(text))


def _parse_float(text: str, column: str) -> float | None:
    if _is_na(text):
        return None
    try:
        value = float(text)
    except ValueError:
        raise _RowError(column, f"not a number: {text!r}") from None
    if value != value:
        return None
    return value


def _parse_date(text: str) -> date:
    text = text.strip()
    if not _DATE_RE.match(text):
        raise _RowError("data", f"bad date format {text!r}, expected yyyy-mm-dd")
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise _RowError("data", f"invalid calendar date {text!r}") from None


def _parse_code(text: str, width: int, column: str) -> str | None:
    text = text.strip()
    if text in NA_TOKENS:
        return None
    if not re.fullmatch(r"\d{1,%d}(\.0*)?" % width, text):
        raise _RowError(column, f"not a {width}-digit code: {text!r}")
    return str(int(float(text))).zfill(width)


def _text(text: str) -> str | None:
    text = text.strip()
    return None if text in NA_TOKENS else text


class _RowParser:
    def __init__(self, family: TableFamily, year: int | None):
        self.family = family
        self.year = year

    def parse(self, row: dict[str, str]) -> tuple[SurveillanceRecord, list[tuple[str, str]]]:
        """Return the record plus (column, message) warnings; raise _RowError on fatal problems."""
        warnings: list[tuple[str, str]] = []
        get = row.get
        week = _parse_date(get("data", ""))
        season = self.year if self.year is not None else week.year

        if self.family.host is not None:
            host = self.family.host
        else:
            col = "host" if "host" in row else "ospite_recettivo"
            try:
                host = Host.parse(get(col, "").strip())
            except ValueError as exc:
                raise _RowError(col, str(exc)) from None

        total = _parse_count(get("casi_totali", ""), "casi_totali")
        if total is None:
            raise _RowError("casi_totali", "cumulative count is NA")
        if total < 0:
            raise _RowError("casi_totali", f"negative cumulative {total}")
        new = _parse_count(get("nuovi_casi", ""), "nuovi_casi")
        if new is not None and new < 0:
            warnings.append(("nuovi_casi", f"negative increment {new} stored as NA"))
            new = None

        geo = self._geo(row) if self.family.has_geo else None

        extra = {}
        if "eta" in row:
            try:
                extra["age"] = AgeClass.parse(get("eta"))
            except ValueError as exc:
                raise _RowError("eta", str(exc)) from None
        if "tipo_infezione" in row:
            try:
                kind = InfectionType.parse(get("tipo_infezione"))
            except ValueError as exc:
                raise _RowError("tipo_infezione", str(exc)) from None
            msg = _infection_year_rule(kind, season)
            if msg:
                warnings.append(("tipo_infezione", msg))
            extra["infection_type"] = kind
        if "specie" in row:
            extra["species"] = _text(get("specie"))
        if self.family.kind is FamilyKind.EQUID:
            for col, name in (("nuovi_morti_abbattuti", "new_deaths"),
                              ("totale_morti_abbattuti", "total_deaths"),
                              ("equidi_presenti_focolaio", "outbreak_equids")):
                value = _parse_count(get(col, ""), col) if col in row else None
                if value is not None and value < 0:
                    if name == "new_deaths":
                        warnings.append((col, f"negative increment {value} stored as NA"))
                        value = None
                    else:
                        raise _RowError(col, f"negative count {value}")
                extra[name] = value

        record = SurveillanceRecord(
            bulletin_url=get("url_bollettino", "").strip(),
            week_date=week,
            host=host,
            total_cases=total,
            new_cases=new,
            geo=geo,
            season=season,
            **extra,
        )
        return record, warnings

    def _geo(self, row: dict[str, str]) -> GeoUnit:
        region_code = _parse_code(row.get("codice_regione", ""), 2, "codice_regione")
        if region_code is None:
            raise _RowError("codice_regione", "region code is NA")
        region_name = _text(row.get("denominazione_regione", "")) or ""
        lat = _parse_float(row.get("lat", ""), "lat")
        long = _parse_float(row.get("long", ""), "long")
        province_code = province_name = abbrev = None
        if self.family.has_province:
            province_code = _parse_code(row.get("codice_provincia", ""), 3, "codice_provincia")
            province_name = _text(row.get("denominazione_provincia", ""))
            raw_abbrev = row.get("sigla_provincia", "").strip()
            # "NA" is also Napoli's abbreviation
            if raw_abbrev == "NA" and (province_code == "063" or _norm(province_name or "") == "napoli"):
                abbrev = "NA"
            else:
                abbrev = _text(raw_abbrev)
        try:
            return GeoUnit(region_code, region_name, province_code, province_name, abbrev, lat, long)
        except ValueError as exc:
            msg = str(exc)
            column = ("lat" if msg.startswith("latitude") else "long" if msg.startswith("longitude")
                      else "sigla_provincia" if "abbreviation" in msg else "codice_regione")
            raise _RowError(column, msg) from None


def _infection_year_rule(kind: InfectionType, season: int) -> str | None:
    if kind in (InfectionType.SYMPTOMATIC, InfectionType.ASYMPTOMATIC) and season < 2022:
        return f"{kind.value} infections are only reported from 2022, found in {season}"
    if 2013 <= season <= 2017 and kind not in (InfectionType.NEUROINVASIVE, InfectionType.MISSING):
        return f"only neuroinvasive infections are reported in 2013-2017, found {kind.value}"
    return None


def _decode(content: bytes | str) -> str:
    if isinstance(content, str):
        return content.lstrip("﻿")
    try:
        return content.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise UnreadableFile(f"content is not UTF-8: {exc}") from None


def parse_table(content: bytes | str, family: TableFamily | DetectedFile, *,
                year: int | None = None, filename: str | None = None) -> ParsedTable:
    """Parse one WNVDB CSV file.

    Malformed rows are skipped and reported as :class:`RowIssue`; the parse
    itself only fails on a missing column or an empty table.
    """
    if isinstance(family, DetectedFile):
        family, year = family.family, family.year if year is None else year
    text = _decode(content)
    first = text.split("\n", 1)[0]
    delimiter = ";" if ";" in first and "," not in first else ","
    try:
        rows = list(csv.reader(io.StringIO(text, newline=""), delimiter=delimiter))
    except csv.Error as exc:
        raise UnreadableFile(f"not parseable as CSV: {exc}") from None
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise EmptyFile("no header row")

    header = [h.strip() for h in rows[0]]
    issues: list[RowIssue] = []

    def issue(line, column, severity, message):
        issues.append(RowIssue(line, column, severity, message, filename))

    missing = [c for c in family.required_columns(year) if c not in header]
    if missing:
        raise HeaderMismatch(f"missing columns {missing} for {family.kind.value}")
    if len(set(header)) != len(header):
        raise HeaderMismatch(f"duplicate column names in header {header}")
    known = [c for c in header if c in family.expected_columns]
    if known != [c for c in family.expected_columns if c in header]:
        issue(1, None, "warning", "columns are reordered relative to the published layout")
    for extra in (c for c in header if c not in family.expected_columns):
        issue(1, extra, "warning", f"unexpected column {extra!r} ignored")
    if len(rows) == 1:
        raise EmptyFile("header only, no data rows")

    parser = _RowParser(family, year)
    records, lines = [], []
    for line, cells in enumerate(rows[1:], start=2):
        if len(cells) != len(header):
            issue(line, None, "error", f"expected {len(header)} fields, found {len(cells)}")
            continue
        row = {h: c for h, c in zip(header, cells) if h in family.expected_columns}
        try:
            record, warnings = parser.parse(row)
        except _RowError as exc:
            issue(line, exc.column, "error", str(exc))
            continue
        for column, message in warnings:
            issue(line, column, "warning", message)
        records.append(record)
        lines.append(line)
    return ParsedTable(records, issues, lines)


def _fmt_count(value: int | None) -> str:
    return NA_OUT if value is None else str(value)


def _fmt(value) -> str:
    if value is None:
        return NA_OUT
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _cell(record: SurveillanceRecord, column: str) -> str:
    geo = record.geo
    if column == "url_bollettino":
        return record.bulletin_url
    if column == "data":
        return record.week_date.isoformat()
    if column == "host":
        return str(int(record.host))
    if column == "ospite_recettivo":
        return record.host.label
    if column == "codice_regione":
        return geo.region_code
    if column == "denominazione_regione":
        return geo.region_name
    if column == "codice_provincia":
        return _fmt(geo.province_code)
    if column == "denominazione_provincia":
        return _fmt(geo.province_name)
    if column == "sigla_provincia":
        return _fmt(geo.province_abbrev)
    if column in ("lat", "long"):
        return _fmt(getattr(geo, column))
    if column == "eta":
        return (record.age or AgeClass.MISSING).value
    if column == "tipo_infezione":
        return (record.infection_type or InfectionType.MISSING).value
    if column == "specie":
        return _fmt(record.species)
    if column == "nuovi_casi":
        return _fmt_count(record.new_cases)
    if column == "casi_totali":
        return str(record.total_cases)
    if column == "nuovi_morti_abbattuti":
        return _fmt_count(record.new_deaths)
    if column == "totale_morti_abbattuti":
        return _fmt_count(record.total_deaths)
    if column == "equidi_presenti_focolaio":
        return _fmt_count(record.outbreak_equids)
    raise KeyError(column)


_OPTIONAL_FIELD = {"eta": "age", "tipo_infezione": "infection_type"}


def format_table(records: Iterable[SurveillanceRecord], family: TableFamily) -> str:
    """Serialise records in the family's published column layout; NA is written as ``NA``."""
    records = list(records)
    optional = dict(family.optional_until)
    columns = [
        c for c in family.expected_columns
        if c not in optional or any(getattr(r, _OPTIONAL_FIELD[c]) is not None for r in records)
    ]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for record in records:
        writer.writerow([_cell(record, c) for c in columns])
    return out.getvalue()


def record_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(SurveillanceRecord))
