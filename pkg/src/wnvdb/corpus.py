"""Load a WNVDB directory tree into parsed tables."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyFile, HeaderMismatch, UnknownFile, UnreadableFile, AmbiguousFile
from .geo import GeoRegistry, validate_geo
from .schema import FamilyKind, Host, ParsedTable, RowIssue, SurveillanceRecord, TableFamily, detect_family, parse_table


@dataclass
class LoadedFile:
    path: Path
    family: TableFamily
    year: int | None
    table: ParsedTable


@dataclass
class Corpus:
    root: Path
    files: list[LoadedFile] = field(default_factory=list)
    issues: list[RowIssue] = field(default_factory=list)  # file-level problems

    def records(self, kind: FamilyKind | None = None, host: Host | None = None,
                year: int | None = None) -> list[SurveillanceRecord]:
        out = []
        for f in self.files:
            if kind is not None and f.family.kind is not kind:
                continue
            out.extend(r for r in f.table.records
                       if (host is None or r.host == host) and (year is None or r.season == year))
        return out

    def kinds(self) -> set[FamilyKind]:
        return {f.family.kind for f in self.files}

    def paths(self) -> list[Path]:
        return [f.path for f in self.files]

    def validation_issues(self, registry: GeoRegistry | None = None) -> list[dict]:
        """Every parse and geography issue as a JSON-ready dict, in file order."""
        out = [i.as_dict() for i in self.issues]
        for f in self.files:
            rel = str(f.path.relative_to(self.root))
            out.extend(dict(i.as_dict(), file=rel) for i in f.table.issues)
            for g in validate_geo(f.table.records, registry):
                out.append(g.as_dict(rel, f.table.lines[g.index]))
        return out


def load_corpus(data_dir: str | os.PathLike) -> Corpus:
    """Parse every recognised CSV under ``data_dir``; unrecognised CSV names are reported as warnings."""
    root = Path(data_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"data directory not found: {root}")
    corpus = Corpus(root)
    for path in sorted(root.rglob("*.csv")):
        rel = str(path.relative_to(root))
        try:
            detected = detect_family(path.name)
        except (UnknownFile, AmbiguousFile) as exc:
            corpus.issues.append(RowIssue(0, None, "warning", f"unrecognised file name: {exc}", rel))
            continue
        try:
            table = parse_table(path.read_bytes(), detected, filename=rel)
        except (HeaderMismatch, EmptyFile, UnreadableFile) as exc:
            corpus.issues.append(RowIssue(0, None, "error", f"{type(exc).__name__}: {exc}", rel))
            continue
        corpus.files.append(LoadedFile(path, detected.family, detected.year, table))
    return corpus
