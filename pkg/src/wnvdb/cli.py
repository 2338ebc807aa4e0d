"""``wnvdb`` command line: validate, preprocess, stats, fit, forecast, join-weather.

Exit codes: 0 success, 1 data-validation failure, 2 I/O or usage failure,
3 non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

from . import analytics, estimation, pipeline
from .corpus import Corpus, load_corpus
from .errors import AllStartsFailed, NotConverged, SampleTooLarge, WNVError
from .geo import load_registry
from .schema import FamilyKind, Host

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2, 3

HOST_CHOICES = [h.label for h in Host]


class UsageError(Exception):
    pass


def _tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_atomic(path: Path, text: str) -> Path:
    """Write UTF-8 text via a temporary file in the same directory and rename it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: list[Path] = field(default_factory=list)
    outputs: list[Path] = field(default_factory=list)
    started: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def write(self, out_dir: Path) -> Path:
        data = {
            "command": self.command,
            "tool_version": _tool_version(),
            "config": self.config,
            "inputs": [{"path": str(p), "sha256": sha256(p)} for p in self.inputs],
            "outputs": [{"path": str(p), "sha256": sha256(p)} for p in self.outputs],
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
        }
        return write_atomic(out_dir / f"manifest-{self.command}.json", json.dumps(data, indent=2) + "\n")


def _emit(manifest: RunManifest, out_dir: Path, name: str, text: str) -> Path:
    path = write_atomic(out_dir / name, text)
    manifest.outputs.append(path)
    return path


def _config_of(args) -> dict:
    skip = {"func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _data_dir(args) -> Path:
    if args.data_dir is None:
        raise UsageError("--data-dir is required (or set WNV_DATA_DIR)")
    return Path(args.data_dir)


def _load(args) -> Corpus:
    return load_corpus(_data_dir(args))


def cmd_validate(args) -> int:
    corpus = _load(args)
    out = Path(args.out)
    manifest = RunManifest("validate", _config_of(args), inputs=corpus.paths())
    issues = corpus.validation_issues()
    lines = "".join(json.dumps(i, ensure_ascii=False) + "\n" for i in issues)
    _emit(manifest, out, "issues.jsonl", lines)
    manifest.write(out)
    n_err = sum(i["severity"] == "error" for i in issues)
    print(f"{len(corpus.files)} files, {n_err} errors, {len(issues) - n_err} warnings", file=sys.stderr)
    return EXIT_DATA if n_err else EXIT_OK


_HOST_FAMILY = {
    Host.HUMANS: {"region": FamilyKind.HUMAN_REGION, "province": FamilyKind.HUMAN_PROVINCE},
    Host.EQUIDS: FamilyKind.EQUID,
    Host.TARGET_BIRDS: FamilyKind.TARGET_BIRDS,
    Host.WILD_BIRDS: FamilyKind.WILD_BIRDS,
    Host.MOSQUITOES: FamilyKind.ENTOMOLOGICAL,
}


def _source_family(corpus: Corpus, host: Host, level: str, source: str | None) -> FamilyKind:
    if source:
        return FamilyKind(source)
    if level == "national" and FamilyKind.NATIONAL_TREND in corpus.kinds():
        return FamilyKind.NATIONAL_TREND
    choice = _HOST_FAMILY[host]
    if isinstance(choice, dict):
        choice = choice["province" if level == "province" else "region"]
    if choice not in corpus.kinds() and FamilyKind.LATEST_ROLLUP in corpus.kinds():
        return FamilyKind.LATEST_ROLLUP
    return choice


def cmd_preprocess(args) -> int:
    corpus = _load(args)
    host = Host.parse(args.host)
    family = _source_family(corpus, host, args.level, args.source)
    records = corpus.records(family, host, args.year)
    if not records:
        print(f"no {host.label} records in {family.value} files", file=sys.stderr)
        return EXIT_DATA
    out = Path(args.out)
    manifest = RunManifest("preprocess", _config_of(args), inputs=corpus.paths())
    series = pipeline.build_series(records, args.level, by=args.by)
    _emit(manifest, out, "series.csv", pipeline.format_series_csv(series))
    n = min(100, len(records)) if args.qa_sample is None else args.qa_sample
    try:
        sample = pipeline.qa_sample(records, n, args.seed)
    except SampleTooLarge as exc:
        raise UsageError(str(exc)) from None
    _emit(manifest, out, "qa-sample.csv", pipeline.format_qa_csv(sample))
    manifest.write(out)
    print(f"{len(series)} series from {len(records)} {family.value} records", file=sys.stderr)
    return EXIT_OK


def compute_stats(corpus: Corpus, host: Host, source: str | None = None,
                  exclude_years=()) -> dict[str, analytics.StatReport]:
    """All descriptive reports for one host, keyed by report name."""
    reports = {}
    region_src = corpus.records(_source_family(corpus, host, "region", source), host)
    province_src = corpus.records(_source_family(corpus, host, "province", source), host)
    reports["yearly"] = analytics.yearly_totals(region_src, host, exclude_years=exclude_years)
    reports["region"] = analytics.regional_breakdown(region_src, host, "region")
    if any(r.geo is not None and r.geo.province_code is not None for r in province_src):
        reports["province"] = analytics.regional_breakdown(province_src, host, "province")
    if host is Host.HUMANS:
        if any(r.age is not None for r in province_src):
            reports["age"] = analytics.age_composition(province_src)
        if any(r.infection_type is not None for r in province_src):
            reports["infection"] = analytics.infection_composition(province_src, by_year=True)
    else:
        reports["host-regions"] = analytics.host_region_composition(region_src, host)
        reports["host-regions-pooled"] = analytics.host_region_composition(region_src, host, pooled=True)
    return reports


def cmd_stats(args) -> int:
    corpus = _load(args)
    host = Host.parse(args.host)
    reports = compute_stats(corpus, host, args.source, args.exclude_year or ())
    out = Path(args.out)
    manifest = RunManifest("stats", _config_of(args), inputs=corpus.paths())
    for name, rep in reports.items():
        _emit(manifest, out, f"stats-{name}.csv", analytics.format_report_csv(rep))
    payload = {name: rep.as_dict() for name, rep in reports.items()}
    _emit(manifest, out, "stats.json", json.dumps(payload, indent=2, ensure_ascii=False) + "\n")
    manifest.write(out)
    yearly = reports["yearly"]
    print(f"{host.label}: total {yearly.total}, yearly mean {yearly.mean:.1f}")
    for row in reports["region"].rows[:5]:
        print(f"  {row.key[0]}: {row.count}")
    return EXIT_OK


def _region_code(value: str) -> str:
    if value.isdigit():
        return value.zfill(2)
    entry = load_registry().region_by_name(value)
    if entry is None:
        raise UsageError(f"unknown region {value!r}")
    return entry.code


def select_series(series: list[pipeline.WeeklySeries], year=None, host=None, region=None) -> pipeline.WeeklySeries:
    chosen = [
        s for s in series
        if (year is None or s.key.year == year)
        and (host is None or s.key.host == Host.parse(host))
        and (region is None or s.key.geo_id == _region_code(region))
    ]
    if len(chosen) != 1:
        labels = ", ".join(s.key.label() for s in chosen) or "none"
        raise UsageError(f"selection must match exactly one series, matched: {labels}")
    return chosen[0]


def _read_series(args) -> tuple[Path, pipeline.WeeklySeries]:
    path = Path(args.series)
    series = pipeline.parse_series_csv(path.read_text(encoding="utf-8"))
    return path, select_series(series, args.year, args.host, args.region)


def _curve_csv(series, result, lower, upper) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("week", "data", "observed", "fitted", "lower", "upper"))
    for t, (d, y, f, lo, hi) in enumerate(zip(series.dates, series.incidence, result.fitted_incidence,
                                              lower, upper), start=1):
        writer.writerow((t, d.isoformat(), "NA" if y is None else y, repr(f), repr(float(lo)), repr(float(hi))))
    return out.getvalue()


def _fit_config(args, fixed=None) -> estimation.FitConfig:
    return estimation.FitConfig(family=args.family, variant=args.variant, seed=args.seed,
                                n_starts=args.n_starts, level=args.level, fixed=fixed or {})


def cmd_fit(args) -> int:
    path, series = _read_series(args)
    result = estimation.fit(series, _fit_config(args))
    out = Path(args.out)
    manifest = RunManifest("fit", _config_of(args), inputs=[path])
    _emit(manifest, out, "fit.json", result.to_json())
    if result.converged:
        lower, upper = estimation.fitted_bands(result, series, args.level, args.n_sims, args.seed)
    else:
        lower = upper = result.fitted_incidence
    _emit(manifest, out, "fit-curve.csv", _curve_csv(series, result, lower, upper))
    manifest.write(out)
    r2 = "NA" if result.r_squared != result.r_squared else f"{result.r_squared:.3f}"
    print(f"{series.key.label()}: converged={result.converged} loglik={result.loglik_hat:.3f} R2={r2}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _forecast_csv(series, fc: estimation.Forecast, observed=None) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("week", "data", "point", "lower", "upper", "observed"))
    last = series.dates[-1]
    for i, (w, p, (lo, hi)) in enumerate(zip(fc.weeks, fc.point, fc.interval)):
        obs = "NA" if observed is None or observed[i] is None else observed[i]
        writer.writerow((w, (last + timedelta(weeks=i + 1)).isoformat(), repr(p), repr(lo), repr(hi), obs))
    return out.getvalue()


def cmd_forecast(args) -> int:
    if args.horizon is not None and args.horizon < 1:
        raise UsageError("--horizon must be at least 1")
    fit_path = Path(args.fit)
    result = estimation.FitResult.from_json(fit_path.read_text(encoding="utf-8"))
    series_path, series = _read_series(args)
    out = Path(args.out)
    manifest = RunManifest("forecast", _config_of(args), inputs=[fit_path, series_path])
    if not result.converged:
        print("fit did not converge; refusing to forecast", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    if args.holdout:
        config = estimation.FitConfig.from_dict(dict(result.config.as_dict(), seed=args.seed))
        report = estimation.holdout_check(series, args.holdout, config, args.level, args.n_sims, args.seed)
        train = series.truncate(series.T - args.holdout)
        fc = report.forecast
        _emit(manifest, out, "forecast.json", fc.to_json())
        _emit(manifest, out, "forecast.csv", _forecast_csv(train, fc, report.observed))
        manifest.write(out)
        print(f"holdout: {report.hits}/{report.total} inside {args.level:.0%} interval")
        return EXIT_OK
    if args.horizon is None:
        raise UsageError("--horizon is required without --holdout")
    fc = estimation.forecast(result, series, args.horizon, args.level, args.n_sims, args.seed)
    _emit(manifest, out, "forecast.json", fc.to_json())
    _emit(manifest, out, "forecast.csv", _forecast_csv(series, fc))
    manifest.write(out)
    return EXIT_OK


def cmd_join_weather(args) -> int:
    series_path, weather_path = Path(args.series), Path(args.weather)
    series = [s for s in pipeline.parse_series_csv(series_path.read_text(encoding="utf-8"))
              if s.key.level == "province"]
    weather = analytics.parse_weather_csv(weather_path.read_text(encoding="utf-8"))
    joined = analytics.join_weather(series, weather)
    out = Path(args.out)
    manifest = RunManifest("join-weather", _config_of(args), inputs=[series_path, weather_path])
    _emit(manifest, out, "joined.csv", analytics.format_joined_csv(joined))
    manifest.write(out)
    return EXIT_OK


def _level(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("level must be in (0, 1)")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=1)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data-dir", default=os.environ.get("WNV_DATA_DIR"))
    data.add_argument("--source", choices=[k.value for k in FamilyKind],
                      help="table family to read instead of the per-host default")

    select = argparse.ArgumentParser(add_help=False)
    select.add_argument("--series", required=True, help="series CSV written by preprocess")
    select.add_argument("--year", type=int)
    select.add_argument("--host", choices=HOST_CHOICES)
    select.add_argument("--region", help="region name or ISTAT code")
    select.add_argument("--level", type=_level, default=0.95)
    select.add_argument("--n-sims", type=int, default=2000)

    parser = argparse.ArgumentParser(prog="wnvdb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common, data], help="audit every CSV in a WNVDB tree")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("preprocess", parents=[common, data], help="build weekly series and a QA sample")
    p.add_argument("--host", choices=HOST_CHOICES, default="umani")
    p.add_argument("--year", type=int)
    p.add_argument("--level", choices=pipeline.LEVELS, default="region")
    p.add_argument("--by", choices=pipeline.STRATA)
    p.add_argument("--qa-sample", type=int)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("stats", parents=[common, data], help="descriptive totals and compositions")
    p.add_argument("--host", choices=HOST_CHOICES, default="umani")
    p.add_argument("--exclude-year", type=int, action="append")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("fit", parents=[common, select], help="fit the Richards count model to one series")
    p.add_argument("--family", choices=["poisson", "negbin"], default="poisson")
    p.add_argument("--variant", choices=["baseline", "drift"], default="baseline")
    p.add_argument("--n-starts", type=int, default=20)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", parents=[common, select], help="short-term forecast from a fit")
    p.add_argument("--fit", required=True, help="fit.json written by the fit command")
    p.add_argument("--horizon", type=int)
    p.add_argument("--holdout", type=int, help="refit without the last K weeks and report coverage")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("join-weather", parents=[common], help="attach weekly weather to province series")
    p.add_argument("--series", required=True)
    p.add_argument("--weather", required=True)
    p.set_defaults(func=cmd_join_weather)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        try:
            defaults = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        defaults = {k.replace("-", "_"): v for k, v in defaults.items()}
        for action in parser._subparsers._group_actions[0].choices.values():
            action.set_defaults(**defaults)
        args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NotConverged, AllStartsFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except WNVError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
