"""Command line front door wiring all pipeline stages.

Subcommands: fetch, organize, pack, process, stats, run, e2e. Exit codes:
0 success, 2 usage error, 3 invalid configuration, 1 any other pipeline
error (printed as a one-line machine-parsable ``error: <Class>: <detail>``).
Every stage run writes a human-readable and a machine-readable report.
"""

from __future__ import annotations

import argparse
import datetime as dt
import sys
from pathlib import Path

import airtracks
from airtracks import archive as archive_mod
from airtracks import config as config_mod
from airtracks import ingest, runner, stats, tracks
from airtracks.config import PipelineConfig
from airtracks.errors import ConfigError, PipelineError
from airtracks.geometry import LandMask, load_filter_polygon
from airtracks.registry import RegistryLookup, build_lookup, parse_registry
from airtracks.runner import TaskSkipped, TaskSpec
from airtracks.terrain import ElevationService, TerrainCache


def main(argv: list[str] | None = None) -> int:
    return cmd_dispatch(sys.argv[1:] if argv is None else argv)


def cmd_dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: ConfigError: {exc}", file=sys.stderr)
        return 3
    except PipelineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airtracks",
        description="Organize, archive, process, and summarize aircraft surveillance data.",
    )
    parser.add_argument("--version", action="version", version=f"airtracks {airtracks.__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="download one day of raw hourly files")
    p.add_argument("--date", required=True)
    p.add_argument("--template", required=True, help="URL template with {date} and {hour:02d}")
    p.add_argument("--dest", required=True)
    p.add_argument("--hours", default=",".join(str(h) for h in range(24)))
    p.add_argument("--checksum-template", default=None)
    p.set_defaults(func=_cmd_fetch)

    p = sub.add_parser("organize", help="filter raw hours into the hierarchy")
    p.add_argument("--input", required=True, help="raw root of day-stamped directories")
    p.add_argument("--root", required=True, help="organized output root")
    p.add_argument("--registry", required=True, help="directory of <fmt>_<year>.csv registries")
    p.add_argument("--polygon", required=True, help="filter polygon GeoJSON")
    p.add_argument("--year", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--strategy", default="dynamic-queue", choices=runner.STRATEGIES)
    p.add_argument("--report", default=None, help="report directory (default <root>/reports)")
    p.set_defaults(func=_cmd_organize)

    p = sub.add_parser("pack", help="zip every bottom-tier directory")
    p.add_argument("--organized", required=True)
    p.add_argument("--archives", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--strategy", default="dynamic-queue", choices=runner.STRATEGIES)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_pack)

    p = sub.add_parser("process", help="clean archives into 1 Hz track files")
    p.add_argument("--archives", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--terrain", required=True)
    p.add_argument("--land", default=None)
    p.add_argument("--airspace", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--strategy", default="dynamic-queue", choices=runner.STRATEGIES)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_process)

    p = sub.add_parser("stats", help="summary tables from processed tracks")
    p.add_argument("--processed", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", default=None, help="binning config file")
    p.add_argument("--archives", default=None, help="archive root for the type distribution")
    p.add_argument("--organized", default=None, help="organized root for the type distribution")
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("run", help="run one stage from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--stage", required=True, choices=("organize", "pack", "process"))
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--strategy", default=None, choices=runner.STRATEGIES)
    p.add_argument("--retry-failed", default=None, help="machine report; rerun its failed tasks")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("e2e", help="organize + pack + process + stats in one run")
    p.add_argument("--config", required=True)
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=_cmd_e2e)
    return parser


def _cmd_fetch(args) -> int:
    hours = [int(h) for h in args.hours.split(",") if h.strip()]
    result = ingest.fetch_day(
        args.date,
        args.template,
        args.dest,
        hours=hours,
        checksum_template=args.checksum_template,
    )
    print(
        f"fetched {len(result.files)} files "
        f"({len(result.skipped_existing)} already current, "
        f"{len(result.missing_hours)} hours missing, "
        f"{len(result.discarded)} discarded)"
    )
    for hour in result.missing_hours:
        print(f"warning: hour {hour:02d} not available", file=sys.stderr)
    for url in result.discarded:
        print(f"warning: checksum mismatch, discarded {url}", file=sys.stderr)
    return 0


def _load_lookups(registry_root: Path, years) -> dict[int, RegistryLookup]:
    lookups: dict[int, RegistryLookup] = {}
    for year in years:
        entries = []
        for path in sorted(Path(registry_root).glob(f"*_{year}.csv")):
            fmt = path.name.split("_")[0].upper()
            got, _skipped = parse_registry(path, fmt, year)
            entries.extend(got)
        lookups[year] = build_lookup(entries, year)
    return lookups


def _discover_hours(raw_root: Path, years) -> list[tuple[Path, object]]:
    found = []
    for day_dir in sorted(p for p in Path(raw_root).iterdir() if p.is_dir()):
        for path in sorted(day_dir.iterdir()):
            stamp = ingest.hour_stamp_from_name(path.name)
            if stamp is None:
                continue
            if years and stamp.year not in years:
                continue
            found.append((path, stamp))
    return found


def _write_reports(results, report_dir: Path, stage: str) -> None:
    report_dir.mkdir(parents=True, exist_ok=True)
    if not results:
        return
    report = runner.summarize(results)
    (report_dir / f"{stage}.txt").write_text(runner.format_report(report, results))
    runner.write_machine_report(results, report_dir / f"{stage}.tsv")


def _stage_organize(cfg: PipelineConfig, report_dir: Path):
    polygon = load_filter_polygon(cfg.polygon_file)
    lookups = _load_lookups(Path(cfg.registry_root), cfg.years)
    hours = _discover_hours(Path(cfg.raw_root), cfg.years)
    by_ref = {str(path): (path, stamp) for path, stamp in hours}
    specs = runner.plan("organize", by_ref)

    def task(spec: TaskSpec) -> dict[str, int]:
        path, stamp = by_ref[spec.input_ref]
        if not path.exists():
            raise TaskSkipped(f"hour file vanished: {path}")
        st = ingest.organize_hour(path, stamp, lookups[stamp.year], polygon, cfg.organized_root)
        return {
            "raw": st.raw_count,
            "quality_dropped": st.quality_dropped,
            "geo_dropped": st.geo_dropped,
            "organized": st.organized_count,
            "malformed": st.malformed,
        }

    results = runner.execute(specs, task, cfg.workers, cfg.strategy)
    _write_reports(results, report_dir, "organize")
    return results


def _stage_pack(cfg: PipelineConfig, report_dir: Path):
    leaves = archive_mod.iter_leaf_dirs(cfg.organized_root)
    hints = {str(p): sum(1 for f in p.iterdir() if f.is_file()) for p in leaves}
    specs = runner.plan("pack", hints, size_hints=hints)

    def task(spec: TaskSpec) -> dict[str, int]:
        leaf = Path(spec.input_ref)
        target = archive_mod.archive_path_for(leaf, cfg.organized_root, cfg.archive_root)
        arch = archive_mod.pack_leaf(leaf, target)
        return {"archives": 1, "members": arch.member_count} if arch else {"archives": 0, "members": 0}

    results = runner.execute(specs, task, cfg.workers, cfg.strategy)
    _write_reports(results, report_dir, "pack")
    return results


def _build_elevation(cfg: PipelineConfig) -> ElevationService:
    land = LandMask.from_geojson(cfg.land_file) if cfg.land_file else None
    return ElevationService(TerrainCache(cfg.terrain_root or None), land)


def _stage_process(cfg: PipelineConfig, report_dir: Path):
    archives = sorted(Path(cfg.archive_root).glob("*/*/*/*.zip"))
    hints = {str(p): p.stat().st_size for p in archives}
    specs = runner.plan("process", hints, size_hints=hints)
    elevation = _build_elevation(cfg)
    volumes = (
        tracks.load_airspace_volumes(cfg.airspace_file) if cfg.airspace_file else []
    )
    params = cfg.outlier_params()

    def task(spec: TaskSpec) -> dict[str, int]:
        counts = tracks.process_archive(
            spec.input_ref, cfg.archive_root, cfg.processed_root, params, elevation, volumes
        )
        return counts.as_dict()

    results = runner.execute(specs, task, cfg.workers, cfg.strategy)
    _write_reports(results, report_dir, "process")
    return results


def _stage_stats(cfg: PipelineConfig, emit_plots: bool = False):
    return stats.write_stats_outputs(
        cfg.processed_root,
        cfg.archive_root,
        cfg.stats_root,
        years=cfg.years,
        emit_plots=emit_plots,
    )


def _cmd_organize(args) -> int:
    years = (args.year,) if args.year else _years_present(Path(args.input))
    cfg = PipelineConfig(
        raw_root=args.input,
        organized_root=args.root,
        registry_root=args.registry,
        polygon_file=args.polygon,
        years=years,
        workers=args.workers,
        strategy=args.strategy,
    )
    report_dir = Path(args.report) if args.report else Path(args.root) / "reports"
    results = _stage_organize(cfg, report_dir)
    return _finish(results)


def _years_present(raw_root: Path) -> tuple[int, ...]:
    years = set()
    for day_dir in raw_root.iterdir():
        try:
            years.add(dt.date.fromisoformat(day_dir.name).year)
        except ValueError:
            continue
    if not years:
        raise ConfigError(f"no day-stamped directories under {raw_root}")
    return tuple(sorted(years))


def _cmd_pack(args) -> int:
    cfg = PipelineConfig(
        organized_root=args.organized,
        archive_root=args.archives,
        years=(0,),
        workers=args.workers,
        strategy=args.strategy,
    )
    report_dir = Path(args.report) if args.report else Path(args.archives) / "reports"
    results = _stage_pack(cfg, report_dir)
    return _finish(results)


def _cmd_process(args) -> int:
    cfg = PipelineConfig(
        archive_root=args.archives,
        processed_root=args.out,
        terrain_root=args.terrain,
        land_file=args.land or "",
        airspace_file=args.airspace or "",
        years=(0,),
        workers=args.workers,
        strategy=args.strategy,
    )
    report_dir = Path(args.report) if args.report else Path(args.out) / "reports"
    results = _stage_process(cfg, report_dir)
    return _finish(results)


def _parse_bins(path: str | None) -> stats.BinningConfig:
    if path is None:
        return stats.BinningConfig()
    values: dict[str, float] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = float(value.strip())
    return stats.BinningConfig(
        agl_band_ft=(values.get("agl_lo_ft", 50.0), values.get("agl_hi_ft", 5000.0)),
        alt_bin_ft=values.get("alt_bin_ft", 250.0),
        speed_range_kt=(values.get("speed_lo_kt", 0.0), values.get("speed_hi_kt", 600.0)),
        speed_bin_kt=values.get("speed_bin_kt", 10.0),
    )


def _cmd_stats(args) -> int:
    source = args.archives or args.organized
    stats.write_stats_outputs(
        args.processed,
        source,
        args.out,
        binning=_parse_bins(args.bins),
        emit_plots=args.plots,
    )
    print(f"stats written to {args.out}")
    return 0


def _cmd_run(args) -> int:
    cfg = config_mod.load_config(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    if args.strategy is not None:
        cfg.strategy = args.strategy
    report_dir = Path(cfg.stats_root or cfg.organized_root or ".") / "reports"

    if args.retry_failed:
        prior = runner.read_machine_report(args.retry_failed)
        failed = [r.spec for r in prior if r.outcome == "failed"]
        if not failed:
            print("nothing to retry")
            return 0
        results = _retry(cfg, args.stage, failed, report_dir)
        return _finish(results)

    if args.stage == "organize":
        results = _stage_organize(cfg, report_dir)
    elif args.stage == "pack":
        results = _stage_pack(cfg, report_dir)
    else:
        results = _stage_process(cfg, report_dir)
    return _finish(results)


def _retry(cfg: PipelineConfig, stage: str, failed_specs, report_dir: Path):
    refs = {s.input_ref for s in failed_specs}
    if stage == "organize":
        polygon = load_filter_polygon(cfg.polygon_file)
        lookups = _load_lookups(Path(cfg.registry_root), cfg.years)
        hours = [(p, s) for p, s in _discover_hours(Path(cfg.raw_root), cfg.years) if str(p) in refs]
        by_ref = {str(p): (p, s) for p, s in hours}
        specs = runner.plan("organize", by_ref)

        def task(spec: TaskSpec) -> dict[str, int]:
            path, stamp = by_ref[spec.input_ref]
            st = ingest.organize_hour(path, stamp, lookups[stamp.year], polygon, cfg.organized_root)
            return {"raw": st.raw_count, "quality_dropped": st.quality_dropped,
                    "geo_dropped": st.geo_dropped, "organized": st.organized_count,
                    "malformed": st.malformed}

        results = runner.execute(specs, task, cfg.workers, cfg.strategy)
    elif stage == "pack":
        specs = runner.plan("pack", refs)

        def task(spec: TaskSpec) -> dict[str, int]:
            leaf = Path(spec.input_ref)
            target = archive_mod.archive_path_for(leaf, cfg.organized_root, cfg.archive_root)
            arch = archive_mod.pack_leaf(leaf, target)
            return {"archives": 1, "members": arch.member_count} if arch else {}

        results = runner.execute(specs, task, cfg.workers, cfg.strategy)
    else:
        specs = runner.plan("process", refs)
        elevation = _build_elevation(cfg)
        volumes = tracks.load_airspace_volumes(cfg.airspace_file) if cfg.airspace_file else []
        params = cfg.outlier_params()

        def task(spec: TaskSpec) -> dict[str, int]:
            return tracks.process_archive(
                spec.input_ref, cfg.archive_root, cfg.processed_root, params, elevation, volumes
            ).as_dict()

        results = runner.execute(specs, task, cfg.workers, cfg.strategy)
    _write_reports(results, report_dir, f"{stage}-retry")
    return results


def _finish(results) -> int:
    failed = [r for r in results if r.outcome == "failed"]
    if results:
        report = runner.summarize(results)
        print(
            f"{results[0].spec.stage}: {report.ok} ok, {report.skipped} skipped, "
            f"{report.failed} failed"
        )
    for r in failed:
        print(f"failed: {r.spec.input_ref}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def _cmd_e2e(args) -> int:
    cfg = config_mod.load_config(args.config)
    return run_e2e(cfg, emit_plots=args.plots)


def run_e2e(cfg: PipelineConfig, emit_plots: bool = False) -> int:
    """All four stages over one config; writes reports and a count manifest."""
    cfg.validate()
    report_dir = Path(cfg.stats_root) / "reports"
    organize_results = _stage_organize(cfg, report_dir)
    pack_results = _stage_pack(cfg, report_dir)
    process_results = _stage_process(cfg, report_dir)
    agg = _stage_stats(cfg, emit_plots=emit_plots)

    manifest = build_count_manifest(organize_results, pack_results, process_results, agg)
    (Path(cfg.stats_root) / "manifest.tsv").write_text(manifest)

    rc = 0
    for results in (organize_results, pack_results, process_results):
        if any(r.outcome == "failed" for r in results):
            rc = 1
    total_org = sum(r.counts.get("organized", 0) for r in organize_results)
    total_pts = sum(r.counts.get("points", 0) for r in process_results)
    print(f"e2e complete: organized={total_org} processed_points={total_pts}")
    return rc


_ORG_KEYS = ("raw", "quality_dropped", "geo_dropped", "organized", "malformed")


def build_count_manifest(organize_results, pack_results, process_results, agg) -> str:
    """Stable, path-free counts for reproducibility checks."""
    lines = []
    org_rows = []
    for r in organize_results:
        stamp = ingest.hour_stamp_from_name(Path(r.spec.input_ref).name)
        label = stamp.label if stamp else Path(r.spec.input_ref).name
        org_rows.append((label, r.counts))
    for label, counts in sorted(org_rows):
        cells = "\t".join(f"{k}={counts.get(k, 0)}" for k in _ORG_KEYS)
        lines.append(f"organize\t{label}\t{cells}")
    totals = {k: sum(c.get(k, 0) for _, c in org_rows) for k in _ORG_KEYS}
    lines.append("organize_total\t-\t" + "\t".join(f"{k}={totals[k]}" for k in _ORG_KEYS))

    n_arch = sum(r.counts.get("archives", 0) for r in pack_results)
    n_members = sum(r.counts.get("members", 0) for r in pack_results)
    lines.append(f"pack_total\t-\tarchives={n_arch}\tmembers={n_members}")

    proc_totals: dict[str, int] = {}
    for r in process_results:
        for k, v in r.counts.items():
            proc_totals[k] = proc_totals.get(k, 0) + v
    cells = "\t".join(f"{k}={proc_totals[k]}" for k in sorted(proc_totals))
    lines.append(f"process_total\t-\t{cells}")

    for year in agg.years():
        row = {
            cls: n for (y, cls), n in sorted(agg.inband_points.items()) if y == year
        }
        cells = "\t".join(f"{cls}={row[cls]}" for cls in sorted(row))
        lines.append(f"stats_inband\t{year}\t{cells}")
        lines.append(f"stats_no_agl\t{year}\tpoints={agg.no_agl_points.get(year, 0)}")
    return "\n".join(lines) + "\n"


if __name__ == "__main__":
    raise SystemExit(main())
