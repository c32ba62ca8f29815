"""Command-line entry point: ``cdrmob {ingest,density,stats,traj,synth}``.

Exit status is 0 on success, 1 on a usage error and 2 on a data error.
Errors are reported as one ``key=value`` line on stderr; a run summary goes
to stdout.  Every CSV written starts with ``#`` lines recording the tool
version, subcommand and parameters.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .config import StudyConfig, parse_floats, read_kv, split_list
from .errors import CdrError, InvalidConfig
from .frame import to_intrinsic
from .ingest import (
    DayKind,
    default_threads,
    format_timestamps,
    load_index,
    read_towers,
    write_index,
)
from .spatial import VoronoiPartition, build_sectors, density_table, read_sector_config
from .stats import (
    DEFAULT_DR_CUTOFF,
    DEFAULT_DT_WINDOW,
    DEFAULT_LOG_BINS,
    activity_sampling_groups,
    day_ends,
    day_kind_mask,
    displacements,
    empirical_distribution,
    fit_exponential,
    fit_truncated_power_law,
    gyration_radii,
    inter_event_times,
    rg_series_population,
    split_by_dayclass,
)
from .synth import GeneratorConfig, generate_population
from .trajectory import Trajectory

log = logging.getLogger("cdrmob")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(CdrError):
    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ----------------------------------------------------------------- helpers


def _need(path: str | None, what: str) -> str:
    if path is None:
        raise UsageError(f"--{what} is required")
    if not os.path.isfile(path):
        raise DataError(f"{what} file not found", path)
    return path


def _writable(path: str) -> str:
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise DataError("output directory does not exist", path)
    return path


def _provenance(args: argparse.Namespace, study: StudyConfig | None = None) -> list[str]:
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose", "threads")}
    lines = [f"cdrmob {__version__} {args.command}",
             "params: " + " ".join(f"{k}={_fmt(v)}" for k, v in params.items())]
    if study is not None:
        lines.append("study: " + " ".join(f"{k}={_fmt(v)}" for k, v in study.to_mapping().items()))
    return lines


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(_fmt(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _study(args) -> StudyConfig:
    if getattr(args, "config", None):
        return StudyConfig.from_file(_need(args.config, "config"))
    return StudyConfig()


def _load(args, study: StudyConfig):
    towers = read_towers(_need(args.towers, "towers"))
    src = _need(args.index if hasattr(args, "index") else args.cdr, "index" if hasattr(args, "index") else "cdr")
    index = load_index(src, towers, study, strict=args.strict, threads=args.threads)
    return towers, index


def _write_csv(path: str, header: Iterable[str], columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for h in header:
            fh.write(f"# {h}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _summary(command: str, t0: float, **fields) -> None:
    parts = " ".join(f"{k}={_fmt(v)}" for k, v in fields.items())
    print(f"summary command={command} {parts} runtime_s={time.perf_counter() - t0:.3f}")


def _maybe_plot(args, render) -> None:
    if getattr(args, "plot", None):
        _writable(args.plot)
        render(args.plot)


# -------------------------------------------------------------- commands


def cmd_ingest(args) -> None:
    t0 = time.perf_counter()
    study = _study(args)
    _writable(args.out)
    towers, index = _load(args, study)
    rep = index.report
    write_index(args.out, index, _provenance(args, study))
    for k, v in rep.as_dict().items():
        log.info("ingest %s=%s", k, v)
    _summary("ingest", t0, records_read=rep.lines - rep.comments, records_kept=index.n_records,
             dropped=rep.dropped, subscribers=len(index), subscribers_dropped=rep.subscribers_dropped)


def cmd_density(args) -> None:
    t0 = time.perf_counter()
    study = _study(args)
    _writable(args.out)
    towers, index = _load(args, study)
    mapping = read_sector_config(_need(args.sectors, "sectors")) if args.sectors else None
    sectors = build_sectors(towers, mapping, study)
    table = density_table(index, sectors, VoronoiPartition(towers), study)
    _write_csv(args.out, _provenance(args, study),
               ["bin_type", "bin_value", "sector", "count", "ratio", "sector_share"], table.rows())
    _maybe_plot(args, lambda p: _plots().density_figure(table, p))
    _summary("density", t0, records_read=index.n_records, dropped=index.report.dropped,
             towers=len(towers))


def _plots():
    from . import plotting

    return plotting


def _dayclass(value: str) -> DayKind | None:
    return {"all": None, "work": DayKind.WORK_DAY, "off": DayKind.OFF_DAY}[value]


def _window(raw: str | None) -> tuple[float, float] | None:
    if raw is None:
        return DEFAULT_DT_WINDOW
    if raw.strip().lower() == "none":
        return None
    lo, hi = parse_floats(raw, 2, "window")
    if not 0 <= lo < hi:
        raise InvalidConfig("window must satisfy 0 <= lo < hi")
    return lo, hi


def _fit(values: np.ndarray, measure: str, args, window) -> list:
    """Fits requested for one sample; failures are reported, not raised."""
    kinds = args.fit
    if kinds == "auto":
        kinds = "both" if measure == "dt" else "tpl"
    out = []
    positive = values[values > 0]
    if kinds in ("exponential", "both"):
        lo, hi = (window if (measure == "dt" and window is not None) else (None, None))
        out.append(("exponential", lambda: fit_exponential(positive, lo, hi)))
    if kinds in ("tpl", "both"):
        if args.xmin is not None:
            x_min = args.xmin
        elif measure == "dt" and window is not None and window[0] > 0:
            x_min = window[0]
        else:
            x_min = float(positive.min()) if positive.size else 1.0
        if measure == "dt" and window is not None:
            x_max = window[1]
        elif measure == "dr" and args.cutoff is not None:
            x_max = args.cutoff
        else:
            x_max = math.inf
        out.append(("truncated_power_law", lambda: fit_truncated_power_law(positive, x_min, x_max)))
    results = []
    for name, run in out:
        try:
            results.append((name, run(), None))
        except CdrError as exc:
            results.append((name, None, f"{type(exc).__name__}: {exc}"))
    return results


def _fit_lines(label: str, results) -> list[str]:
    lines = []
    for name, fit, err in results:
        prefix = f"fit group={label} " if label else "fit "
        if fit is None:
            lines.append(f"{prefix}model={name} status=failed reason={json.dumps(err)}")
        else:
            body = " ".join(f"{k}={_fmt(v)}" for k, v in fit.summary().items())
            lines.append(f"{prefix}{body} status=ok")
    return lines


def cmd_stats(args) -> None:
    t0 = time.perf_counter()
    study = _study(args)
    _writable(args.out)
    towers, index = _load(args, study)
    kind = _dayclass(args.dayclass)
    window = _window(args.window)
    if args.measure in ("rg", "rg-series") and kind is not None:
        index = index.select_rows(day_kind_mask(index.time_us, kind, study))
    groups: list[tuple[str, set[str] | None]] = [("", None)]
    if args.groups:
        edges = [int(float(e)) for e in split_list(args.groups)]
        if not edges:
            raise UsageError("--groups needs at least one edge")
        found = activity_sampling_groups(index, edges)
        groups = [(str(g), found[g]) for g in sorted(found)]
    header = _provenance(args, study)
    fit_lines: list[str] = []
    rows: list[tuple] = []
    extra_lines: list[str] = []

    if args.measure == "rg-series":
        days, series = rg_series_population(index, towers, day_ends(study))
        plot_data = []
        for label, members in groups:
            sel = np.ones(len(index), dtype=bool) if members is None else np.isin(index.subscribers, list(members))
            sub = series[sel]
            means = []
            for j, d in enumerate(days):
                col = sub[:, j]
                col = col[~np.isnan(col)]
                mean = float(col.mean()) if col.size else float("nan")
                med = float(np.median(col)) if col.size else float("nan")
                means.append(mean)
                rows.append(((label,) if args.groups else ()) + (d.isoformat(), int(col.size), mean, med))
            plot_data.append(np.asarray(means))
        columns = (["group"] if args.groups else []) + ["day", "n_subscribers", "rg_mean", "rg_median"]
        _write_csv(args.out, header, columns, rows)
        _maybe_plot(args, lambda p: _plots().series_figure(days, plot_data[0], p))
        _summary("stats", t0, measure=args.measure, records_read=index.n_records,
                 dropped=index.report.dropped, subscribers=len(index))
        return

    if args.measure == "dt":
        batch = inter_event_times(index, window)
    elif args.measure == "dr":
        batch = displacements(index, towers, args.cutoff, window if args.window else None)
    else:
        batch = None
    if batch is not None:
        if kind is not None:
            work, off = split_by_dayclass(batch, study)
            batch = work if kind is DayKind.WORK_DAY else off
        extra_lines.append(f"samples pairs={batch.pairs} dropped={batch.dropped} kept={len(batch)}")
        rg_all = None
    else:
        rg_all = gyration_radii(index, towers)

    curves = []
    for label, members in groups:
        if batch is not None:
            values = (batch if members is None else batch.for_subscribers(members)).values
        else:
            sel = np.ones(len(index), dtype=bool) if members is None else np.isin(index.subscribers, list(members))
            values = rg_all[sel]
        values = np.asarray(values, dtype=float)
        binned = values[values > 0] if args.binning == "log" else values
        zeros = int(values.size - binned.size)
        if zeros:
            extra_lines.append(f"{('group=' + label + ' ') if label else ''}zero_samples_not_binned={zeros}")
        if binned.size == 0:
            if members is None:
                raise DataError(f"no {args.measure} samples to analyse", args.index)
            extra_lines.append(f"group={label} empty=true")
            continue
        dist = empirical_distribution(binned, args.binning, args.bins)
        results = _fit(values, args.measure, args, window)
        fit_lines += _fit_lines(label, results)
        for c, d in zip(dist.centers.tolist(), dist.density.tolist()):
            rows.append(((label,) if args.groups else ()) + (c, d))
        best = next((f for _, f, _ in results if f is not None and f.model != "exponential"), None)
        best = best or next((f for _, f, _ in results if f is not None), None)
        curves.append((label or args.measure, dist, best))
    columns = (["group"] if args.groups else []) + ["bin_center", "density"]
    _write_csv(args.out, header + extra_lines + fit_lines, columns, rows)
    for line in fit_lines:
        print(line)
    xlabel = {"dt": "waiting time (min)", "dr": "displacement (m)", "rg": "r_g (m)"}[args.measure]
    _maybe_plot(args, lambda p: _plots().distribution_figure(curves, xlabel, p))
    _summary("stats", t0, measure=args.measure, records_read=index.n_records,
             dropped=index.report.dropped, subscribers=len(index))


def cmd_traj(args) -> None:
    t0 = time.perf_counter()
    study = _study(args)
    _writable(args.out)
    towers, index = _load(args, study)
    if args.subscriber not in index:
        raise DataError(f"subscriber {args.subscriber!r} not in index", args.index)
    traj = Trajectory.from_index(index, towers, args.subscriber)
    header = _provenance(args, study)
    frame = scaled = None
    try:
        frame, scaled = to_intrinsic(traj)
    except CdrError as exc:
        if args.intrinsic:
            raise
        header.append(f"frame unavailable={json.dumps(f'{type(exc).__name__}: {exc}')}")
    if frame is not None:
        header.append("frame " + " ".join(f"{k}={_fmt(v)}" for k, v in frame.summary().items()))
    out = scaled if args.intrinsic else traj
    _write_csv(args.out, header, ["t", "x", "y"],
               zip(format_timestamps(out.time_us), out.x.tolist(), out.y.tolist()))
    _maybe_plot(args, lambda p: _plots().trajectory_figure(traj, scaled, p))
    _summary("traj", t0, records_read=index.n_records, dropped=index.report.dropped, positions=len(traj))


def _overrides(pairs: Sequence[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def cmd_synth(args) -> None:
    t0 = time.perf_counter()
    values = read_kv(_need(args.config, "config")) if args.config else {}
    values.update(_overrides(args.set or []))
    config = GeneratorConfig.from_mapping(values)
    towers_path = args.out_towers or str(Path(args.out_cdr).with_suffix("")) + ".towers.csv"
    for p in (args.out_cdr, args.out_manifest, towers_path):
        _writable(p)
    pop = generate_population(config)
    pop.write(args.out_cdr, towers_path, args.out_manifest, _provenance(args))
    _summary("synth", t0, records_written=pop.n_records, dropped=0,
             subscribers=config.n_subscribers, towers_file=towers_path)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cdrmob", description="Mobility statistics from call-detail records.")
    parser.add_argument("--version", action="version", version=f"cdrmob {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, source="index"):
        p.add_argument(f"--{source}", required=True, help="CDR file" if source == "cdr" else "index file")
        p.add_argument("--towers", required=True)
        p.add_argument("--config", help="study configuration (key = value)")
        p.add_argument("--strict", action="store_true", help="abort on the first bad line")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes (default: $CDRMOB_THREADS or all cores)")
        p.add_argument("--out", required=True)
        p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("ingest", help="parse, validate and index a CDR file")
    common(p, "cdr")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("density", help="activity counts and ratios per sector")
    common(p)
    p.add_argument("--sectors", help="tower_id,sector_name file (default: geometric split)")
    p.add_argument("--plot", help="also render a figure to this path")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("stats", help="distributions and fits of dt, dr or r_g")
    common(p)
    p.add_argument("--measure", required=True, choices=["dt", "dr", "rg", "rg-series"])
    p.add_argument("--dayclass", default="all", choices=["work", "off", "all"])
    p.add_argument("--groups", help="comma-separated record-count edges")
    p.add_argument("--binning", default="log", choices=["log", "linear"])
    p.add_argument("--bins", type=int, default=DEFAULT_LOG_BINS)
    p.add_argument("--fit", default="auto", choices=["auto", "exponential", "tpl", "both", "none"])
    p.add_argument("--xmin", type=float, help="lower fit bound for the truncated power law")
    p.add_argument("--window", help="dt window in minutes as LO,HI or 'none' (default 15,1440)")
    p.add_argument("--cutoff", type=float, default=DEFAULT_DR_CUTOFF, help="largest dr kept (m)")
    p.add_argument("--plot", help="also render a figure to this path")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("traj", help="one subscriber's trajectory, raw or intrinsic")
    common(p)
    p.add_argument("--subscriber", required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--raw", action="store_true", help="tower coordinates (default)")
    mode.add_argument("--intrinsic", action="store_true", help="intrinsic-frame coordinates")
    p.add_argument("--plot", help="also render a figure to this path")
    p.set_defaults(func=cmd_traj)

    p = sub.add_parser("synth", help="generate a synthetic population")
    p.add_argument("--config", help="generator configuration (key = value)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
    p.add_argument("--out-cdr", required=True)
    p.add_argument("--out-manifest", required=True)
    p.add_argument("--out-towers", help="tower file (default: next to the CDR file)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def _error_line(kind: str, exc: BaseException, path: str | None = None) -> str:
    fields = {"error": kind, "type": type(exc).__name__}
    path = path or getattr(exc, "path", None) or getattr(exc, "filename", None)
    if path:
        fields["path"] = str(path)
    lineno = getattr(exc, "lineno", None)
    if lineno:
        fields["line"] = lineno
    fields["message"] = str(exc).replace("\n", " ")
    return "cdrmob: " + " ".join(f"{k}={json.dumps(v) if k in ('message', 'path') else v}" for k, v in fields.items())


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=max(logging.DEBUG, logging.WARNING - 10 * args.verbose),
                            stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise UsageError("--threads must be at least 1")
        if hasattr(args, "threads") and args.threads is None:
            args.threads = default_threads()
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(_error_line("usage", exc), file=sys.stderr)
        return EXIT_USAGE
    except (CdrError, OSError, RuntimeError) as exc:
        print(_error_line("data", exc), file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
