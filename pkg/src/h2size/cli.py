"""Command line entry point: ``h2size <subcommand> [options]``.

Every report command reads trace files and writes CSV (or JSON lines) tables
into ``--out``; without ``--out`` the primary table goes to stdout.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Sequence

from . import synth
from .attack import AttackFinding, AttackParams, evaluate_attack, is_attackable, run_attack
from .characterize import SIZE_RANGES, characterize, extent_report, size_range
from .estimators import LEVELS, ADJUST_MODES, relative_error, worst_case_bounds
from .indicators import RATIOS, aggregate_indicators, npo_indicators
from .segmenter import detect_segments
from .stats import ecdf
from .trace import (
    PLAIN,
    TraceError,
    attacker_view,
    build_objects,
    h2_connections,
    read_trace,
    validate,
    write_trace,
)

log = logging.getLogger("h2size")


class DataError(Exception):
    """Bad input data; reported on stderr with exit status 1."""


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class Output:
    def __init__(self, out: str | None, fmt: str):
        self.dir = Path(out) if out else None
        self.fmt = fmt

    def table(self, name: str, header: Sequence[str], rows: Iterable[Sequence], primary=False):
        rows = [list(r) for r in rows]
        buf = io.StringIO()
        if self.fmt == "jsonl":
            for r in rows:
                buf.write(json.dumps(dict(zip(header, r)), sort_keys=False) + "\n")
        else:
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows([_fmt(v) for v in r] for r in rows)
        ext = "jsonl" if self.fmt == "jsonl" else "csv"
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
            (self.dir / f"{name}.{ext}").write_text(buf.getvalue(), encoding="utf-8")
        elif primary:
            sys.stdout.write(buf.getvalue())


def _load(paths: list[str]):
    captures = []
    for p in paths:
        try:
            captures.extend(read_trace(p))
        except OSError as exc:
            raise DataError(f"cannot read {p}: {exc.strerror}") from exc
    return captures


def _require_out(args) -> Path:
    if not args.out:
        raise DataError(f"{args.command} needs --out DIR")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _segs(captures):
    return {
        cap.capture_id: {c.conn_id: detect_segments(c) for c in h2_connections(cap)}
        for cap in captures
    }


# --------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> None:
    try:
        cfg = synth.load_config(args.config) if args.config else synth.SynthConfig()
    except OSError as exc:
        raise DataError(f"cannot read {args.config}: {exc.strerror}") from exc
    cfg = replace(cfg, seed=args.seed)
    out = _require_out(args)
    captures = synth.generate_corpus(cfg, args.captures)
    (out / "trace.jsonl").write_text(write_trace(captures), encoding="utf-8")


def cmd_validate(args) -> None:
    captures = _load(args.inputs)
    for cap in captures:
        validate(cap)
    n_conn = sum(len(c.connections) for c in captures)
    print(f"ok: {len(captures)} captures, {n_conn} connections")


def cmd_strip(args) -> None:
    out = _require_out(args)
    captures = [attacker_view(c) for c in _load(args.inputs)]
    (out / "attacker.jsonl").write_text(write_trace(captures), encoding="utf-8")


def cmd_segments(args, output: Output) -> None:
    rows = []
    for cap in _load(args.inputs):
        for conn in h2_connections(cap):
            seg = detect_segments(conn)
            for p in seg.pipelining_segments:
                rows.append((cap.capture_id, conn.conn_id, "pipelining", p.start, p.end,
                             len(p.streams)))
            for m in seg.multiplexing_segments:
                rows.append((cap.capture_id, conn.conn_id, "multiplexing", m.start, m.end,
                             len(m.streams)))
    output.table("segments", ("capture_id", "conn_id", "kind", "start", "end", "n_streams"),
                 rows, primary=True)


def cmd_indicators(args, output: Output) -> None:
    captures = _load(args.inputs)
    if not captures:
        raise DataError("no captures in input")
    per_capture = [(c.site, c.day, npo_indicators(c)) for c in captures]

    grouped: dict = {}
    for site, day, ind in per_capture:
        grouped.setdefault((day, site), []).append(ind)
    rows = []
    for (day, site), inds in sorted(grouped.items()):
        agg = aggregate_indicators([(site, day, i) for i in inds]).timeline[0].indicators
        rows.append((day.isoformat(), site, len(inds), *(agg.ratios()[r] for r in RATIOS)))
    header = ("day", "site", "captures", *RATIOS)

    agg = aggregate_indicators(per_capture, target_sites=args.target_sites,
                               captures_per_site=args.captures_per_site)
    timeline = [
        (d.day.isoformat(), d.captures, d.unique_sites, d.site_proportion,
         d.capture_proportion, *(d.indicators.ratios()[r] for r in RATIOS),
         *(getattr(d.indicators.byte_totals, k) for k in
           ("enc_http_bytes", "h2_bytes", "pipelined_bytes", "multiplexed_bytes")))
        for d in agg.timeline
    ]
    tl_header = ("day", "captures", "unique_sites", "site_proportion", "capture_proportion",
                 *RATIOS, "enc_http_bytes", "h2_bytes", "pipelined_bytes", "multiplexed_bytes")
    site_rows = []
    for s in agg.sites:
        for r in RATIOS:
            summ = s.summary[r] or {}
            site_rows.append((s.site, r, s.captures, s.mean[r], summ.get("min"), summ.get("q1"),
                              summ.get("median"), summ.get("q3"), summ.get("max")))
    site_header = ("site", "indicator", "captures", "mean", "min", "q1", "median", "q3", "max")

    output.table("indicators", header, rows, primary=not args.timeline)
    output.table("timeline", tl_header, timeline, primary=args.timeline)
    output.table("sites", site_header, site_rows)


def _cdf_rows(family: dict, label: str):
    for key, points in family.items():
        for x, p in points:
            yield (label, key, x, p)


def cmd_characterize(args, output: Output) -> None:
    rep = characterize(_load(args.inputs))
    hist = []
    for name in ("connections_per_endpoint", "objects_per_connection",
                 "frames_per_object", "segments_per_frame"):
        for k, n in sorted(getattr(rep, name).items()):
            hist.append((name, "", k, n))
    for kind, counts in sorted(rep.record_overhead_hist.items()):
        for k, n in sorted(counts.items()):
            hist.append(("record_overhead", kind, k, n))
    cdf = list(_cdf_rows(rep.object_size_cdf_by_frames(), "object_size_by_frames"))
    cdf += list(_cdf_rows(rep.frame_size_cdf_by_segments(), "frame_size_by_segments"))
    output.table("characterize_hist", ("table", "group", "value", "count"), hist, primary=True)
    output.table("characterize_cdf", ("family", "group", "value", "cum"), cdf)


def cmd_extent(args, output: Output) -> None:
    captures = _load(args.inputs)
    rep = extent_report(captures, _segs(captures))
    ranges = [
        (r, rep.objects_by_range[r], rep.pipelined_by_range[r], rep.multiplexed_by_range[r],
         rep.single_segment_by_range[r], rep.pipelined_proportion(r),
         rep.multiplexed_proportion(r), rep.single_segment_share(r))
        for r in SIZE_RANGES
    ]
    streams = [("pipelining", k, n) for k, n in sorted(rep.pipelining_stream_counts.items())]
    streams += [("multiplexing", k, n) for k, n in sorted(rep.multiplexing_stream_counts.items())]
    same = [(r, k, n) for r in SIZE_RANGES
            for k, n in sorted(rep.same_connection_by_range.get(r, {}).items())]
    output.table("extent_ranges", ("size_range", "objects", "pipelined", "multiplexed",
                                   "single_segment", "pipelined_prop", "multiplexed_prop",
                                   "single_segment_share"), ranges, primary=True)
    output.table("extent_streams", ("kind", "n_streams", "count"), streams)
    output.table("extent_same_connection", ("size_range", "objects_in_connection", "count"),
                 same)
    output.table("extent_share_cdf", ("family", "indicator", "value", "cum"),
                 _cdf_rows(rep.byte_share_cdfs(), "byte_share"))


def cmd_worstcase(args, output: Output) -> None:
    rows = []
    by_range: dict[str, list[float]] = {}
    for cap in _load(args.inputs):
        for conn in h2_connections(cap):
            seg = detect_segments(conn)
            sizes = {o.stream_id: o.data_size for o in build_objects(conn)}
            for b in worst_case_bounds(conn, seg, args.level, args.adjust):
                s_act = sizes[b.stream_id]
                e = relative_error(b, s_act).e if s_act > 0 else None
                rows.append((cap.capture_id, conn.conn_id, b.stream_id, s_act, b.low, b.high, e))
                rng = size_range(s_act)
                if e is not None:
                    by_range.setdefault(rng, []).append(e)
    cdf = [(r, x, p) for r in SIZE_RANGES if r in by_range for x, p in ecdf(by_range[r])]
    name = f"worstcase_{args.level}"
    output.table(name, ("capture_id", "conn_id", "stream", "s_act", "low", "high", "e"), rows,
                 primary=True)
    output.table(f"{name}_cdf", ("size_range", "e", "cum"), cdf)


FINDINGS_HEADER = ("capture_id", "conn_id", "start_pos", "end_pos", "header_time",
                   "est_size", "span_size", "overlapped")


def _params(args) -> AttackParams:
    if not args.params:
        return AttackParams()
    try:
        return AttackParams.load(args.params)
    except OSError as exc:
        raise DataError(f"cannot read {args.params}: {exc.strerror}") from exc
    except (ValueError, TypeError) as exc:
        raise DataError(f"bad params file {args.params}: {exc}") from exc


def cmd_attack(args, output: Output) -> None:
    params = _params(args)
    rows = []
    for cap in _load(args.inputs):
        for conn in cap.connections:
            if conn.protocol == PLAIN:
                continue
            for f in run_attack(conn, params):
                rows.append((cap.capture_id, conn.conn_id, f.start_pos, f.end_pos,
                             f"{f.header_time:.6f}", f.reported_size, f.est_size, f.overlapped))
    output.table("findings", FINDINGS_HEADER, rows, primary=True)


def _read_findings(path: str) -> dict[tuple[str, str], list[AttackFinding]]:
    out: dict[tuple[str, str], list[AttackFinding]] = {}
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(FINDINGS_HEADER) <= set(reader.fieldnames):
            raise DataError(f"{path}: not a findings table")
        for line_no, row in enumerate(reader, start=2):
            try:
                f = AttackFinding(
                    conn_id=row["conn_id"],
                    est_size=int(row["span_size"]),
                    start_pos=int(row["start_pos"]),
                    end_pos=int(row["end_pos"]),
                    header_time=float(row["header_time"]),
                    overlapped=row["overlapped"] == "1",
                )
            except ValueError as exc:
                raise DataError(f"{path}: line {line_no}: {exc}") from exc
            out.setdefault((row["capture_id"], row["conn_id"]), []).append(f)
    return out


def cmd_attack_eval(args, output: Output) -> None:
    if not args.findings:
        raise DataError("attack-eval needs --findings")
    params = _params(args)
    findings = _read_findings(args.findings)
    truth = {}
    for cap in _load(args.inputs):
        view = {c.conn_id: c for c in attacker_view(cap).connections}
        for conn in h2_connections(cap):
            av = view[conn.conn_id]
            if not is_attackable(av, params):
                continue
            seg = detect_segments(conn)
            truth[(cap.capture_id, conn.conn_id)] = (build_objects(conn), seg.per_object_class)
    ev = evaluate_attack(findings, truth)
    counts = [(c.conn_id[0], c.conn_id[1], c.found, c.actual, c.count_diff, c.pipelined,
               c.multiplexed) for c in ev.connections]
    errors = [(x.conn_id[0], x.conn_id[1], x.sample.stream_id, x.object_class, x.sample.s_act,
               x.sample.s_est, x.sample.e, x.overlapped) for x in ev.errors]
    by_class: dict[str, list[float]] = {}
    for x in ev.errors:
        by_class.setdefault(x.object_class, []).append(x.sample.e)
    cdf = [(cls, e, p) for cls in sorted(by_class) for e, p in ecdf(by_class[cls])]
    corr = [("pipelined", ev.corr_pipelined), ("multiplexed", ev.corr_multiplexed)]
    output.table("attack_counts", ("capture_id", "conn_id", "found", "actual", "count_diff",
                                   "pipelined", "multiplexed"), counts, primary=True)
    output.table("attack_errors", ("capture_id", "conn_id", "stream", "class", "s_act", "s_est",
                                   "e", "overlapped"), errors)
    output.table("attack_error_cdf", ("class", "e", "cum"), cdf)
    output.table("attack_corr", ("count_diff_vs", "pearson"), corr)


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="h2size", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, inputs=True):
        p = sub.add_parser(name, help=help_text)
        if inputs:
            p.add_argument("--in", dest="inputs", action="append", required=True,
                           metavar="TRACE", help="trace file (repeatable)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
        return p

    p = add("gen", "generate synthetic captures", inputs=False)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--captures", type=int, default=1)
    add("validate", "check trace integrity")
    add("strip", "write the attacker view of traces")
    add("segments", "pipelining and multiplexing segments")
    p = add("indicators", "byte-share indicators")
    p.add_argument("--timeline", action="store_true", help="print the per-day series")
    p.add_argument("--target-sites", type=int)
    p.add_argument("--captures-per-site", type=int, default=3)
    add("characterize", "size and overhead distributions")
    add("extent", "extent of pipelining and multiplexing")
    p = add("worstcase", "worst-case bounds for an assumption level")
    p.add_argument("--level", choices=LEVELS, required=True)
    p.add_argument("--adjust", choices=sorted(ADJUST_MODES), default="all")
    p = add("attack", "run the record-size attack on attacker-view traces")
    p.add_argument("--params")
    p = add("attack-eval", "score findings against ground-truth traces")
    p.add_argument("--findings")
    p.add_argument("--params")
    return parser


COMMANDS = {
    "gen": cmd_gen,
    "validate": cmd_validate,
    "strip": cmd_strip,
    "segments": cmd_segments,
    "indicators": cmd_indicators,
    "characterize": cmd_characterize,
    "extent": cmd_extent,
    "worstcase": cmd_worstcase,
    "attack": cmd_attack,
    "attack-eval": cmd_attack_eval,
}
NO_OUTPUT = {"gen", "validate", "strip"}


def run_command(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func = COMMANDS[args.command]
    try:
        if args.command in NO_OUTPUT:
            func(args)
        else:
            func(args, Output(args.out, args.format))
    except (DataError, TraceError, synth.ConfigError, ValueError) as exc:
        print(f"h2size {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
