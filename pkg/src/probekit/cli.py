"""Command-line front end: ``probekit {stats,analyze,presence,anonymize,synth}``.

Exit status is 0 on success, 1 on a data error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .anonymize import AnonymizationPolicy, anonymize_capture
from .dot11 import inventory
from .evaluate import instance_labels, pair_scores
from .macid import DEFAULT_PREFIX_RULES, load_prefix_rules
from .pcapio import CaptureError, RotatingCaptureWriter, write_capture
from .pipeline import load_probes
from .presence import bin_presence, label_bins, load_annotations
from .reports import (DEVICE_COLUMNS, INSTANCE_COLUMNS, INVENTORY_COLUMNS, PRESENCE_COLUMNS,
                      SUMMARY_COLUMNS, TIMELINE_COLUMNS, atomic_write_text, device_rows,
                      emit_table, instance_rows, inventory_rows, presence_rows, render_table,
                      summary_rows, timeline_rows)
from .sessions import ClusterParams, cluster_devices, detect_bursts, recurrence_report, summary_stats
from .synthgen import generate, load_population, mixed_population, read_truth_csv

log = logging.getLogger("probekit")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


class DataError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    p.add_argument("--tz-offset", type=int, default=0, metavar="MINUTES",
                   help="UTC offset used when printing times (default 0)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_cluster(p: argparse.ArgumentParser):
    p.add_argument("--burst-gap", type=float, default=10.0, metavar="SECONDS")
    p.add_argument("--pnl-threshold", type=float, default=0.5, metavar="X")
    p.add_argument("--recurrence", type=int, default=10, metavar="N")
    p.add_argument("--prefixes", metavar="FILE", help="prefix rules, one 'name prefix' per line")
    p.add_argument("--allow-empty-fingerprint", action="store_true",
                   help="let probes without capability elements link by PNL")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probekit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="information-element inventory of captures")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("-o", "--out", type=Path, help="write the table here instead of stdout")
    _add_common(p)

    p = sub.add_parser("analyze", help="scan instances, devices and recurrence")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("-o", "--out", type=Path, metavar="DIR",
                   help="directory for instances/devices/summary/timelines tables")
    p.add_argument("--truth", type=Path, help="generator ground-truth CSV to score against")
    _add_cluster(p)
    _add_common(p)

    p = sub.add_parser("presence", help="probe density per time bin")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--bin-minutes", type=float, default=15.0, metavar="M")
    p.add_argument("--annotations", type=Path, metavar="FILE",
                   help="schedule file with 'start end label' lines")
    p.add_argument("--devices", action="store_true",
                   help="cluster devices and count them per bin")
    p.add_argument("-o", "--out", type=Path)
    _add_cluster(p)
    _add_common(p)

    p = sub.add_parser("anonymize", help="write a pseudonymized copy of captures")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--salt", metavar="HEX", help="salt as hex (default: random per run)")
    p.add_argument("--keep-macs", action="store_true")
    p.add_argument("--keep-ssids", action="store_true")
    p.add_argument("--keep-uuid-e", action="store_true")
    p.add_argument("--no-preserve-bits", action="store_true",
                   help="do not copy the functional MAC bits into surrogates")
    _add_common(p)

    p = sub.add_parser("synth", help="generate a labelled synthetic capture")
    p.add_argument("config", nargs="?", type=Path,
                   help="JSON population config (default: built-in mixed population)")
    p.add_argument("--seed", type=int, default=0, metavar="N")
    p.add_argument("-o", "--out", type=Path, required=True, metavar="PCAP")
    p.add_argument("--rotate", type=int, metavar="N",
                   help="split output into files of N records (<stem>-NNNN.pcap)")
    _add_common(p)
    return parser


def _params(args, parser) -> ClusterParams:
    try:
        return ClusterParams(burst_gap=args.burst_gap, pnl_threshold=args.pnl_threshold,
                             recurrence_threshold=args.recurrence,
                             require_nonempty_fingerprint=not args.allow_empty_fingerprint)
    except ValueError as exc:
        parser.error(str(exc))


def _rules(args):
    return load_prefix_rules(args.prefixes) if args.prefixes else list(DEFAULT_PREFIX_RULES)


def _load(inputs):
    loaded = load_probes(inputs)
    if loaded.files == 0:
        raise DataError("no input could be read: "
                        + "; ".join(f"{k}: {v}" for k, v in loaded.failed_files.items()))
    log.info("%d records, %d probe requests, %d other frames, %d malformed",
             loaded.records, len(loaded.probes), loaded.non_probe, loaded.malformed)
    return loaded


def cmd_stats(args, parser) -> int:
    loaded = _load(args.inputs)
    inv = inventory(loaded.probes)
    log.info("encrypted-probe triggers: %s", inv.debug)
    emit_table(INVENTORY_COLUMNS, inventory_rows(inv), args.out, args.json)
    return EXIT_OK


def cmd_analyze(args, parser) -> int:
    params = _params(args, parser)
    rules = _rules(args)
    loaded = _load(args.inputs)
    instances = detect_bursts(loaded.probes, params)
    devices = cluster_devices(instances, params, rules)
    report = recurrence_report(devices, params)
    summary = summary_stats(instances, devices, params, rules)
    tz = args.tz_offset

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        ext = "json" if args.json else "csv"
        emit_table(INSTANCE_COLUMNS, instance_rows(instances, devices, tz),
                   args.out / f"instances.{ext}", args.json)
        emit_table(DEVICE_COLUMNS, device_rows(devices, tz), args.out / f"devices.{ext}", args.json)
        emit_table(TIMELINE_COLUMNS, timeline_rows(report, tz), args.out / f"timelines.{ext}",
                   args.json)
        emit_table(SUMMARY_COLUMNS, summary_rows(summary), args.out / f"summary.{ext}", args.json)
    emit_table(SUMMARY_COLUMNS, summary_rows(summary), None, args.json)

    if args.truth:
        labels = read_truth_csv(args.truth)
        if len(labels) != len(loaded.probes):
            raise DataError(f"ground truth has {len(labels)} probes, capture has "
                            f"{len(loaded.probes)}")
        # device labels are grouped by the text before their first '-'
        true = instance_labels(instances, labels)
        owner = {i.instance_id: d.device_id for d in devices for i in d.instances}
        predicted = [owner[i.instance_id] for i in instances]
        s = pair_scores(true, predicted)
        rows = [("all", s.precision, s.recall, s.f1)]
        for group in sorted({t.split("-")[0] for t in true}):
            s = pair_scores(true, predicted, lambda t, g=group: t.split("-")[0] == g)
            rows.append((group, s.precision, s.recall, s.f1))
        sys.stdout.write(render_table(("group", "precision", "recall", "f1"),
                                      [(g, f"{p:.4f}", f"{r:.4f}", f"{f:.4f}")
                                       for g, p, r, f in rows], args.json))
    return EXIT_OK


def cmd_presence(args, parser) -> int:
    if not args.bin_minutes > 0:
        parser.error("--bin-minutes must be positive")
    params = _params(args, parser)
    annotations = None
    if args.annotations:
        annotations = load_annotations(args.annotations, args.tz_offset)
    loaded = _load(args.inputs)
    devices = None
    if args.devices:
        devices = cluster_devices(detect_bursts(loaded.probes, params), params, _rules(args))
    bins = bin_presence(loaded.probes, args.bin_minutes, devices, args.tz_offset)
    columns = PRESENCE_COLUMNS
    labels = None
    if annotations is not None:
        labels = label_bins(bins, annotations)
        columns = columns + ("session",)
    emit_table(columns, presence_rows(bins, args.tz_offset, labels), args.out, args.json)
    return EXIT_OK


def cmd_anonymize(args, parser) -> int:
    out = args.out
    for p in args.inputs:
        if out.exists() and p.exists() and os.path.samefile(out, p):
            parser.error(f"output {out} would overwrite input {p}")
    if args.salt:
        try:
            salt = bytes.fromhex(args.salt)
        except ValueError:
            parser.error("--salt must be hex")
    else:
        salt = os.urandom(32)
    try:
        policy = AnonymizationPolicy(salt=salt, hash_mac=not args.keep_macs,
                                     hash_ssid=not args.keep_ssids,
                                     hash_uuid_e=not args.keep_uuid_e,
                                     preserve_locality_bits=not args.no_preserve_bits)
    except ValueError as exc:
        parser.error(str(exc))
    report = anonymize_capture(args.inputs, out, policy)
    sys.stderr.write(
        f"{report.records_out}/{report.records_in} records written to {out}; "
        f"rewrote {report.macs} addresses, {report.ssids} SSIDs, {report.uuids} UUID-E; "
        f"dropped {report.dropped_non_probe} non-probe and {report.dropped_malformed} "
        f"malformed frames\n")
    return EXIT_OK


def cmd_synth(args, parser) -> int:
    if args.config:
        devices, start = load_population(args.config)
        capture = generate(devices, args.seed, start=start)
    else:
        capture = generate(mixed_population(args.seed), args.seed)
    out: Path = args.out
    truth_path = out.with_name(out.stem + ".truth.csv")
    if args.rotate is not None and args.rotate < 1:
        parser.error("--rotate must be positive")
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.rotate:
        with RotatingCaptureWriter(out.parent, out.stem, capture.meta,
                                   max_records=args.rotate) as writer:
            for rec in capture.records:
                writer.write(rec)
        written = ", ".join(p.name for p in writer.paths)
    else:
        tmp = out.with_name(out.name + ".part")
        try:
            write_capture(tmp, capture.meta, capture.records)
            os.replace(tmp, out)
        finally:
            if tmp.exists():
                tmp.unlink()
        written = out.name
    atomic_write_text(truth_path, capture.truth.to_csv())
    sys.stderr.write(f"{len(capture.records)} probes, "
                     f"{capture.truth.expected_instance_count} instances, "
                     f"{capture.truth.expected_device_count} devices -> {written}, "
                     f"{truth_path.name}\n")
    return EXIT_OK


COMMANDS = {
    "stats": cmd_stats,
    "analyze": cmd_analyze,
    "presence": cmd_presence,
    "anonymize": cmd_anonymize,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args, parser)
    except (DataError, CaptureError, ValueError, OSError) as exc:
        sys.stderr.write(f"probekit: error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
