"""CSV/JSON table output, written atomically."""

from __future__ import annotations

import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from .dot11 import IeInventory
from .presence import PresenceBin, format_time
from .sessions import DeviceRecord, RecurrenceReport, ScanInstance, Summary

# reference values for the conference capture, shown beside our own counts
REFERENCE_COUNTS = {
    "probes_total": 390810,
    "probes_randomized": 266051,
    "prefix_probes[android-legacy]": 22254,
    "prefix_probes[android-legacy-alt]": 22254,
    "instances_total": 204038,
    "instances_global": 58393,
    "instances_prefix-local": 7823,
    "devices_global": 229,
    "devices_randomized": 4274,
    "devices_prefix-local": 523,
    "recurrent_devices_prefix-local": 50,
    "recurrent_devices_local": 296,
    "fully_randomized_devices": 3752,
}


def atomic_write_text(path: str | os.PathLike, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_table(columns: Sequence[str], rows: Sequence[Sequence], as_json: bool = False) -> str:
    if as_json:
        return json.dumps([dict(zip(columns, r)) for r in rows], indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def emit_table(columns, rows, dest=None, as_json: bool = False):
    """Write a table to ``dest`` (atomically) or to stdout when ``dest`` is None."""
    text = render_table(columns, rows, as_json)
    if dest is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(dest, text)


INVENTORY_COLUMNS = ("element", "count", "percent")


def inventory_rows(inv: IeInventory):
    return [(label, count, "" if pct is None else f"{pct:.2f}")
            for label, count, pct in inv.rows()]


INSTANCE_COLUMNS = ("instance_id", "device_id", "mac", "start", "end", "probe_count")
DEVICE_COLUMNS = ("device_id", "mac_mode", "appearance_count", "first_seen", "last_seen")
TIMELINE_COLUMNS = ("device_id", "partition", "start", "end")
PRESENCE_COLUMNS = ("bin_start_iso8601", "probe_count", "distinct_macs", "distinct_devices")
SUMMARY_COLUMNS = ("metric", "value", "reference")


def instance_rows(instances: Sequence[ScanInstance], devices: Sequence[DeviceRecord],
                  tz: int = 0):
    owner = {i.instance_id: d.device_id for d in devices for i in d.instances}
    return [(i.instance_id, owner.get(i.instance_id, ""), str(i.mac),
             format_time(i.start, tz), format_time(i.end, tz), i.probe_count)
            for i in instances]


def device_rows(devices: Sequence[DeviceRecord], tz: int = 0):
    return [(d.device_id, d.mac_mode, d.appearance_count,
             format_time(d.first_seen, tz), format_time(d.last_seen, tz))
            for d in devices]


def timeline_rows(report: RecurrenceReport, tz: int = 0):
    rows = []
    for partition, devices in (("recurrent", report.recurrent), ("transient", report.transient)):
        for d in devices:
            for start, end in sorted((i.start, i.end) for i in d.instances):
                rows.append((d.device_id, partition, format_time(start, tz), format_time(end, tz)))
    return rows


def summary_rows(summary: Summary):
    values = summary.as_dict()
    for label in ("probes", "instances", "devices", "recurrent_devices"):
        values[f"{label}_randomized"] = (values[f"{label}_local"]
                                         + values[f"{label}_prefix-local"])
    return [(k, v, REFERENCE_COUNTS.get(k, "")) for k, v in values.items()]


def presence_rows(bins: Sequence[PresenceBin], tz: int = 0, labels: Sequence[str] | None = None):
    rows = []
    for n, b in enumerate(bins):
        row = [format_time(b.start, tz), b.probe_count, b.distinct_macs,
               "" if b.distinct_devices is None else b.distinct_devices]
        if labels is not None:
            row.append(labels[n])
        rows.append(tuple(row))
    return rows
