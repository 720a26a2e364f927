"""Clock-aligned probe density bins."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .dot11 import ProbeRequest
from .sessions import DeviceRecord, device_timeline  # noqa: F401


@dataclass(frozen=True)
class PresenceBin:
    start: float
    width: float
    probe_count: int
    distinct_macs: int
    distinct_devices: int | None = None

    @property
    def end(self) -> float:
        return self.start + self.width


@dataclass(frozen=True)
class Annotation:
    start: float
    end: float
    label: str


def _bin_index(ts: float, origin: float, width: float) -> int:
    return math.floor((ts - origin) / width)


def bin_presence(probes: Iterable[ProbeRequest], bin_minutes: float,
                 devices: Sequence[DeviceRecord] | None = None,
                 tz_offset_minutes: int = 0) -> list[PresenceBin]:
    """Count probes, distinct MACs and (optionally) devices per time bin.

    Bins are aligned to the wall-clock hour in the given UTC offset and cover
    every interval from the first to the last probe, empty ones included. A
    device counts in each bin one of its scan instances overlaps.
    """
    if not bin_minutes > 0:
        raise ValueError("bin_minutes must be positive")
    width = bin_minutes * 60.0
    probes = list(probes)
    if not probes:
        return []
    first = min(p.timestamp for p in probes)
    last = max(p.timestamp for p in probes)

    shift = -tz_offset_minutes * 60.0
    origin = math.floor((first - shift) / 3600.0) * 3600.0 + shift
    lo = _bin_index(first, origin, width)
    n_bins = _bin_index(last, origin, width) - lo + 1

    probe_counts = [0] * n_bins
    mac_sets = [set() for _ in range(n_bins)]
    for probe in probes:
        k = _bin_index(probe.timestamp, origin, width) - lo
        probe_counts[k] += 1
        mac_sets[k].add(probe.source)

    device_sets = None
    if devices is not None:
        device_sets = [set() for _ in range(n_bins)]
        for device in devices:
            for inst in device.instances:
                a = max(_bin_index(inst.start, origin, width) - lo, 0)
                b = min(_bin_index(inst.end, origin, width) - lo, n_bins - 1)
                for k in range(a, b + 1):
                    device_sets[k].add(device.device_id)

    return [
        PresenceBin(
            start=origin + (lo + k) * width,
            width=width,
            probe_count=probe_counts[k],
            distinct_macs=len(mac_sets[k]),
            distinct_devices=None if device_sets is None else len(device_sets[k]),
        )
        for k in range(n_bins)
    ]


def merge_bins(bins: Sequence[PresenceBin], factor: int,
               tz_offset_minutes: int = 0) -> list[PresenceBin]:
    """Sum probe counts of consecutive bins into bins ``factor`` times wider.

    Only probe counts survive merging; distinct counts cannot be added and are
    left as None.
    """
    if not bins:
        return []
    width = bins[0].width * factor
    shift = -tz_offset_minutes * 60.0
    origin = math.floor((bins[0].start - shift) / 3600.0) * 3600.0 + shift
    merged: dict[int, int] = {}
    for b in bins:
        k = _bin_index(b.start, origin, width)
        merged[k] = merged.get(k, 0) + b.probe_count
    return [PresenceBin(origin + k * width, width, n, 0, None)
            for k, n in sorted(merged.items())]


def parse_time(text: str, tz_offset_minutes: int = 0) -> float:
    """Epoch seconds from a number or an ISO-8601 string (naive means the given offset)."""
    try:
        return float(text)
    except ValueError:
        pass
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone(timedelta(minutes=tz_offset_minutes)))
    return dt.timestamp()


def format_time(ts: float, tz_offset_minutes: int = 0) -> str:
    tz = timezone(timedelta(minutes=tz_offset_minutes))
    return datetime.fromtimestamp(ts, tz).isoformat()


def load_annotations(path: str | Path, tz_offset_minutes: int = 0) -> list[Annotation]:
    """Read ``start end label`` lines; the label may contain spaces."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 2)
        if len(parts) < 3:
            raise ValueError(f"{path}:{lineno}: expected 'start end label'")
        start = parse_time(parts[0], tz_offset_minutes)
        end = parse_time(parts[1], tz_offset_minutes)
        if end < start:
            raise ValueError(f"{path}:{lineno}: annotation ends before it starts")
        out.append(Annotation(start, end, parts[2]))
    return out


def label_bins(bins: Sequence[PresenceBin], annotations: Sequence[Annotation]) -> list[str]:
    """Labels of annotations overlapping each bin, joined with ``; ``."""
    labels = []
    for b in bins:
        hits = [a.label for a in annotations if a.start < b.end and a.end > b.start]
        labels.append("; ".join(hits))
    return labels
