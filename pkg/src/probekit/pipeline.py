"""Load probe requests from one or more capture files."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .dot11 import ProbeRequest, parse_probe_request
from .pcapio import CaptureError, CaptureMeta, CaptureRecord, MalformedFrameError, open_capture, strip_radiotap

log = logging.getLogger(__name__)


@dataclass
class LoadResult:
    probes: list[ProbeRequest] = field(default_factory=list)
    records: int = 0
    non_probe: int = 0
    malformed: int = 0
    truncated_files: list[str] = field(default_factory=list)
    failed_files: dict[str, str] = field(default_factory=dict)
    files: int = 0


def probes_from_records(records: Iterable[CaptureRecord], meta: CaptureMeta,
                        result: LoadResult | None = None) -> LoadResult:
    result = result or LoadResult()
    for rec in records:
        result.records += 1
        try:
            probe = parse_probe_request(strip_radiotap(rec, meta), rec.timestamp)
        except MalformedFrameError:
            result.malformed += 1
            continue
        if probe is None:
            result.non_probe += 1
        else:
            result.probes.append(probe)
    return result


def load_probes(paths: Sequence[str | os.PathLike]) -> LoadResult:
    """Read captures in lexicographic path order as one concatenated capture.

    Unreadable files are recorded in ``failed_files`` and skipped.
    """
    result = LoadResult()
    for path in sorted(map(os.fspath, paths)):
        try:
            with open_capture(path) as reader:
                probes_from_records(reader, reader.meta, result)
                if reader.truncated:
                    result.truncated_files.append(path)
            result.files += 1
        except (CaptureError, OSError) as exc:
            log.warning("skipping %s: %s", path, exc)
            result.failed_files[path] = str(exc)
    return result
