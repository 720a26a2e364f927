"""Classic pcap reading and writing for 802.11 captures.

Only the two link types a monitor-mode probe sniffer produces are accepted:
bare 802.11 (105) and 802.11 with a radiotap pseudo-header (127). Both
timestamp resolutions and both byte orders are read and written.
"""

from __future__ import annotations

import os
import re
import struct
import warnings
import zlib
from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16
DEFAULT_SNAPLEN = 65535

_MAGIC_MICRO = 0xA1B2C3D4
_MAGIC_NANO = 0xA1B23C4D


class LinkType(IntEnum):
    IEEE802_11 = 105
    RADIOTAP = 127


class Resolution(Enum):
    MICRO = "micro"
    NANO = "nano"

    @property
    def per_second(self) -> int:
        return 1_000_000 if self is Resolution.MICRO else 1_000_000_000


class ByteOrder(Enum):
    LITTLE = "little"
    BIG = "big"

    @property
    def prefix(self) -> str:
        return "<" if self is ByteOrder.LITTLE else ">"


# leading four file bytes -> (byte order, resolution)
_MAGICS = {
    struct.pack("<I", _MAGIC_MICRO): (ByteOrder.LITTLE, Resolution.MICRO),
    struct.pack(">I", _MAGIC_MICRO): (ByteOrder.BIG, Resolution.MICRO),
    struct.pack("<I", _MAGIC_NANO): (ByteOrder.LITTLE, Resolution.NANO),
    struct.pack(">I", _MAGIC_NANO): (ByteOrder.BIG, Resolution.NANO),
}


class CaptureError(Exception):
    """Base class for capture file problems."""


class UnsupportedFormatError(CaptureError):
    pass


class TruncatedCaptureError(CaptureError):
    def __init__(self, message: str, records_read: int):
        super().__init__(message)
        self.records_read = records_read


class TruncatedCaptureWarning(UserWarning):
    pass


class SnapLengthError(ValueError):
    def __init__(self, index: int, length: int, snap_length: int):
        super().__init__(
            f"record {index}: payload of {length} bytes exceeds snap length {snap_length}"
        )
        self.index = index


class MalformedFrameError(ValueError):
    """A frame or pseudo-header is internally inconsistent."""


@dataclass(frozen=True, slots=True)
class CaptureMeta:
    link_type: LinkType = LinkType.IEEE802_11
    resolution: Resolution = Resolution.MICRO
    byte_order: ByteOrder = ByteOrder.LITTLE
    snap_length: int = DEFAULT_SNAPLEN

    def __post_init__(self):
        try:
            object.__setattr__(self, "link_type", LinkType(self.link_type))
        except ValueError:
            raise UnsupportedFormatError(f"unsupported link type {self.link_type}") from None


@dataclass(frozen=True, slots=True)
class CaptureRecord:
    """One captured frame.

    The timestamp is held as whole seconds plus nanoseconds so that both pcap
    resolutions round-trip exactly.
    """

    ts_sec: int
    ts_nsec: int
    payload: bytes
    original_length: int | None = None

    def __post_init__(self):
        if self.ts_sec < 0 or not 0 <= self.ts_nsec < 1_000_000_000:
            raise ValueError(f"invalid timestamp {self.ts_sec}.{self.ts_nsec:09d}")
        if self.original_length is None:
            object.__setattr__(self, "original_length", len(self.payload))
        elif self.original_length < len(self.payload):
            raise ValueError("original_length smaller than captured payload")

    @property
    def captured_length(self) -> int:
        return len(self.payload)

    @property
    def timestamp(self) -> float:
        return self.ts_sec + self.ts_nsec / 1e9

    @classmethod
    def at(cls, timestamp: float, payload: bytes, resolution: Resolution = Resolution.MICRO):
        """Build a record from a float timestamp, quantized to ``resolution``."""
        ticks = round(timestamp * resolution.per_second)
        sec, frac = divmod(ticks, resolution.per_second)
        return cls(sec, frac * (1_000_000_000 // resolution.per_second), payload)


class CaptureReader:
    """Iterate over the records of a classic pcap file.

    A trailing record cut short (a sniffer losing power mid-write) ends
    iteration with a :class:`TruncatedCaptureWarning`; complete records are
    kept and ``truncated`` is set. Pass ``strict=True`` to raise
    :class:`TruncatedCaptureError` instead.
    """

    def __init__(self, source: str | os.PathLike | BinaryIO, strict: bool = False):
        if hasattr(source, "read"):
            self._fh = source
            self._owned = False
            self.name = getattr(source, "name", "<stream>")
        else:
            self._fh = open(source, "rb")
            self._owned = True
            self.name = os.fspath(source)
        self.strict = strict
        self.truncated = False
        self.records_read = 0
        try:
            self.meta = self._read_global_header()
        except BaseException:
            self.close()
            raise

    def _read_global_header(self) -> CaptureMeta:
        header = self._fh.read(GLOBAL_HEADER_LEN)
        if len(header) < 4 or header[:4] not in _MAGICS:
            raise UnsupportedFormatError(f"{self.name}: not a classic pcap file")
        if len(header) < GLOBAL_HEADER_LEN:
            raise TruncatedCaptureError(f"{self.name}: truncated global header", 0)
        order, resolution = _MAGICS[header[:4]]
        _, _, _, _, _, snaplen, network = struct.unpack(order.prefix + "IHHiIII", header)
        # upper 16 bits of the link-type word carry FCS metadata in newer files
        link = network & 0xFFFF
        if link not in (LinkType.IEEE802_11, LinkType.RADIOTAP):
            raise UnsupportedFormatError(f"{self.name}: unsupported link type {link}")
        self._rec_struct = struct.Struct(order.prefix + "IIII")
        self._frac_scale = 1_000_000_000 // resolution.per_second
        self._per_second = resolution.per_second
        return CaptureMeta(LinkType(link), resolution, order, snaplen)

    def __iter__(self) -> Iterator[CaptureRecord]:
        read = self._fh.read
        unpack = self._rec_struct.unpack
        while True:
            header = read(RECORD_HEADER_LEN)
            if not header:
                return
            if len(header) < RECORD_HEADER_LEN:
                self._truncate("record header")
                return
            ts_sec, ts_frac, incl_len, orig_len = unpack(header)
            payload = read(incl_len)
            if len(payload) < incl_len:
                self._truncate("record payload")
                return
            if ts_frac >= self._per_second:
                raise CaptureError(
                    f"{self.name}: record {self.records_read} has fractional timestamp "
                    f"{ts_frac} out of range"
                )
            self.records_read += 1
            yield CaptureRecord(
                ts_sec, ts_frac * self._frac_scale, payload, max(orig_len, incl_len)
            )

    def _truncate(self, what: str):
        message = f"{self.name}: truncated {what} after {self.records_read} complete records"
        if self.strict:
            raise TruncatedCaptureError(message, self.records_read)
        self.truncated = True
        warnings.warn(message, TruncatedCaptureWarning, stacklevel=3)

    def close(self):
        if self._owned:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_capture(path: str | os.PathLike | BinaryIO, strict: bool = False) -> CaptureReader:
    return CaptureReader(path, strict=strict)


def read_capture(path, strict: bool = False) -> tuple[CaptureMeta, list[CaptureRecord]]:
    with open_capture(path, strict=strict) as reader:
        return reader.meta, list(reader)


class CaptureWriter:
    """Streaming pcap writer; the global header is written on open."""

    def __init__(self, path: str | os.PathLike, meta: CaptureMeta):
        self.path = Path(path)
        self.meta = meta
        self._order = meta.byte_order.prefix
        self._rec = struct.Struct(self._order + "IIII")
        self._per_second = meta.resolution.per_second
        self._frac_scale = 1_000_000_000 // self._per_second
        self.count = 0
        self.bytes_written = 0
        self._fh = open(self.path, "wb")
        magic = _MAGIC_MICRO if meta.resolution is Resolution.MICRO else _MAGIC_NANO
        self._emit(struct.pack(self._order + "IHHiIII", magic, 2, 4, 0, 0,
                               meta.snap_length, int(meta.link_type)))

    def _emit(self, data: bytes):
        self._fh.write(data)
        self.bytes_written += len(data)

    def write(self, record: CaptureRecord):
        if record.captured_length > self.meta.snap_length:
            raise SnapLengthError(self.count, record.captured_length, self.meta.snap_length)
        frac, rem = divmod(record.ts_nsec, self._frac_scale)
        if rem:
            raise ValueError(
                f"record {self.count}: timestamp needs nanosecond resolution"
            )
        self._emit(self._rec.pack(record.ts_sec, frac, record.captured_length,
                                  record.original_length))
        self._emit(record.payload)
        self.count += 1

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_capture(path, meta: CaptureMeta, records: Iterable[CaptureRecord]) -> int:
    """Write ``records`` to a new pcap file and return the number of bytes written.

    Oversized payloads are rejected before anything touches the disk.
    """
    records = list(records)
    for i, rec in enumerate(records):
        if rec.captured_length > meta.snap_length:
            raise SnapLengthError(i, rec.captured_length, meta.snap_length)
    with CaptureWriter(path, meta) as writer:
        for rec in records:
            writer.write(rec)
    return writer.bytes_written


class RotatingCaptureWriter:
    """Write a series of pcap files ``<stem>-NNNN.pcap``, each valid on its own.

    Rotation happens after ``max_records`` records, when a record falls past
    the current ``max_interval`` window (a window with no records still gets a
    header-only file), or whenever :meth:`rotate` is called. Numbering
    continues after the highest index already present in the directory.
    """

    def __init__(self, directory, stem: str, meta: CaptureMeta,
                 max_records: int | None = None, max_interval: float | None = None):
        if max_records is not None and max_records < 1:
            raise ValueError("max_records must be positive")
        if max_interval is not None and max_interval <= 0:
            raise ValueError("max_interval must be positive")
        self.directory = Path(directory)
        self.stem = stem
        self.meta = meta
        self.max_records = max_records
        self.max_interval = max_interval
        self.paths: list[Path] = []
        self.total = 0
        self._window_end: float | None = None
        self._next_index = self._first_free_index()
        self._writer = self._open_next()

    def _first_free_index(self) -> int:
        pattern = re.compile(re.escape(self.stem) + r"-(\d{4,})\.pcap$")
        taken = [int(m.group(1)) for p in self.directory.iterdir()
                 if (m := pattern.match(p.name))]
        return max(taken) + 1 if taken else 0

    def _open_next(self) -> CaptureWriter:
        path = self.directory / f"{self.stem}-{self._next_index:04d}.pcap"
        self._next_index += 1
        self.paths.append(path)
        return CaptureWriter(path, self.meta)

    def rotate(self):
        self._writer.close()
        self._writer = self._open_next()

    def write(self, record: CaptureRecord):
        if self.max_interval is not None:
            if self._window_end is None:
                self._window_end = record.timestamp + self.max_interval
            while record.timestamp >= self._window_end:
                self.rotate()
                self._window_end += self.max_interval
        if self.max_records is not None and self._writer.count >= self.max_records:
            self.rotate()
        self._writer.write(record)
        self.total += 1

    def close(self):
        self._writer.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def rotate_writer(writer: RotatingCaptureWriter) -> Path:
    """Close the current file of ``writer`` and start the next; return the new path."""
    writer.rotate()
    return writer.paths[-1]


# radiotap present-bitmask fields preceding Flags: TSFT (8 bytes, 8-aligned)
_RT_TSFT = 1 << 0
_RT_FLAGS = 1 << 1
_RT_EXT = 1 << 31
_RT_FLAG_FCS = 0x10


def _radiotap_length(payload: bytes) -> int:
    if len(payload) < 4:
        raise MalformedFrameError("radiotap header shorter than 4 bytes")
    length = int.from_bytes(payload[2:4], "little")
    if length < 8 or length > len(payload):
        raise MalformedFrameError(
            f"radiotap length {length} inconsistent with payload of {len(payload)} bytes"
        )
    return length


def radiotap_flags(payload: bytes) -> int | None:
    """Return the radiotap Flags byte, or None when the header omits it."""
    length = _radiotap_length(payload)
    present = int.from_bytes(payload[4:8], "little")
    offset = 8
    word = present
    while word & _RT_EXT:
        if offset + 4 > length:
            raise MalformedFrameError("radiotap present bitmask overruns header")
        word = int.from_bytes(payload[offset:offset + 4], "little")
        offset += 4
    if not present & _RT_FLAGS:
        return None
    if present & _RT_TSFT:
        offset = (offset + 7) & ~7
        offset += 8
    if offset >= length:
        raise MalformedFrameError("radiotap Flags field overruns header")
    return payload[offset]


def strip_radiotap(record: CaptureRecord, meta: CaptureMeta, drop_fcs: bool = True) -> bytes:
    """Return the bare 802.11 frame carried by ``record``.

    For radiotap captures the pseudo-header is skipped, and a trailing FCS
    flagged in the radiotap Flags field is removed unless ``drop_fcs`` is off.
    """
    if meta.link_type is LinkType.IEEE802_11:
        return record.payload
    payload = record.payload
    length = _radiotap_length(payload)
    frame = payload[length:]
    if drop_fcs:
        flags = radiotap_flags(payload)
        if flags is not None and flags & _RT_FLAG_FCS:
            if len(frame) < 4:
                raise MalformedFrameError("frame shorter than its FCS")
            frame = frame[:-4]
    return frame


def replace_frame(record: CaptureRecord, meta: CaptureMeta, frame: bytes) -> CaptureRecord:
    """Return ``record`` with its 802.11 frame swapped for ``frame``.

    The radiotap header is kept and a flagged FCS is recomputed.
    """
    if meta.link_type is LinkType.IEEE802_11:
        payload = frame
    else:
        payload = record.payload
        length = _radiotap_length(payload)
        flags = radiotap_flags(payload)
        tail = b""
        if flags is not None and flags & _RT_FLAG_FCS:
            tail = struct.pack("<I", zlib.crc32(frame) & 0xFFFFFFFF)
        payload = payload[:length] + frame + tail
    extra = record.original_length - record.captured_length
    return CaptureRecord(record.ts_sec, record.ts_nsec, payload, len(payload) + extra)
