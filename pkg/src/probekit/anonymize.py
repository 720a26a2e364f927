"""Salted SHA-512 pseudonymization of probe-request captures.

MAC addresses, SSIDs and WPS UUID-E values are replaced with values derived
from a per-run salt. Surrogates keep the structure the analysis depends on:
the two functional bits of a MAC, a known randomization prefix, and SSID
lengths. Nothing that maps surrogates back to originals is ever stored.

Global addresses are hashed. Locally administered addresses go through a
salted bit permutation plus mask instead, so the set of bit positions in
which a device's random addresses differ survives anonymization.
"""

from __future__ import annotations

import hashlib
import os
import random
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .dot11 import (BROADCAST, MGMT_HEADER_LEN, TAG_SSID, TAG_VENDOR_SPECIFIC,
                    WPS_ATTR_UUID_E, InformationElement, MacAddress,
                    parse_probe_request, serialize_elements, wps_attributes)
from .fingerprint import UUID_E_LEN
from .macid import DEFAULT_PREFIX_RULES, PrefixRule
from .pcapio import (CaptureMeta, CaptureRecord, MalformedFrameError, CaptureWriter,
                     open_capture, replace_frame, strip_radiotap)


class NoOpAnonymizationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AnonymizationPolicy:
    salt: bytes
    hash_mac: bool = True
    hash_ssid: bool = True
    hash_uuid_e: bool = True
    preserve_locality_bits: bool = True
    # addresses under these prefixes keep them, so prefix statistics survive
    preserve_prefixes: tuple[PrefixRule, ...] = DEFAULT_PREFIX_RULES

    def __post_init__(self):
        if self.hashing_enabled and not self.salt:
            raise ValueError("a non-empty salt is required when hashing is enabled")

    @property
    def hashing_enabled(self) -> bool:
        return self.hash_mac or self.hash_ssid or self.hash_uuid_e

    @classmethod
    def random(cls, **kwargs) -> AnonymizationPolicy:
        return cls(salt=os.urandom(32), **kwargs)


@dataclass
class AnonymizationReport:
    records_in: int = 0
    records_out: int = 0
    dropped_non_probe: int = 0
    dropped_malformed: int = 0
    macs: int = 0
    ssids: int = 0
    uuids: int = 0


def _stream(salt: bytes, label: bytes, data: bytes, length: int) -> bytes:
    out = b""
    counter = 0
    while len(out) < length:
        out += hashlib.sha512(salt + label + counter.to_bytes(4, "big") + data).digest()
        counter += 1
    return out[:length]


# bit positions of a 48-bit address, bit 47 = MSB of octet 0; 40 and 41 are functional
_HIGH_BITS = [b for b in range(24, 48) if b not in (40, 41)]
_LOW_BITS = list(range(24))
_FUNCTIONAL = 0x03 << 40


class _AffineMap:
    """Salted permutation of the non-functional bits followed by a mask.

    High and low halves are permuted separately so a preserved 3-byte prefix
    can share the low-half map with every other local address. High halves
    landing on a preserved prefix are walked on until they leave it, which
    keeps the map a bijection that never invents prefix addresses.
    """

    def __init__(self, salt: bytes, reserved: Iterable[bytes] = ()):
        stream = _stream(salt, b"mac-affine", b"", 64)
        rng = random.Random(stream[8:])
        self.high = list(zip(_HIGH_BITS, rng.sample(_HIGH_BITS, len(_HIGH_BITS))))
        self.low = list(zip(_LOW_BITS, rng.sample(_LOW_BITS, len(_LOW_BITS))))
        self.mask = int.from_bytes(stream[:6], "big") & ~_FUNCTIONAL
        self.reserved = {int.from_bytes(p, "big") << 24 for p in reserved}

    @staticmethod
    def _permute(value: int, pairs) -> int:
        out = 0
        for src, dst in pairs:
            out |= (value >> src & 1) << dst
        return out

    def _high_step(self, value: int) -> int:
        return (value & _FUNCTIONAL | self._permute(value, self.high)) ^ self.mask & 0xFFFFFF000000

    def __call__(self, octets: bytes) -> bytes:
        value = int.from_bytes(octets, "big")
        low = self._permute(value, self.low) ^ self.mask & 0xFFFFFF
        high = value & 0xFFFFFF000000
        if high not in self.reserved:
            high = self._high_step(high)
            while high in self.reserved:
                high = self._high_step(high)
        return (high | low).to_bytes(6, "big")


class Anonymizer:
    """Rewrites probe-request frames under one policy.

    Surrogates are cached only for the lifetime of this object so that the
    same identifier maps to the same surrogate throughout a run.
    """

    def __init__(self, policy: AnonymizationPolicy):
        self.policy = policy
        self.report = AnonymizationReport()
        self._macs: dict[bytes, bytes] = {}
        self._affine = _AffineMap(policy.salt, (r.prefix for r in policy.preserve_prefixes))
        if not policy.hashing_enabled:
            warnings.warn("anonymization policy hashes nothing; output equals input",
                          NoOpAnonymizationWarning, stacklevel=2)

    def surrogate_mac(self, octets: bytes) -> bytes:
        cached = self._macs.get(octets)
        if cached is not None:
            return cached
        digest = _stream(self.policy.salt, b"mac", octets, 6)
        if self.policy.preserve_locality_bits:
            if octets[0] & 0x02:
                out = self._affine(octets)
            else:
                out = bytes((digest[0] & 0xFC | octets[0] & 0x03,)) + digest[1:]
        else:
            out = bytes((digest[0] & 0xFE,)) + digest[1:]
        self._macs[octets] = out
        return out

    def surrogate_ssid(self, ssid: bytes) -> bytes:
        return _stream(self.policy.salt, b"ssid", ssid, len(ssid))

    def surrogate_uuid(self, uuid: bytes) -> bytes:
        return _stream(self.policy.salt, b"uuid-e", uuid, UUID_E_LEN)

    def _rewrite_wps(self, payload: bytes) -> bytes:
        attrs = wps_attributes(payload)
        if not attrs:
            return payload
        out = bytearray(payload)
        pos = 4
        for attr_id, value in attrs:
            if attr_id == WPS_ATTR_UUID_E and len(value) == UUID_E_LEN:
                out[pos + 4:pos + 4 + UUID_E_LEN] = self.surrogate_uuid(value)
                self.report.uuids += 1
            pos += 4 + len(value)
        return bytes(out)

    def rewrite_frame(self, frame: bytes) -> bytes | None:
        """Anonymized copy of a probe-request frame, or None for other frames."""
        probe = parse_probe_request(frame)
        if probe is None:
            return None
        policy = self.policy
        header = bytearray(frame[:MGMT_HEADER_LEN])
        if policy.hash_mac:
            for offset in (4, 10, 16):
                addr = bytes(header[offset:offset + 6])
                if addr != BROADCAST:
                    header[offset:offset + 6] = self.surrogate_mac(addr)
                    self.report.macs += 1
        if probe.protected:
            return bytes(header) + probe.body

        elements = []
        for ie in probe.elements:
            payload = ie.payload
            if ie.tag_id == TAG_SSID and payload and policy.hash_ssid:
                payload = self.surrogate_ssid(payload)
                self.report.ssids += 1
            elif ie.tag_id == TAG_VENDOR_SPECIFIC and policy.hash_uuid_e:
                payload = self._rewrite_wps(payload)
            elements.append(InformationElement(ie.tag_id, payload))
        parsed_len = sum(2 + len(ie.payload) for ie in probe.elements)
        tail = probe.body[parsed_len:]
        return bytes(header) + serialize_elements(elements) + tail

    def records(self, records: Iterable[CaptureRecord], meta: CaptureMeta) -> Iterator[CaptureRecord]:
        for record in records:
            self.report.records_in += 1
            try:
                frame = strip_radiotap(record, meta)
                new = self.rewrite_frame(frame)
            except MalformedFrameError:
                self.report.dropped_malformed += 1
                continue
            if new is None:
                self.report.dropped_non_probe += 1
                continue
            self.report.records_out += 1
            yield replace_frame(record, meta, new)


def anonymize_records(records: Iterable[CaptureRecord], meta: CaptureMeta,
                      policy: AnonymizationPolicy) -> tuple[list[CaptureRecord], AnonymizationReport]:
    anon = Anonymizer(policy)
    out = list(anon.records(records, meta))
    return out, anon.report


def anonymize_capture(inputs: str | os.PathLike | Sequence, output: str | os.PathLike,
                      policy: AnonymizationPolicy) -> AnonymizationReport:
    """Write an anonymized copy of one or more captures to ``output``.

    Several inputs are read in lexicographic order into a single output; they
    must share link type and timestamp resolution. Non-probe frames are dropped.
    """
    if isinstance(inputs, (str, os.PathLike)):
        inputs = [inputs]
    paths = sorted(Path(p) for p in inputs)
    output = Path(output)
    for p in paths:
        if output.exists() and output.resolve() == p.resolve():
            raise ValueError(f"refusing to overwrite input {p}")
    anon = Anonymizer(policy)
    tmp = output.with_name(output.name + ".part")
    writer = None
    try:
        for path in paths:
            with open_capture(path) as reader:
                if writer is None:
                    writer = CaptureWriter(tmp, reader.meta)
                elif (reader.meta.link_type, reader.meta.resolution) != (
                        writer.meta.link_type, writer.meta.resolution):
                    raise ValueError(f"{path}: link type or resolution differs from earlier inputs")
                for rec in anon.records(reader, reader.meta):
                    writer.write(rec)
        if writer is None:
            raise ValueError("no input captures given")
        writer.close()
        os.replace(tmp, output)
    finally:
        if writer is not None:
            writer.close()
        if tmp.exists():
            tmp.unlink()
    return anon.report


def mac_substrings(data: bytes, macs: Iterable[MacAddress | bytes]) -> list[bytes]:
    """Which of ``macs`` occur verbatim anywhere in ``data``."""
    found = []
    for mac in macs:
        octets = mac.octets if isinstance(mac, MacAddress) else mac
        if octets in data:
            found.append(octets)
    return found
