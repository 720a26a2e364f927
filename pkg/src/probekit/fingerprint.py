"""Per-probe device fingerprints, UUID-E extraction and PNL similarity."""

from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass
from typing import AbstractSet, Iterable

from .dot11 import (TAG_EXT_SUPPORTED_RATES, TAG_EXTENDED_CAPABILITIES,
                    TAG_HT_CAPABILITIES, TAG_SUPPORTED_RATES, TAG_VENDOR_SPECIFIC,
                    TAG_VHT_CAPABILITIES, WPS_ATTR_UUID_E, ProbeRequest,
                    wps_attributes)

FINGERPRINT_TAGS = frozenset({
    TAG_SUPPORTED_RATES,
    TAG_EXT_SUPPORTED_RATES,
    TAG_HT_CAPABILITIES,
    TAG_VHT_CAPABILITIES,
    TAG_EXTENDED_CAPABILITIES,
    TAG_VENDOR_SPECIFIC,
})

UUID_E_LEN = 16


class MalformedAttributeWarning(UserWarning):
    pass


@dataclass(frozen=True, slots=True)
class Fingerprint:
    digest: bytes
    component_tags: tuple[int, ...] = ()

    @property
    def hex(self) -> str:
        return self.digest.hex()

    @property
    def is_empty(self) -> bool:
        return not self.component_tags

    def __str__(self) -> str:
        return self.hex


EMPTY_FINGERPRINT = Fingerprint(hashlib.sha256(b"").digest(), ())


def _strip_uuid_e(payload: bytes) -> bytes:
    attrs = wps_attributes(payload)
    if attrs is None:
        return payload
    # re-encode the WPS element without UUID-E; any unparsed tail is dropped
    kept = b"".join(struct.pack(">HH", a, len(v)) + v
                    for a, v in attrs if a != WPS_ATTR_UUID_E)
    return payload[:4] + kept


def canonical_form(probe: ProbeRequest) -> tuple[bytes, tuple[int, ...]]:
    """Serialization hashed into the fingerprint, and the tags that went into it."""
    parts = []
    tags = []
    for ie in probe.elements:
        if ie.tag_id not in FINGERPRINT_TAGS:
            continue
        payload = ie.payload
        if ie.tag_id == TAG_VENDOR_SPECIFIC:
            if len(payload) < 3:
                continue
            payload = _strip_uuid_e(payload)
        parts.append(bytes((ie.tag_id,)) + struct.pack(">H", len(payload)) + payload)
        tags.append(ie.tag_id)
    return b"".join(parts), tuple(tags)


def fingerprint_probe(probe: ProbeRequest) -> Fingerprint:
    """Hash the capability and vendor elements of ``probe`` in on-air order.

    The SSID, addresses, sequence number and timestamp play no part, and the
    UUID-E attribute is removed from WPS elements.
    """
    data, tags = canonical_form(probe)
    if not tags:
        return EMPTY_FINGERPRINT
    return Fingerprint(hashlib.sha256(data).digest(), tags)


def uuid_e(probe: ProbeRequest) -> bytes | None:
    for ie in probe.elements:
        if ie.tag_id != TAG_VENDOR_SPECIFIC:
            continue
        for attr_id, value in wps_attributes(ie.payload) or ():
            if attr_id != WPS_ATTR_UUID_E:
                continue
            if len(value) != UUID_E_LEN:
                warnings.warn(f"UUID-E attribute of {len(value)} bytes ignored",
                              MalformedAttributeWarning, stacklevel=2)
                continue
            return value
    return None


def pnl_of(probes: Iterable[ProbeRequest]) -> frozenset[bytes]:
    """Directed SSIDs seen in ``probes`` (wildcard excluded)."""
    return frozenset(p.ssid for p in probes if p.ssid)


def pnl_similarity(a: AbstractSet[bytes], b: AbstractSet[bytes]) -> float:
    """Jaccard index of two SSID sets; 0 when both are empty."""
    union = len(a | b)
    if not union:
        return 0.0
    return len(a & b) / union
