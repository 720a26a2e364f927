"""802.11 probe-request decoding and information-element inventory."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, fields
from typing import Iterable

from .pcapio import MalformedFrameError

MGMT_HEADER_LEN = 24

TYPE_MGMT = 0
SUBTYPE_PROBE_REQ = 4
SUBTYPE_BEACON = 8
FLAG_PROTECTED = 0x40

TAG_SSID = 0
TAG_SUPPORTED_RATES = 1
TAG_HT_CAPABILITIES = 45
TAG_EXT_SUPPORTED_RATES = 50
TAG_EXTENDED_CAPABILITIES = 127
TAG_VHT_CAPABILITIES = 191
TAG_VENDOR_SPECIFIC = 221

WPS_OUI = b"\x00\x50\xf2"
WPS_OUI_TYPE = 0x04
WPS_ATTR_UUID_E = 0x1047

# length of the opaque bodies seen in encrypted probe requests
OPAQUE_BODY_LEN = 22

BROADCAST = b"\xff" * 6


@dataclass(frozen=True, slots=True, order=True)
class MacAddress:
    octets: bytes

    def __post_init__(self):
        if len(self.octets) != 6:
            raise ValueError(f"MAC address needs 6 octets, got {len(self.octets)}")

    @classmethod
    def parse(cls, text: str) -> MacAddress:
        digits = text.replace(":", "").replace("-", "").replace(".", "")
        if len(digits) != 12:
            raise ValueError(f"not a MAC address: {text!r}")
        return cls(bytes.fromhex(digits))

    @property
    def is_local(self) -> bool:
        return bool(self.octets[0] & 0x02)

    @property
    def is_group(self) -> bool:
        return bool(self.octets[0] & 0x01)

    def __str__(self) -> str:
        return ":".join(f"{b:02X}" for b in self.octets)

    def __repr__(self) -> str:
        return f"MacAddress('{self}')"


@dataclass(frozen=True, slots=True)
class InformationElement:
    tag_id: int
    payload: bytes = b""

    def __post_init__(self):
        if not 0 <= self.tag_id <= 255:
            raise ValueError(f"tag id {self.tag_id} out of range")
        if len(self.payload) > 255:
            raise ValueError(f"IE payload of {len(self.payload)} bytes exceeds 255")

    def to_bytes(self) -> bytes:
        return bytes((self.tag_id, len(self.payload))) + self.payload


@dataclass(frozen=True, slots=True)
class ProbeRequest:
    timestamp: float
    source: MacAddress
    sequence_number: int
    elements: tuple[InformationElement, ...] = ()
    malformed_tail: bool = False
    protected: bool = False
    body: bytes = b""

    @property
    def ssid(self) -> bytes | None:
        """Raw SSID octets, or None for a wildcard probe (first tag 0 wins)."""
        for ie in self.elements:
            if ie.tag_id == TAG_SSID:
                return ie.payload or None
        return None

    @property
    def ssid_text(self) -> str:
        ssid = self.ssid
        return "" if ssid is None else ssid.decode("utf-8", errors="replace")

    def tags(self) -> list[int]:
        return [ie.tag_id for ie in self.elements]


def parse_elements(body: bytes) -> tuple[list[InformationElement], bool]:
    """Split a management-frame body into IEs.

    Returns the elements and whether parsing stopped on an element whose
    declared length overruns the body.
    """
    elements = []
    pos, end = 0, len(body)
    while pos < end:
        if pos + 2 > end:
            return elements, True
        tag, length = body[pos], body[pos + 1]
        stop = pos + 2 + length
        if stop > end:
            return elements, True
        elements.append(InformationElement(tag, body[pos + 2:stop]))
        pos = stop
    return elements, False


def serialize_elements(elements: Iterable[InformationElement]) -> bytes:
    return b"".join(ie.to_bytes() for ie in elements)


def frame_kind(frame: bytes) -> tuple[int, int, int]:
    """Return (version, type, subtype) from the frame-control field."""
    fc0 = frame[0]
    return fc0 & 0x03, (fc0 >> 2) & 0x03, fc0 >> 4


def parse_probe_request(frame: bytes, timestamp: float = 0.0) -> ProbeRequest | None:
    """Decode ``frame`` if it is a probe request, otherwise return None.

    An IE whose length runs past the end of the frame stops parsing; the
    elements before it are kept and ``malformed_tail`` is set. Protected
    frames keep their body opaque.
    """
    if len(frame) < 2:
        raise MalformedFrameError(f"frame of {len(frame)} bytes has no frame control")
    version, ftype, subtype = frame_kind(frame)
    if version != 0 or ftype != TYPE_MGMT or subtype != SUBTYPE_PROBE_REQ:
        return None
    if len(frame) < MGMT_HEADER_LEN:
        raise MalformedFrameError(
            f"probe request of {len(frame)} bytes is shorter than the management header"
        )
    protected = bool(frame[1] & FLAG_PROTECTED)
    seq_ctl = struct.unpack_from("<H", frame, 22)[0]
    body = frame[MGMT_HEADER_LEN:]
    if protected:
        elements, malformed = [], False
    else:
        elements, malformed = parse_elements(body)
    return ProbeRequest(
        timestamp=timestamp,
        source=MacAddress(frame[10:16]),
        sequence_number=seq_ctl >> 4,
        elements=tuple(elements),
        malformed_tail=malformed,
        protected=protected,
        body=body,
    )


def build_probe_frame(source: MacAddress, elements: Iterable[InformationElement] = (),
                      sequence_number: int = 0, protected: bool = False,
                      body: bytes | None = None, destination: bytes = BROADCAST,
                      bssid: bytes = BROADCAST) -> bytes:
    """Assemble a probe-request frame (no FCS)."""
    fc = bytes((SUBTYPE_PROBE_REQ << 4 | TYPE_MGMT << 2, FLAG_PROTECTED if protected else 0))
    header = (fc + b"\x00\x00" + destination + source.octets + bssid
              + struct.pack("<H", (sequence_number & 0x0FFF) << 4))
    return header + (serialize_elements(elements) if body is None else body)


def wps_attributes(payload: bytes) -> list[tuple[int, bytes]] | None:
    """Decode the attributes of a WPS vendor IE payload.

    Returns None when ``payload`` is not a WPS element (OUI 00:50:F2, type 4).
    Parsing stops at the first attribute that overruns the element.
    """
    if len(payload) < 4 or payload[:3] != WPS_OUI or payload[3] != WPS_OUI_TYPE:
        return None
    attrs = []
    pos = 4
    while pos + 4 <= len(payload):
        attr_id, length = struct.unpack_from(">HH", payload, pos)
        if pos + 4 + length > len(payload):
            break
        attrs.append((attr_id, payload[pos + 4:pos + 4 + length]))
        pos += 4 + length
    return attrs


def has_uuid_e_attribute(probe: ProbeRequest) -> bool:
    for ie in probe.elements:
        if ie.tag_id == TAG_VENDOR_SPECIFIC:
            attrs = wps_attributes(ie.payload)
            if attrs and any(a == WPS_ATTR_UUID_E for a, _ in attrs):
                return True
    return False


def encryption_triggers(probe: ProbeRequest) -> set[str]:
    """Name which encrypted-probe signals fire: ``protected_bit``, ``opaque_body``."""
    triggers = set()
    if probe.protected:
        triggers.add("protected_bit")
    if len(probe.body) == OPAQUE_BODY_LEN:
        _, malformed = parse_elements(probe.body)
        if malformed:
            triggers.add("opaque_body")
    return triggers


def detect_encrypted_probe(probe: ProbeRequest) -> bool:
    return bool(encryption_triggers(probe))


_TAG_CATEGORIES = {
    TAG_SUPPORTED_RATES: "supported_rates",
    TAG_EXT_SUPPORTED_RATES: "ext_supported_rates",
    TAG_HT_CAPABILITIES: "ht_capabilities",
    TAG_VHT_CAPABILITIES: "vht_capabilities",
    TAG_EXTENDED_CAPABILITIES: "extended_capabilities",
}


def vendor_bucket(count: int) -> str:
    return "vendor_5plus" if count >= 5 else f"vendor_{count}"


def classify_ies(probe: ProbeRequest) -> set[str]:
    """Inventory categories ``probe`` contributes to.

    Vendor-specific elements add ``vendor_specific`` plus one bucket named
    after how many tag-221 elements the probe carries.
    """
    categories = set()
    vendor_count = 0
    for ie in probe.elements:
        name = _TAG_CATEGORIES.get(ie.tag_id)
        if name:
            categories.add(name)
        elif ie.tag_id == TAG_VENDOR_SPECIFIC:
            vendor_count += 1
    if vendor_count:
        categories.add("vendor_specific")
        categories.add(vendor_bucket(vendor_count))
    if has_uuid_e_attribute(probe):
        categories.add("wps_uuid_e")
    if detect_encrypted_probe(probe):
        categories.add("wep_protected")
    return categories


@dataclass
class IeInventory:
    supported_rates: int = 0
    ext_supported_rates: int = 0
    ht_capabilities: int = 0
    vht_capabilities: int = 0
    extended_capabilities: int = 0
    vendor_specific: int = 0
    vendor_1: int = 0
    vendor_2: int = 0
    vendor_3: int = 0
    vendor_4: int = 0
    vendor_5plus: int = 0
    wps_uuid_e: int = 0
    wep_protected: int = 0
    total: int = 0
    # which encrypted-probe trigger fired, kept apart for debugging
    debug: dict = field(default_factory=lambda: {"protected_bit": 0, "opaque_body": 0,
                                                 "malformed_tail": 0})

    def add(self, probe: ProbeRequest):
        for name in classify_ies(probe):
            setattr(self, name, getattr(self, name) + 1)
        for trigger in encryption_triggers(probe):
            self.debug[trigger] += 1
        if probe.malformed_tail:
            self.debug["malformed_tail"] += 1
        self.total += 1

    def __add__(self, other: IeInventory) -> IeInventory:
        merged = IeInventory()
        for f in fields(self):
            if f.name == "debug":
                merged.debug = {k: self.debug.get(k, 0) + other.debug.get(k, 0)
                                for k in self.debug.keys() | other.debug.keys()}
            else:
                setattr(merged, f.name, getattr(self, f.name) + getattr(other, f.name))
        return merged

    def rows(self) -> list[tuple[str, int, float | None]]:
        """Report rows ``(element, count, percent)``; percent is None for the total."""
        def pct(n):
            return round(100.0 * n / self.total, 2) if self.total else 0.0

        rows = [(label, getattr(self, name), pct(getattr(self, name)))
                for name, label in INVENTORY_LABELS]
        rows.append(("Total Collected Probe Requests", self.total, None))
        return rows


INVENTORY_LABELS = [
    ("supported_rates", "Supported rates"),
    ("ext_supported_rates", "Extended Supported rates"),
    ("ht_capabilities", "HT Capabilities"),
    ("vht_capabilities", "VHT Capabilities"),
    ("extended_capabilities", "Extended Capabilities"),
    ("vendor_specific", "Vendor Specific elements"),
    ("vendor_1", "1 Vendor Specific element"),
    ("vendor_2", "2 Vendor Specific elements"),
    ("vendor_3", "3 Vendor Specific elements"),
    ("vendor_4", "4 Vendor Specific elements"),
    ("vendor_5plus", "5+ Vendor Specific elements"),
    ("wps_uuid_e", "WPS - UUID-E"),
    ("wep_protected", "WEP Protected"),
]


def inventory(probes: Iterable[ProbeRequest]) -> IeInventory:
    inv = IeInventory()
    for probe in probes:
        inv.add(probe)
    return inv
