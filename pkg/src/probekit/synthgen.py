"""Synthetic probe-request captures with ground-truth device labels.

Each device follows one MAC policy (fixed global address, per-SSID or
per-burst randomization, a fixed randomization prefix, or encrypted probes)
and a burst schedule. The generator is the oracle the analysis is checked
against.
"""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .dot11 import (OPAQUE_BODY_LEN, TAG_EXT_SUPPORTED_RATES, TAG_EXTENDED_CAPABILITIES,
                    TAG_HT_CAPABILITIES, TAG_SSID, TAG_SUPPORTED_RATES, TAG_VENDOR_SPECIFIC,
                    TAG_VHT_CAPABILITIES, WPS_ATTR_UUID_E, WPS_OUI, InformationElement,
                    MacAddress, build_probe_frame)
from .macid import DEFAULT_PREFIX_RULES
from .pcapio import CaptureMeta, CaptureRecord, Resolution

GLOBAL_FIXED = "global-fixed"
PER_SSID_RANDOM = "per-ssid-random"
PER_BURST_RANDOM = "per-burst-random"
PREFIX_RANDOM = "prefix-random"
PROTECTED_22B = "protected-22B"
MAC_POLICIES = (GLOBAL_FIXED, PER_SSID_RANDOM, PER_BURST_RANDOM, PREFIX_RANDOM, PROTECTED_22B)

WILDCARD_ONLY = "wildcard-only"
DIRECTED_PER_PNL = "directed-per-pnl"

# 2021-11-29 08:22 UTC
DEFAULT_START = 1638174120.0
DEFAULT_GAP_RANGE = (0.020, 0.100)

# every encrypted probe carries the same opaque body
PROTECTED_BODY = bytes(range(0x30, 0x30 + OPAQUE_BODY_LEN))


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Burst:
    """``probe_count`` probes starting ``time`` seconds after capture start.

    ``gap`` fixes the spacing between probes; None draws each spacing
    uniformly from 20 to 100 ms.
    """

    time: float
    probe_count: int
    gap: float | None = None


@dataclass
class DevicePolicy:
    label: str
    mac_mode: str
    bursts: Sequence[Burst]
    ie_profile: Sequence[InformationElement] = ()
    pnl: Sequence[bytes] = ()
    ssid_behavior: str = WILDCARD_ONLY
    prefix: bytes = DEFAULT_PREFIX_RULES[0].prefix
    uuid_e: bytes | None = None
    local_mac: bool = False  # protected-22B only: use a randomized source address

    def validate(self):
        if self.mac_mode not in MAC_POLICIES:
            raise ScheduleError(f"{self.label}: unknown mac_mode {self.mac_mode!r}")
        if self.ssid_behavior not in (WILDCARD_ONLY, DIRECTED_PER_PNL):
            raise ScheduleError(f"{self.label}: unknown ssid_behavior {self.ssid_behavior!r}")
        if not self.bursts:
            raise ScheduleError(f"{self.label}: empty burst schedule")
        for b in self.bursts:
            if b.probe_count < 1:
                raise ScheduleError(f"{self.label}: burst at {b.time} has no probes")
            if b.gap is not None and not b.gap > 0:
                raise ScheduleError(f"{self.label}: non-positive inter-probe gap {b.gap}")
            if b.time < 0:
                raise ScheduleError(f"{self.label}: burst time {b.time} before capture start")
        if self.mac_mode == PREFIX_RANDOM and (len(self.prefix) != 3 or not self.prefix[0] & 2):
            raise ScheduleError(f"{self.label}: prefix must be a 3-byte local prefix")
        if any(not s for s in self.pnl):
            raise ScheduleError(f"{self.label}: PNL contains the empty SSID")


@dataclass
class TruthInstance:
    device: str
    mac: MacAddress
    probe_indices: list[int] = field(default_factory=list)


@dataclass
class GroundTruth:
    probe_labels: list[str]
    instances: list[TruthInstance]
    device_modes: dict[str, str]

    @property
    def expected_instance_count(self) -> int:
        return len(self.instances)

    @property
    def expected_device_count(self) -> int:
        return len(self.device_modes)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["probe_index", "device_label"])
        w.writerows(enumerate(self.probe_labels))
        return buf.getvalue()

    def write_csv(self, path):
        Path(path).write_text(self.to_csv())


def read_truth_csv(path) -> list[str]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    rows.sort(key=lambda r: int(r["probe_index"]))
    return [r["device_label"] for r in rows]


@dataclass
class SyntheticCapture:
    meta: CaptureMeta
    records: list[CaptureRecord]
    truth: GroundTruth


def _local_mac(rng: random.Random) -> MacAddress:
    octets = bytearray(rng.randbytes(6))
    octets[0] = octets[0] & 0xFC | 0x02
    return MacAddress(bytes(octets))


def _global_mac(rng: random.Random) -> MacAddress:
    octets = bytearray(rng.randbytes(6))
    octets[0] &= 0xFC
    return MacAddress(bytes(octets))


def wps_element(uuid: bytes, extra: bytes = b"") -> InformationElement:
    """WPS vendor IE holding a UUID-E attribute (plus any raw ``extra`` attributes)."""
    body = WPS_OUI + b"\x04"
    body += b"\x10\x4a\x00\x01\x10"  # version 1.0
    body += WPS_ATTR_UUID_E.to_bytes(2, "big") + len(uuid).to_bytes(2, "big") + uuid
    return InformationElement(TAG_VENDOR_SPECIFIC, body + extra)


def random_ie_profile(rng: random.Random, vht: bool = False,
                      vendor_count: int = 1) -> list[InformationElement]:
    """A plausible capability profile; random enough to be device-specific."""
    rates = sorted(rng.sample([0x02, 0x04, 0x0B, 0x16, 0x0C, 0x12, 0x18, 0x24], 4))
    profile = [
        InformationElement(TAG_SUPPORTED_RATES, bytes(rates)),
        InformationElement(TAG_EXT_SUPPORTED_RATES, bytes([0x30, 0x48, 0x60, 0x6C])),
        InformationElement(TAG_HT_CAPABILITIES, rng.randbytes(26)),
    ]
    if vht:
        profile.append(InformationElement(TAG_VHT_CAPABILITIES, rng.randbytes(12)))
    profile.append(InformationElement(TAG_EXTENDED_CAPABILITIES, rng.randbytes(8)))
    for _ in range(vendor_count):
        oui = rng.choice([b"\x00\x50\xf2", b"\x00\x17\xf2", b"\x00\x10\x18", b"\x8c\xfd\xf0"])
        profile.append(InformationElement(TAG_VENDOR_SPECIFIC, oui + rng.randbytes(5)))
    return profile


def _ssid_sequence(policy: DevicePolicy) -> list[bytes]:
    if policy.ssid_behavior == DIRECTED_PER_PNL:
        return [b""] + list(policy.pnl)
    return [b""]


def generate(devices: Sequence[DevicePolicy], seed: int,
             start: float = DEFAULT_START,
             resolution: Resolution = Resolution.MICRO) -> SyntheticCapture:
    """Render ``devices`` into a time-ordered capture plus ground truth.

    Within a burst, directed devices cycle through the wildcard SSID and then
    their PNL. Everything random comes from ``seed``.
    """
    labels = [d.label for d in devices]
    if len(set(labels)) != len(labels):
        raise ScheduleError("device labels must be unique")
    for d in devices:
        d.validate()

    rng = random.Random(seed)
    per_second = resolution.per_second
    # offsets stay small floats so sub-microsecond gaps survive at nano resolution
    start_ticks = round(start * per_second)
    frames = []  # (timestamp ticks, device order, seq, frame, instance key)
    instance_keys: dict[tuple, TruthInstance] = {}

    for dev_no, dev in enumerate(devices):
        fixed_mac = None
        if dev.mac_mode == GLOBAL_FIXED:
            fixed_mac = _global_mac(rng)
        elif dev.mac_mode == PROTECTED_22B:
            fixed_mac = _local_mac(rng) if dev.local_mac else _global_mac(rng)
        per_ssid = {}
        if dev.mac_mode == PER_SSID_RANDOM:
            per_ssid = {s: _local_mac(rng) for s in _ssid_sequence(dev)}
        ssids = _ssid_sequence(dev)
        elements_tail = list(dev.ie_profile)
        if dev.uuid_e is not None:
            elements_tail.append(wps_element(dev.uuid_e))
        seq = rng.randrange(4096)

        for burst_no, burst in enumerate(dev.bursts):
            if dev.mac_mode == PER_BURST_RANDOM:
                burst_mac = _local_mac(rng)
            elif dev.mac_mode == PREFIX_RANDOM:
                burst_mac = MacAddress(dev.prefix + rng.randbytes(3))
            else:
                burst_mac = fixed_mac
            t = burst.time
            for k in range(burst.probe_count):
                if k:
                    t += burst.gap if burst.gap is not None else rng.uniform(*DEFAULT_GAP_RANGE)
                ssid = ssids[k % len(ssids)]
                mac = per_ssid.get(ssid, burst_mac)
                if dev.mac_mode == PROTECTED_22B:
                    frame = build_probe_frame(mac, sequence_number=seq, protected=True,
                                              body=PROTECTED_BODY)
                else:
                    elements = [InformationElement(TAG_SSID, ssid)] + elements_tail
                    frame = build_probe_frame(mac, elements, sequence_number=seq)
                seq = (seq + 1) % 4096
                ticks = start_ticks + round(t * per_second)
                key = (dev.label, burst_no, mac)
                if key not in instance_keys:
                    instance_keys[key] = TruthInstance(dev.label, mac)
                frames.append((ticks, dev_no, k, frame, key))

    frames.sort(key=lambda f: f[:3])
    scale = 1_000_000_000 // per_second
    records = []
    probe_labels = []
    for index, (ticks, _, _, frame, key) in enumerate(frames):
        sec, frac = divmod(ticks, per_second)
        records.append(CaptureRecord(sec, frac * scale, frame))
        probe_labels.append(key[0])
        instance_keys[key].probe_indices.append(index)

    truth = GroundTruth(
        probe_labels=probe_labels,
        instances=sorted(instance_keys.values(), key=lambda i: i.probe_indices[0]),
        device_modes={d.label: d.mac_mode for d in devices},
    )
    meta = CaptureMeta(resolution=resolution)
    return SyntheticCapture(meta, records, truth)


def replay_schedule(records: Sequence[CaptureRecord], time_scale: float) -> list[CaptureRecord]:
    """Stretch (or compress) timestamps about the first record's time."""
    if not time_scale > 0:
        raise ValueError("time_scale must be positive")
    if not records:
        return []
    origin = min(r.ts_sec * 1_000_000_000 + r.ts_nsec for r in records)
    out = []
    for r in records:
        t = r.ts_sec * 1_000_000_000 + r.ts_nsec
        scaled = origin + round((t - origin) * time_scale)
        # stay on the microsecond grid when the input was on it
        if r.ts_nsec % 1000 == 0 and time_scale != 1:
            scaled = round(scaled / 1000) * 1000
        sec, nsec = divmod(scaled, 1_000_000_000)
        out.append(CaptureRecord(sec, nsec, r.payload, r.original_length))
    return out


def regular_schedule(n_bursts: int, period: float, probes: int, offset: float = 0.0,
                     gap: float | None = None) -> list[Burst]:
    return [Burst(offset + i * period, probes, gap) for i in range(n_bursts)]


def mixed_population(seed: int = 0, n_global: int = 20, n_per_burst: int = 15,
                     n_prefix: int = 10, n_minimal: int = 5, n_bursts: int = 12,
                     period: float = 600.0) -> list[DevicePolicy]:
    """A conference-like population for end-to-end checks.

    Global devices probe wildcard-only with their own capability profile;
    per-burst and prefix randomizers carry distinct profiles and stable,
    non-empty PNLs; minimal devices send bare wildcard probes from a fresh MAC
    each burst. Bursts of different devices are staggered inside each period.
    """
    rng = random.Random(f"population-{seed}")
    devices = []
    seen_profiles = set()

    def unique_profile(**kw):
        while True:
            profile = random_ie_profile(rng, **kw)
            key = tuple((ie.tag_id, ie.payload) for ie in profile)
            if key not in seen_profiles:
                seen_profiles.add(key)
                return profile

    def schedule(slot):
        offset = (slot * 7.919) % (period - 30.0)
        return regular_schedule(n_bursts, period, rng.randint(4, 7), offset)

    slot = 0
    for i in range(n_global):
        devices.append(DevicePolicy(f"global-{i:02d}", GLOBAL_FIXED, schedule(slot),
                                    unique_profile(vht=i % 3 == 0)))
        slot += 1
    for i in range(n_per_burst):
        pnl = [f"net-{i:02d}-{j}".encode() for j in range(rng.randint(2, 4))]
        devices.append(DevicePolicy(f"burst-{i:02d}", PER_BURST_RANDOM, schedule(slot),
                                    unique_profile(vht=True, vendor_count=1 + i % 3),
                                    pnl, DIRECTED_PER_PNL))
        slot += 1
    for i in range(n_prefix):
        pnl = [f"home-{i:02d}".encode(), b"eduroam"]
        devices.append(DevicePolicy(f"prefix-{i:02d}", PREFIX_RANDOM, schedule(slot),
                                    unique_profile(vendor_count=2), pnl, DIRECTED_PER_PNL))
        slot += 1
    for i in range(n_minimal):
        devices.append(DevicePolicy(f"minimal-{i:02d}", PER_BURST_RANDOM, schedule(slot)))
        slot += 1
    return devices


def _element_from_json(obj) -> InformationElement:
    return InformationElement(int(obj["tag"]), bytes.fromhex(obj.get("hex", "")))


def policies_from_config(config: dict) -> list[DevicePolicy]:
    """Build device policies from a parsed JSON population config.

    The config either lists ``devices`` explicitly or asks for a
    ``population`` mix (keyword arguments of :func:`mixed_population`).
    """
    if "population" in config:
        return mixed_population(**config["population"])
    rng = random.Random(json.dumps(config, sort_keys=True))
    devices = []
    for n, d in enumerate(config.get("devices", [])):
        bursts = [Burst(float(b["time"]), int(b["probes"]),
                        None if b.get("gap") is None else float(b["gap"]))
                  for b in d.get("bursts", [])]
        if "every" in d:
            ev = d["every"]
            bursts += regular_schedule(int(ev["count"]), float(ev["period"]),
                                       int(ev["probes"]), float(ev.get("offset", 0.0)),
                                       ev.get("gap"))
        profile = d.get("ie_profile", "auto")
        if profile == "auto":
            elements = random_ie_profile(rng, vht=bool(d.get("vht", False)),
                                         vendor_count=int(d.get("vendor_count", 1)))
        else:
            elements = [_element_from_json(e) for e in profile]
        devices.append(DevicePolicy(
            label=d.get("label", f"device-{n:03d}"),
            mac_mode=d["mac_mode"],
            bursts=bursts,
            ie_profile=elements,
            pnl=[s.encode() for s in d.get("pnl", [])],
            ssid_behavior=d.get("ssid_behavior",
                                DIRECTED_PER_PNL if d.get("pnl") else WILDCARD_ONLY),
            prefix=bytes.fromhex(d.get("prefix", "DAA119").replace(":", "")),
            uuid_e=bytes.fromhex(d["uuid_e"]) if d.get("uuid_e") else None,
            local_mac=bool(d.get("local_mac", False)),
        ))
    return devices


def load_population(path) -> tuple[list[DevicePolicy], float]:
    config = json.loads(Path(path).read_text())
    return policies_from_config(config), float(config.get("start", DEFAULT_START))
