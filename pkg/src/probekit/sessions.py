"""Scan-instance detection, device clustering and recurrence.

Probes sharing a source MAC and arriving close together form a scan
instance (one scanning burst). Instances are then linked into devices by
MAC reuse, shared UUID-E, or a shared fingerprint combined with similar
preferred network lists, and the links are closed transitively.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

from .dot11 import MacAddress, ProbeRequest
from .fingerprint import Fingerprint, fingerprint_probe, pnl_similarity, uuid_e
from .macid import DEFAULT_PREFIX_RULES, GLOBAL, PrefixRule, classify_mac

MODE_GLOBAL = "global"
MODE_LOCAL = "local"
MODE_PREFIX = "prefix-local"
MAC_MODES = (MODE_GLOBAL, MODE_LOCAL, MODE_PREFIX)

# every bit of a MAC except the two functional bits of octet 0
NON_FUNCTIONAL_MASK = (1 << 48) - 1 & ~(0x03 << 40)


@dataclass(frozen=True)
class ClusterParams:
    burst_gap: float = 10.0
    pnl_threshold: float = 0.5
    recurrence_threshold: int = 10
    require_nonempty_fingerprint: bool = True
    max_burst_span: float | None = None

    def __post_init__(self):
        if not self.burst_gap > 0:
            raise ValueError("burst_gap must be positive")
        if not 0.0 <= self.pnl_threshold <= 1.0:
            raise ValueError("pnl_threshold must lie in [0, 1]")
        if self.recurrence_threshold < 1:
            raise ValueError("recurrence_threshold must be at least 1")
        if self.max_burst_span is not None and self.max_burst_span < 0:
            raise ValueError("max_burst_span must be non-negative")


@dataclass(frozen=True)
class ScanInstance:
    instance_id: int
    mac: MacAddress
    start: float
    end: float
    probe_count: int
    fingerprints: frozenset[Fingerprint]
    pnl: frozenset[bytes]
    uuid_e: bytes | None = None
    probe_indices: tuple[int, ...] = ()

    @property
    def discriminative_fingerprints(self) -> frozenset[Fingerprint]:
        return frozenset(f for f in self.fingerprints if not f.is_empty)


@dataclass(frozen=True)
class DeviceRecord:
    device_id: str
    instances: tuple[ScanInstance, ...]
    mac_mode: str

    @property
    def appearance_count(self) -> int:
        return len(self.instances)

    @property
    def first_seen(self) -> float:
        return min(i.start for i in self.instances)

    @property
    def last_seen(self) -> float:
        return max(i.end for i in self.instances)

    @property
    def macs(self) -> list[MacAddress]:
        return sorted({i.mac for i in self.instances})

    @property
    def probe_count(self) -> int:
        return sum(i.probe_count for i in self.instances)


class _Burst:
    __slots__ = ("mac", "start", "end", "indices", "fingerprints", "ssids", "uuid")

    def __init__(self, mac, ts):
        self.mac = mac
        self.start = self.end = ts
        self.indices = []
        self.fingerprints = set()
        self.ssids = set()
        self.uuid = None

    def add(self, index, probe):
        self.end = probe.timestamp
        self.indices.append(index)
        self.fingerprints.add(fingerprint_probe(probe))
        if probe.ssid:
            self.ssids.add(probe.ssid)
        if self.uuid is None:
            self.uuid = uuid_e(probe)


def detect_bursts(probes: Sequence[ProbeRequest],
                  params: ClusterParams = ClusterParams()) -> list[ScanInstance]:
    """Partition ``probes`` into scan instances.

    Each MAC is followed separately, so probes from other sources arriving in
    between do not split a burst. A gap longer than ``burst_gap`` (or a burst
    exceeding ``max_burst_span``) closes the instance. ``probe_indices`` refer
    to positions in ``probes``; unsorted input is sorted by timestamp first.
    """
    order = range(len(probes))
    if any(probes[i].timestamp > probes[i + 1].timestamp for i in range(len(probes) - 1)):
        order = sorted(order, key=lambda i: probes[i].timestamp)

    open_bursts: dict[MacAddress, _Burst] = {}
    done: list[_Burst] = []
    for idx in order:
        probe = probes[idx]
        burst = open_bursts.get(probe.source)
        if burst is not None:
            too_late = probe.timestamp - burst.end > params.burst_gap
            too_long = (params.max_burst_span is not None
                        and probe.timestamp - burst.start > params.max_burst_span)
            if too_late or too_long:
                done.append(burst)
                burst = None
        if burst is None:
            burst = open_bursts[probe.source] = _Burst(probe.source, probe.timestamp)
        burst.add(idx, probe)
    done.extend(open_bursts.values())
    done.sort(key=lambda b: (b.start, b.indices[0]))
    return [
        ScanInstance(
            instance_id=n, mac=b.mac, start=b.start, end=b.end,
            probe_count=len(b.indices), fingerprints=frozenset(b.fingerprints),
            pnl=frozenset(b.ssids), uuid_e=b.uuid, probe_indices=tuple(b.indices),
        )
        for n, b in enumerate(done)
    ]


class UnionFind:
    """Disjoint sets over ``0..n-1`` with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def union_all(self, items: Iterable[int]):
        items = iter(items)
        first = next(items, None)
        for other in items:
            self.union(first, other)

    def groups(self) -> list[list[int]]:
        out = defaultdict(list)
        for x in range(len(self.parent)):
            out[self.find(x)].append(x)
        return list(out.values())


def instances_linked(a: ScanInstance, b: ScanInstance, params: ClusterParams) -> bool:
    """Direct link between two instances, before transitive closure.

    Instances with different MACs only link when both MACs are locally
    administered: two distinct global addresses are two devices.
    """
    if a.mac == b.mac:
        return True
    if not (a.mac.is_local and b.mac.is_local):
        return False
    if a.uuid_e is not None and a.uuid_e == b.uuid_e:
        return True
    if params.require_nonempty_fingerprint:
        shared = a.discriminative_fingerprints & b.discriminative_fingerprints
    else:
        shared = a.fingerprints & b.fingerprints
    if not shared or not a.pnl or not b.pnl:
        return False
    return pnl_similarity(a.pnl, b.pnl) >= params.pnl_threshold


def _link_fingerprint_pnl(uf: UnionFind, members: list[int],
                          instances: Sequence[ScanInstance], threshold: float):
    # identical PNLs are always linked; compare distinct PNLs only
    by_pnl: dict[frozenset, list[int]] = defaultdict(list)
    for i in members:
        by_pnl[instances[i].pnl].append(i)
    for group in by_pnl.values():
        uf.union_all(group)
    pnls = list(by_pnl)
    if threshold <= 0.0:
        uf.union_all(by_pnl[p][0] for p in pnls)
        return
    # a positive Jaccard score needs a shared SSID
    by_ssid: dict[bytes, list[int]] = defaultdict(list)
    for n, pnl in enumerate(pnls):
        for ssid in pnl:
            by_ssid[ssid].append(n)
    checked = set()
    for holders in by_ssid.values():
        for x, y in combinations(holders, 2):
            if (x, y) in checked:
                continue
            checked.add((x, y))
            if pnl_similarity(pnls[x], pnls[y]) >= threshold:
                uf.union(by_pnl[pnls[x]][0], by_pnl[pnls[y]][0])


def cluster_devices(instances: Sequence[ScanInstance],
                    params: ClusterParams = ClusterParams(),
                    rules: Sequence[PrefixRule] = DEFAULT_PREFIX_RULES) -> list[DeviceRecord]:
    """Merge scan instances into devices by transitive closure of
    :func:`instances_linked`.

    Device ids are assigned in order of first appearance, so the result does
    not depend on the order of ``instances``.
    """
    n = len(instances)
    uf = UnionFind(n)

    by_mac = defaultdict(list)
    by_uuid = defaultdict(list)
    by_fp = defaultdict(list)
    for i, inst in enumerate(instances):
        by_mac[inst.mac].append(i)
        if not inst.mac.is_local:
            continue
        if inst.uuid_e is not None:
            by_uuid[inst.uuid_e].append(i)
        if inst.pnl:
            fps = (inst.discriminative_fingerprints if params.require_nonempty_fingerprint
                   else inst.fingerprints)
            for fp in fps:
                by_fp[fp].append(i)
    for members in by_mac.values():
        uf.union_all(members)
    for members in by_uuid.values():
        uf.union_all(members)
    for members in by_fp.values():
        _link_fingerprint_pnl(uf, members, instances, params.pnl_threshold)

    clusters = []
    for group in uf.groups():
        members = sorted((instances[i] for i in group),
                         key=lambda s: (s.start, s.mac.octets, s.end, s.probe_count))
        clusters.append(members)
    clusters.sort(key=lambda m: (m[0].start, m[0].mac.octets))

    devices = []
    for n_dev, members in enumerate(clusters):
        devices.append(DeviceRecord(f"D{n_dev:05d}", tuple(members),
                                    _mac_mode(members, rules)))
    return devices


def _mac_mode(members: Sequence[ScanInstance], rules: Sequence[PrefixRule]) -> str:
    if not members[0].mac.is_local:
        return MODE_GLOBAL
    if any(classify_mac(i.mac, rules).known_prefix for i in members):
        return MODE_PREFIX
    return MODE_LOCAL


@dataclass
class RecurrenceReport:
    threshold: int
    recurrent: list[DeviceRecord] = field(default_factory=list)
    transient: list[DeviceRecord] = field(default_factory=list)

    def timelines(self) -> dict[str, list[tuple[float, float]]]:
        return {d.device_id: device_timeline(d) for d in self.recurrent + self.transient}


def device_timeline(device: DeviceRecord) -> list[tuple[float, float]]:
    """One ``(start, end)`` interval per scan instance, sorted by start."""
    return sorted((i.start, i.end) for i in device.instances)


def recurrence_report(devices: Iterable[DeviceRecord],
                      params: ClusterParams = ClusterParams()) -> RecurrenceReport:
    """Split devices into recurrent (more than ``recurrence_threshold``
    appearances) and transient ones."""
    report = RecurrenceReport(params.recurrence_threshold)
    for device in devices:
        if device.appearance_count > params.recurrence_threshold:
            report.recurrent.append(device)
        else:
            report.transient.append(device)
    return report


def varied_bits(macs: Iterable[MacAddress]) -> int:
    """Bitmask of address bits that differ somewhere among ``macs``."""
    macs = [int.from_bytes(m.octets, "big") for m in macs]
    if not macs:
        return 0
    ref = macs[0]
    mask = 0
    for m in macs[1:]:
        mask |= m ^ ref
    return mask


def is_fully_randomized(device: DeviceRecord) -> bool:
    """True when the device's MACs vary in all 46 non-functional bits."""
    mask = varied_bits({i.mac for i in device.instances})
    return mask & NON_FUNCTIONAL_MASK == NON_FUNCTIONAL_MASK


@dataclass
class Summary:
    probes: Counter
    instances: Counter
    devices: Counter
    recurrent_devices: Counter
    prefix_probes: dict[str, int]
    prefix_instances: dict[str, int]
    fully_randomized_devices: int

    def rows(self) -> list[tuple[str, int]]:
        rows = []
        for label, counter in (("probes", self.probes), ("instances", self.instances),
                               ("devices", self.devices),
                               ("recurrent_devices", self.recurrent_devices)):
            rows.append((f"{label}_total", sum(counter.values())))
            for mode in MAC_MODES:
                rows.append((f"{label}_{mode}", counter.get(mode, 0)))
        for name, count in self.prefix_probes.items():
            rows.append((f"prefix_probes[{name}]", count))
        for name, count in self.prefix_instances.items():
            rows.append((f"prefix_instances[{name}]", count))
        rows.append(("fully_randomized_devices", self.fully_randomized_devices))
        return rows

    def as_dict(self) -> dict[str, int]:
        return dict(self.rows())


def summary_stats(instances: Sequence[ScanInstance], devices: Sequence[DeviceRecord],
                  params: ClusterParams = ClusterParams(),
                  rules: Sequence[PrefixRule] = DEFAULT_PREFIX_RULES) -> Summary:
    """Counts of probes, instances and devices split by MAC mode.

    Probe and instance modes follow their own MAC (global, local, or
    prefix-local when a rule matches); device modes come from clustering.
    """
    probes, insts = Counter(), Counter()
    prefix_probes = {r.name: 0 for r in rules}
    prefix_instances = {r.name: 0 for r in rules}
    for inst in instances:
        cls = classify_mac(inst.mac, rules)
        if cls.locality == GLOBAL:
            mode = MODE_GLOBAL
        elif cls.known_prefix:
            mode = MODE_PREFIX
            prefix_probes[cls.known_prefix] += inst.probe_count
            prefix_instances[cls.known_prefix] += 1
        else:
            mode = MODE_LOCAL
        probes[mode] += inst.probe_count
        insts[mode] += 1
    devs = Counter(d.mac_mode for d in devices)
    recurrent = Counter(d.mac_mode for d in devices
                        if d.appearance_count > params.recurrence_threshold)
    fully = sum(1 for d in devices if d.mac_mode != MODE_GLOBAL and is_fully_randomized(d))
    return Summary(probes, insts, devs, recurrent, prefix_probes, prefix_instances, fully)

