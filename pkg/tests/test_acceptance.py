"""Acceptance criteria, one PASS/FAIL/SKIP line each.

Dataset criteria need ``PROBEKIT_DATASET`` pointing at the public capture
(a pcap file or a directory of them); without it they are reported as SKIP.
"""

import time

import pytest

from conftest import (capture_probes, dataset_paths, full_reports, reports_match_up_to_macs)
from probekit.anonymize import AnonymizationPolicy, anonymize_capture, mac_substrings
from probekit.dot11 import MacAddress, inventory
from probekit.evaluate import instance_labels, pair_scores
from probekit.macid import GLOBAL, GROUP, LOCAL, classify_mac, is_randomized_by_text, \
    randomized_share
from probekit.pcapio import (ByteOrder, CaptureMeta, LinkType, Resolution, RotatingCaptureWriter,
                             read_capture, write_capture)
from probekit.pipeline import load_probes
from probekit.presence import bin_presence, merge_bins
from probekit.reports import summary_rows
from probekit.sessions import ClusterParams, cluster_devices, detect_bursts, summary_stats
from probekit.synthgen import generate, mixed_population

TABLE_ONE = {
    "total": 390810,
    "supported_rates": 390211,
    "ext_supported_rates": 385606,
    "ht_capabilities": 359391,
    "vht_capabilities": 51031,
    "extended_capabilities": 312181,
    "vendor_specific": 228970,
    "vendor_1": 84215,
    "vendor_2": 67663,
    "vendor_3": 55524,
    "vendor_4": 21462,
    "vendor_5plus": 106,
    "wps_uuid_e": 3733,
    "wep_protected": 599,
}
LOCAL_PROBES = 266051
PREFIX_PROBES = 22254
SEED = 2021


@pytest.fixture(scope="module")
def dataset():
    paths = dataset_paths()
    if not paths:
        return None
    start = time.perf_counter()
    loaded = load_probes(paths)
    return loaded, time.perf_counter() - start


def _skip(record_criterion, number):
    record_criterion(number, None, "PROBEKIT_DATASET not set; public capture not available")
    pytest.skip("dataset not available")


@pytest.mark.dataset
def test_c1_dataset_inventory(dataset, record_criterion):
    if dataset is None:
        _skip(record_criterion, 1)
    loaded, load_seconds = dataset
    start = time.perf_counter()
    inv = inventory(loaded.probes)
    seconds = load_seconds + time.perf_counter() - start
    got = {k: getattr(inv, k) for k in TABLE_ONE}
    diffs = {k: (got[k], v) for k, v in TABLE_ONE.items() if got[k] != v}
    ok = not diffs and seconds < 60
    record_criterion(1, ok, f"mismatches={diffs} runtime={seconds:.1f}s")
    assert ok


@pytest.mark.dataset
def test_c2_dataset_mac_split(dataset, record_criterion):
    if dataset is None:
        _skip(record_criterion, 2)
    share = randomized_share(dataset[0].probes)
    ok = share.local == LOCAL_PROBES and round(100 * share.fraction, 2) == 68.08
    record_criterion(2, ok, f"local={share.local} ({100 * share.fraction:.2f}%) "
                            f"prefix counts={share.prefix_counts} (one expected {PREFIX_PROBES})")
    assert ok


@pytest.mark.dataset
def test_c3_dataset_clustering_report(dataset, record_criterion):
    if dataset is None:
        _skip(record_criterion, 3)
    instances = detect_bursts(dataset[0].probes)
    devices = cluster_devices(instances)
    rows = summary_rows(summary_stats(instances, devices))
    compared = {m: (v, ref) for m, v, ref in rows if ref != ""}
    ok = bool(rows) and "instances_total" in compared
    record_criterion(3, ok, "ours vs reference: " + ", ".join(
        f"{m}={v}/{p}" for m, (v, p) in compared.items()))
    assert ok


def test_c4_bit_logic_oracle(record_criterion):
    start = time.perf_counter()
    bad = []
    for first in range(256):
        m = MacAddress(bytes([first, 0xAB, 0xCD, 0xEF, 0x01, 0x23]))
        cls = classify_mac(m)
        local_bit, group_bit = bool(first >> 1 & 1), bool(first & 1)
        digit_rule = f"{first:02X}"[1] in "26AE"
        if ((cls.locality == LOCAL) != local_bit or (cls.locality == GLOBAL) == local_bit
                or (cls.scope == GROUP) != group_bit
                or is_randomized_by_text(str(m)) != digit_rule
                or digit_rule != (local_bit and not group_bit)
                or cls.is_randomized != digit_rule):
            bad.append(first)
    seconds = time.perf_counter() - start
    ok = not bad and seconds < 1
    record_criterion(4, ok, f"256 first octets, disagreements={bad}, {seconds * 1000:.1f} ms")
    assert ok


def _ten_thousand_records():
    cap = generate(mixed_population(seed=SEED, n_bursts=40), seed=SEED)
    assert len(cap.records) >= 10_000
    return cap.records[:10_000]


def test_c5_round_trip(tmp_path, record_criterion):
    records = _ten_thousand_records()
    failures = []
    for res in Resolution:
        for order in ByteOrder:
            meta = CaptureMeta(LinkType.IEEE802_11, res, order)
            path = tmp_path / f"{res.value}-{order.value}.pcap"
            write_capture(path, meta, records)
            got_meta, got = read_capture(path, strict=True)
            if got_meta != meta or got != records:
                failures.append(path.name)
    rot_dir = tmp_path / "rotated"
    rot_dir.mkdir()
    with RotatingCaptureWriter(rot_dir, "cap", CaptureMeta(), max_records=999) as writer:
        for rec in records:
            writer.write(rec)
    rejoined = [r for p in sorted(writer.paths) for r in read_capture(p, strict=True)[1]]
    whole = read_capture(tmp_path / "micro-little.pcap")[1]
    rotation_ok = rejoined == whole and len(writer.paths) == 11
    ok = not failures and rotation_ok
    record_criterion(5, ok, f"10000 frames x 4 variants, failures={failures}; "
                            f"rotation into {len(writer.paths)} files equal={rotation_ok}")
    assert ok


def _analyze(seed):
    cap = generate(mixed_population(seed=seed), seed=seed)
    probes = capture_probes(cap)
    instances = detect_bursts(probes)
    devices = cluster_devices(instances)
    return cap, instances, devices


def test_c6_oracle_clustering(record_criterion):
    start = time.perf_counter()
    cap, instances, devices = _analyze(SEED)
    seconds = time.perf_counter() - start
    modes = cap.truth.device_modes
    assert len(modes) == 50
    true = instance_labels(instances, cap.truth.probe_labels)
    owner = {i.instance_id: d.device_id for d in devices for i in d.instances}
    predicted = [owner[i.instance_id] for i in instances]
    glob = pair_scores(true, predicted, lambda t: t.startswith("global-"))
    burst = pair_scores(true, predicted, lambda t: t.startswith("burst-"))
    minimal_labels_per_device = {}
    for t, p in zip(true, predicted):
        if t.startswith("minimal-"):
            minimal_labels_per_device.setdefault(p, set()).add(t)
    minimal_merged = sum(1 for s in minimal_labels_per_device.values() if len(s) > 1)
    _, instances2, devices2 = _analyze(SEED)
    deterministic = ([(d.device_id, [i.probe_indices for i in d.instances]) for d in devices]
                     == [(d.device_id, [i.probe_indices for i in d.instances]) for d in devices2])
    ok = (glob.precision == 1.0 and glob.recall == 1.0 and burst.f1 >= 0.9
          and minimal_merged == 0 and deterministic and seconds < 10)
    record_criterion(6, ok, f"global P={glob.precision:.4f} R={glob.recall:.4f}; "
                            f"per-burst F1={burst.f1:.4f}; merged minimal devices={minimal_merged}; "
                            f"deterministic={deterministic}; {seconds:.2f}s")
    assert ok


def _conservation(probes):
    sums = {m: sum(b.probe_count for b in bin_presence(probes, m)) for m in (5, 15, 60)}
    merged = merge_bins(bin_presence(probes, 15), 2)
    direct = bin_presence(probes, 30)
    refine = ([(b.start, b.probe_count) for b in merged]
              == [(b.start, b.probe_count) for b in direct])
    return all(v == len(probes) for v in sums.values()) and refine, sums, refine


def test_c7_conservation(dataset, record_criterion):
    probes = capture_probes(generate(mixed_population(seed=SEED), seed=SEED))
    ok, sums, refine = _conservation(probes)
    detail = f"generator: total={len(probes)} sums={sums} 15+15==30:{refine}"
    if dataset is not None:
        d_ok, d_sums, d_refine = _conservation(dataset[0].probes)
        ok = ok and d_ok
        detail += f"; dataset: total={len(dataset[0].probes)} sums={d_sums} 15+15==30:{d_refine}"
    else:
        detail += "; dataset half skipped (PROBEKIT_DATASET not set)"
    record_criterion(7, ok, detail)
    assert ok


def test_c8_anonymization_invariance(tmp_path, record_criterion):
    cap = generate(mixed_population(seed=SEED), seed=SEED)
    src, dst = tmp_path / "orig.pcap", tmp_path / "anon.pcap"
    write_capture(src, cap.meta, cap.records)
    anonymize_capture(src, dst, AnonymizationPolicy.random())
    original = load_probes([src]).probes
    anonymized = load_probes([dst]).probes
    same = reports_match_up_to_macs(full_reports(original), full_reports(anonymized))
    blob = dst.read_bytes()
    mac_leaks = mac_substrings(blob, {p.source for p in original})
    ssid_leaks = [s for s in {p.ssid for p in original if p.ssid} if s in blob]
    ok = same and not mac_leaks and not ssid_leaks
    record_criterion(8, ok, f"reports identical up to surrogates={same}; "
                            f"leaked MACs={len(mac_leaks)} SSIDs={len(ssid_leaks)}")
    assert ok


def test_c9_monotonicity(record_criterion):
    cap = generate(mixed_population(seed=SEED), seed=SEED)
    probes = capture_probes(cap)
    thresholds = [0.0, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9, 1.0]
    gaps = [0.01, 0.05, 0.1, 1, 5, 10, 30, 120, 600, 3600]
    device_counts = []
    instance_counts = []
    for gap in gaps:
        instances = detect_bursts(probes, ClusterParams(burst_gap=gap))
        instance_counts.append(len(instances))
        device_counts.append([len(cluster_devices(instances, ClusterParams(burst_gap=gap,
                                                                           pnl_threshold=t)))
                              for t in thresholds])
    devices_ok = all(row == sorted(row) for row in device_counts)
    instances_ok = instance_counts == sorted(instance_counts, reverse=True)
    ok = devices_ok and instances_ok
    record_criterion(9, ok, f"{len(gaps)}x{len(thresholds)} grid; devices non-decreasing in "
                            f"pnl_threshold={devices_ok}; instances non-increasing in "
                            f"burst_gap={instances_ok} {instance_counts}")
    assert ok
