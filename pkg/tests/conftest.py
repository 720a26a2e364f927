import os
import struct
from pathlib import Path

import pytest

from probekit.dot11 import InformationElement, MacAddress, build_probe_frame, parse_probe_request
from probekit.synthgen import generate, mixed_population

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def record_criterion():
    def record(number, ok, detail=""):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"C{number} {status} {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def dataset_paths():
    """Capture files of the public conference dataset, if configured."""
    root = os.environ.get("PROBEKIT_DATASET")
    if not root:
        return None
    root = Path(root)
    if root.is_file():
        return [root]
    return sorted(p for p in root.rglob("*") if p.suffix in (".pcap", ".cap"))


def mac(text):
    return MacAddress.parse(text)


def probe(ts=0.0, source="00:11:22:33:44:55", elements=(), seq=0):
    frame = build_probe_frame(mac(source), elements, seq)
    return parse_probe_request(frame, ts)


def ssid(name):
    return InformationElement(0, name.encode() if isinstance(name, str) else name)


def pcap_header(magic=0xA1B2C3D4, order="<", snaplen=65535, link=105):
    return struct.pack(order + "IHHiIII", magic, 2, 4, 0, 0, snaplen, link)


@pytest.fixture(scope="session")
def mixed_capture():
    return generate(mixed_population(seed=7), seed=7)


def capture_probes(capture):
    """Parsed probes of a synthetic capture, in record order."""
    from probekit.pipeline import probes_from_records
    return probes_from_records(capture.records, capture.meta).probes


def full_reports(probes, bin_minutes=15):
    """Every analyze and presence table for ``probes``, as row lists keyed by name."""
    from probekit.dot11 import inventory
    from probekit.presence import bin_presence
    from probekit.reports import (device_rows, instance_rows, inventory_rows, presence_rows,
                                  summary_rows, timeline_rows)
    from probekit.sessions import (cluster_devices, detect_bursts, recurrence_report,
                                   summary_stats)
    instances = detect_bursts(probes)
    devices = cluster_devices(instances)
    return {
        "inventory": list(inventory_rows(inventory(probes))),
        "instances": list(instance_rows(instances, devices)),
        "devices": list(device_rows(devices)),
        "timelines": list(timeline_rows(recurrence_report(devices))),
        "summary": list(summary_rows(summary_stats(instances, devices))),
        "presence": list(presence_rows(bin_presence(probes, bin_minutes, devices))),
    }


def reports_match_up_to_macs(a, b):
    """True when two report sets differ only by a consistent MAC renaming."""
    if a.keys() != b.keys():
        return False
    for name in a:
        if name != "instances" and a[name] != b[name]:
            return False
    rename = {}
    for ra, rb in zip(a["instances"], b["instances"], strict=True):
        if ra[:2] != rb[:2] or ra[3:] != rb[3:]:
            return False
        if rename.setdefault(ra[2], rb[2]) != rb[2]:
            return False
    return len(set(rename.values())) == len(rename)
