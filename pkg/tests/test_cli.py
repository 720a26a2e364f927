import csv
import io
import json
import subprocess
import sys

import pytest

from conftest import pcap_header
from probekit.cli import main
from probekit.pcapio import write_capture
from probekit.synthgen import generate, mixed_population


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cap = generate(mixed_population(seed=5, n_global=3, n_per_burst=3, n_prefix=2, n_minimal=2,
                                    n_bursts=4), seed=5)
    path = d / "small.pcap"
    write_capture(path, cap.meta, cap.records)
    cap.truth.write_csv(d / "small.truth.csv")
    return path, cap


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_stats_empty_pcap(tmp_path, capsys):
    path = tmp_path / "empty.pcap"
    path.write_bytes(pcap_header())
    code, out, _ = run(capsys, "stats", path)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["element", "count", "percent"]
    assert all(r[1] == "0" for r in rows[1:])


def test_stats_counts_generator(small, capsys):
    path, cap = small
    code, out, _ = run(capsys, "stats", "--json", path)
    assert code == 0
    table = {r["element"]: r["count"] for r in json.loads(out)}
    assert table["Total Collected Probe Requests"] == len(cap.records)
    assert table["Supported rates"] == len(cap.records) - sum(
        1 for l in cap.truth.probe_labels if l.startswith("minimal"))


def test_stats_unreadable_inputs(tmp_path, capsys):
    bad = tmp_path / "bad.pcap"
    bad.write_bytes(b"not a pcap at all, definitely")
    code, _, err = run(capsys, "stats", bad)
    assert code == 1 and "error" in err
    assert run(capsys, "stats", tmp_path / "missing.pcap")[0] == 1


def test_partial_inputs_still_succeed(small, tmp_path, capsys):
    bad = tmp_path / "bad.pcap"
    bad.write_bytes(b"junk" * 10)
    assert run(capsys, "stats", small[0], bad)[0] == 0


@pytest.mark.parametrize("argv", [
    ["analyze", "--burst-gap", "0", "X"],
    ["analyze", "--pnl-threshold", "2", "X"],
    ["analyze", "--recurrence", "0", "X"],
    ["presence", "--bin-minutes", "0", "X"],
    ["anonymize", "X", "-o", "Y", "--salt", "zz"],
    ["frobnicate"],
    [],
])
def test_usage_errors(argv, small, capsys):
    argv = [str(small[0]) if a == "X" else a for a in argv]
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    capsys.readouterr()


def test_analyze_outputs_and_truth(small, tmp_path, capsys):
    path, cap = small
    out_dir = tmp_path / "reports"
    code, out, _ = run(capsys, "analyze", path, "-o", out_dir,
                       "--truth", path.with_name("small.truth.csv"))
    assert code == 0
    assert sorted(p.name for p in out_dir.iterdir()) == \
        ["devices.csv", "instances.csv", "summary.csv", "timelines.csv"]
    summary = {r["metric"]: r for r in csv.DictReader((out_dir / "summary.csv").open())}
    assert int(summary["instances_total"]["value"]) == cap.truth.expected_instance_count
    assert summary["probes_total"]["reference"] == "390810"
    assert "group,precision,recall,f1" in out
    assert "global,1.0000,1.0000,1.0000" in out
    header = (out_dir / "instances.csv").read_text().splitlines()[0]
    assert header == "instance_id,device_id,mac,start,end,probe_count"


def test_analyze_truth_mismatch(small, tmp_path, capsys):
    truth = tmp_path / "t.csv"
    truth.write_text("probe_index,device_label\n0,x\n")
    assert run(capsys, "analyze", small[0], "--truth", truth)[0] == 1


def test_analyze_deterministic(small, capsys):
    a = run(capsys, "analyze", "--json", small[0])
    b = run(capsys, "analyze", "--json", small[0])
    assert a == b and a[0] == 0


def test_presence_with_annotations(small, tmp_path, capsys):
    path, cap = small
    ann = tmp_path / "program.txt"
    ann.write_text("2021-11-29T08:00 2021-11-29T08:30 Keynote\n")
    code, out, _ = run(capsys, "presence", path, "--bin-minutes", "15", "--annotations", ann,
                       "--devices")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["bin_start_iso8601", "probe_count", "distinct_macs",
                             "distinct_devices", "session"]
    assert sum(int(r["probe_count"]) for r in rows) == len(cap.records)
    assert rows[0]["session"] == "Keynote"


def test_presence_tz_offset(small, capsys):
    code, out, _ = run(capsys, "presence", "--tz-offset", "60", "--json", small[0])
    assert code == 0
    assert json.loads(out)[0]["bin_start_iso8601"].endswith("+01:00")


def test_anonymize_command(small, tmp_path, capsys):
    out = tmp_path / "anon.pcap"
    code, _, err = run(capsys, "anonymize", small[0], "-o", out, "--salt", "abcd")
    assert code == 0 and "records written" in err
    first = out.read_bytes()
    run(capsys, "anonymize", small[0], "-o", out, "--salt", "abcd")
    assert out.read_bytes() == first
    run(capsys, "anonymize", small[0], "-o", out)
    assert out.read_bytes() != first


def test_anonymize_refuses_to_overwrite(small, tmp_path, capsys):
    copy = tmp_path / "in.pcap"
    copy.write_bytes(small[0].read_bytes())
    with pytest.raises(SystemExit) as exc:
        main(["anonymize", str(copy), "-o", str(copy)])
    assert exc.value.code == 2
    assert copy.read_bytes() == small[0].read_bytes()
    capsys.readouterr()


def test_synth_command(tmp_path, capsys):
    out = tmp_path / "s.pcap"
    code, _, err = run(capsys, "synth", "--seed", "3", "-o", out)
    assert code == 0
    assert (tmp_path / "s.truth.csv").exists()
    first = out.read_bytes()
    run(capsys, "synth", "--seed", "3", "-o", out)
    assert out.read_bytes() == first
    assert not list(tmp_path.glob("*.part"))


def test_synth_rotate_and_config(tmp_path, capsys):
    config = tmp_path / "pop.json"
    config.write_text(json.dumps({"devices": [
        {"label": "a", "mac_mode": "global-fixed", "every": {"count": 5, "period": 60, "probes": 5}}]}))
    code, _, _ = run(capsys, "synth", config, "-o", tmp_path / "r.pcap", "--rotate", "10")
    assert code == 0
    assert sorted(p.name for p in tmp_path.glob("r-*.pcap")) == \
        ["r-0000.pcap", "r-0001.pcap", "r-0002.pcap"]
    code, out, _ = run(capsys, "stats", "--json", *sorted(tmp_path.glob("r-*.pcap")))
    assert {r["element"]: r["count"] for r in json.loads(out)}["Total Collected Probe Requests"] == 25


def test_bad_config_is_data_error(tmp_path, capsys):
    config = tmp_path / "pop.json"
    config.write_text(json.dumps({"devices": [{"label": "a", "mac_mode": "global-fixed",
                                               "bursts": [{"time": 0, "probes": 2, "gap": 0}]}]}))
    assert run(capsys, "synth", config, "-o", tmp_path / "x.pcap")[0] == 1


def test_module_entry_point(small):
    proc = subprocess.run([sys.executable, "-m", "probekit", "stats", str(small[0])],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("element,count,percent")
