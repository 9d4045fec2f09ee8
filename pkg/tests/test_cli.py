import json

import pytest

from slicemem.cli import main
from slicemem.fixtures import forged_containment
from slicemem import trace as tr

SMALL = """
run_seed = 7
ticks = 20
flush_ticks = 4

[agents]
search = 4
relay = 6
rescue = 6

[world]
width = 5
height = 5

[[removals]]
tick = 10
agent = "relay_001"
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return path


def test_simulate_then_verify(small_config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(small_config), "--out-dir", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["run_seed"] == 7
    assert len(manifest["config_hash"]) == 64
    assert {"trace", "snapshots"} <= set(manifest["paths"])
    assert manifest["started"] <= manifest["finished"]
    lines = (out / "snapshots.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["schema"].startswith("slicemem.snapshots")
    last = json.loads(lines[-1])
    assert last["as_of_seq"] == manifest["commits"]
    capsys.readouterr()
    assert main(["verify", str(out / "trace.jsonl"), "--out-dir", str(out)]) == 0
    table = capsys.readouterr().out
    for name in ("coherence", "isolation", "alignment", "reflection", "containment"):
        assert name in table
    reports = json.loads((out / "verify.json").read_text())
    assert all(r["verdict"] == "pass" for r in reports)


def test_simulate_is_byte_identical(small_config, tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "--config", str(small_config), "--out-dir", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "trace.jsonl").read_bytes() == (tmp_path / "b" / "trace.jsonl").read_bytes()
    assert (tmp_path / "a" / "snapshots.jsonl").read_bytes() == (tmp_path / "b" / "snapshots.jsonl").read_bytes()


def test_overrides_change_the_run(small_config, tmp_path):
    main(["simulate", "--config", str(small_config), "--out-dir", str(tmp_path / "a")])
    main(["simulate", "--config", str(small_config), "--seed", "8", "--ticks", "12",
          "--comm-prob", "0.9", "--fan-out", "0.5", "--flush-ticks", "2", "--max-lag", "3",
          "--out-dir", str(tmp_path / "b")])
    m = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert m["run_seed"] == 8
    assert m["config"]["ticks"] == 12 and m["config"]["max_lag"] == 3
    assert m["config_hash"] != json.loads((tmp_path / "a" / "manifest.json").read_text())["config_hash"]


def test_invalid_config_names_field(small_config, tmp_path, capsys):
    code = main(["simulate", "--config", str(small_config), "--comm-prob", "1.5", "--out-dir", str(tmp_path)])
    assert code == 2
    assert "comm_prob" in capsys.readouterr().err


def test_forged_trace_fails_verification(small_trace, tmp_path, capsys):
    bad, seq = forged_containment(small_trace)
    path = tmp_path / "bad.jsonl"
    bad.write(path)
    assert main(["verify", str(path), "--checker", "containment"]) == 1
    assert f"seq {seq}" in capsys.readouterr().out


def test_unknown_checker_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["verify", str(tmp_path / "x.jsonl"), "--checker", "vibes"])
    assert err.value.code == 2


def test_unreadable_trace(tmp_path, capsys):
    path = tmp_path / "junk.jsonl"
    path.write_text('{"schema": "x"}\n{"seq": 0}\n')
    assert main(["verify", str(path)]) == 3
    assert main(["verify", str(tmp_path / "missing.jsonl")]) == 3


def test_bench_scaling(tmp_path, capsys):
    assert main(["bench", "scaling", "--trials", "3", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "f=1.0   mean=201.000" in out
    assert (tmp_path / "scaling.csv").exists()


def test_bench_tail_reliable(small_config, tmp_path, capsys):
    code = main(["bench", "tail", "--config", str(small_config), "--rho", "1.0", "--out-dir", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "rho=1.0" in out and "mean=1.000" in out and "max=1 " in out
    assert (tmp_path / "tail.csv").exists()


def test_bench_epsr(tmp_path, capsys):
    assert main(["bench", "epsr", "--epsilon", "0.2", "--r", "3", "--trials", "20000", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "analytic=0.008" in out and "analytic(0.02,3)=8e-06" in out
    assert (tmp_path / "epsr.csv").exists()


@pytest.mark.parametrize(
    "argv,field",
    [
        (["bench", "epsr", "--epsilon", "1.0"], "epsilon"),
        (["bench", "epsr", "--r", "0"], "r"),
        (["bench", "tail", "--rho", "0"], "rho"),
        (["bench", "scaling", "--trials", "0"], "trials"),
    ],
)
def test_bench_param_errors(argv, field, tmp_path, capsys):
    assert main(argv + ["--out-dir", str(tmp_path)]) == 2
    assert repr(field) in capsys.readouterr().err
