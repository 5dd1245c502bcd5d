import json
from dataclasses import replace

import pytest

from deltafs import cli
from deltafs.errors import TraceParse
from deltafs.fs import FSConfig
from deltafs.oracle import predict
from deltafs.replay import MetricsReport, config_from_keyvalue, replay
from deltafs.report import render
from deltafs.trace import TraceConfig, TraceRecord, env_seed, gen_trace, parse, resolve_payload
from scenarios import small_config


def short(name="telegram", **kw):
    return gen_trace(TraceConfig.preset(name, **{"ops": 600, "files": 8, **kw}))


@pytest.mark.parametrize("line,lineno", [
    ("0 write /a 0 gen 1 1.5", 1),
    ("0 frob /a 0 -", 1),
    ("0 write /a 0 hex ABC", 1),
    ("x read /a 0 -", 1),
    ("0 read /a", 1),
])
def test_parse_errors(line, lineno):
    with pytest.raises(TraceParse) as exc:
        parse([line])
    assert exc.value.lineno == lineno


def test_parse_rejects_backwards_ticks():
    with pytest.raises(TraceParse) as exc:
        parse(["5 create /a 0 -", "# note", "3 create /b 0 -"])
    assert exc.value.lineno == 3


def test_hex_payload_roundtrip():
    page = bytes(range(256)) * 16
    rec = parse([f"0 write /a 0 hex {page.hex().upper()}"])[0]
    assert resolve_payload(rec, None) == page


def test_generator_is_deterministic_and_parseable():
    a, b = short(seed=3), short(seed=3)
    assert a == b and a != short(seed=4)
    assert parse(r.to_line() for r in a) == a


def test_gen_payload_changes_exact_run():
    prior = bytes(4096)
    rec = TraceRecord(0, "write", "/a", 0, "gen", (9, 0.99, 100))
    new = resolve_payload(rec, prior)
    changed = [i for i in range(4096) if new[i] != prior[i]]
    assert changed == list(range(100, 141))


def test_env_seed(monkeypatch):
    monkeypatch.setenv("DELTAFS_SEED", "17")
    assert env_seed(0) == 17
    monkeypatch.delenv("DELTAFS_SEED")
    assert env_seed(5) == 5


def test_zero_difference_updates_give_tiny_deltas():
    rep, rp = replay(short(ud=0.0), baseline=False)
    deltas = [e for i in rp.fs.inodes.values() for e in i.deltas]
    assert deltas and all(len(e.payload) == 3 for e in deltas)


def test_no_updates_means_no_savings():
    rep, _ = replay(short(ur=0.0))
    assert rep.normalized_write_volume == pytest.approx(1.0)


def test_reads_add_no_writes():
    setup = parse(["0 create /a 0 -", "0 write /a 0 gen 1 0.0"])
    reads = [TraceRecord(t, "read", "/a", 0) for t in range(1, 4)]
    plain, _ = replay(setup, baseline=False)
    with_reads, _ = replay(setup + reads, baseline=False)
    assert with_reads.flash_writes_blocks == plain.flash_writes_blocks


def test_replay_is_deterministic():
    recs = short("wechat", seed=2)
    a, _ = replay(recs)
    b, _ = replay(recs)
    assert a.to_json_lines() == b.to_json_lines()


def test_report_formats():
    recs = short(seed=1)
    rep, _ = replay(recs)
    back = MetricsReport.from_json_lines(rep.to_json_lines())
    assert back == rep
    rows = render(rep, "csv").splitlines()
    assert rows[0] == "tick,ops,flash_writes,latency_us,RCWC,RCWH,RHWC,RHWH"
    assert sum(int(x) for x in rows[-1].split(",")[4:]) > 0
    assert len(rows) - 1 == recs[-1].tick // 1000 + 1
    text = render(rep, "human")
    assert f"normalized_write_volume {rep.normalized_write_volume:.3f}" in text
    first = json.loads(render(rep, "json-lines").splitlines()[0])
    assert first["kind"] == "summary"


def test_keyvalue_config():
    cfg = config_from_keyvalue("gamma_us = 900\n# comment\ndcm = off\ncache_pages=64\n"
                               "hcluster_window_T = 10\n")
    assert cfg.latency.gamma == 900 and not cfg.dcm and cfg.cache_pages == 64
    assert cfg.hcluster_window == 10
    with pytest.raises(ValueError):
        config_from_keyvalue("bogus = 1")


@pytest.mark.parametrize("seed,cfg", [
    (0, FSConfig()),
    (1, small_config(segment_count=400, cache_pages=40)),
    (2, small_config(segment_count=400, cache_pages=16, hcluster_window=200)),
])
def test_oracle_matches_replay(seed, cfg):
    recs = short("twitter", seed=seed, ops=800)
    _, rp = replay(recs, cfg, baseline=False)
    names, writes, stalls = predict(recs, cfg)
    fs = rp.fs
    assert sum(fs.outcomes.values()) == len(names)
    assert {o.value: n for o, n in fs.outcomes.items()} == \
        {k: names.count(k) for k in set(names)}
    assert abs(fs.device.write_count - writes) <= 1
    assert len(fs.stalls) == len(stalls)


def test_cli_end_to_end(tmp_path, capsys):
    tr, img, rpt = tmp_path / "t.trace", tmp_path / "d.img", tmp_path / "r.jsonl"
    assert cli.main(["gen-trace", "--preset", "zoom", "--ops", "300", "--files", "6",
                     "-o", str(tr)]) == 0
    assert cli.main(["replay", str(tr), "--image", str(img), "--report", str(rpt)]) == 0
    assert "normalized_write_volume" in capsys.readouterr().out
    assert cli.main(["report", "--input", str(rpt), "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("tick,ops")
    assert cli.main(["fsck", "--image", str(img)]) == 0
    assert "clean" in capsys.readouterr().out
    assert cli.main(["replay", str(tmp_path / "missing")]) == 2
