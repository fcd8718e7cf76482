import csv
import hashlib
import json
from pathlib import Path

import pytest

from h2size.cli import run_command

from conftest import FIXTURES
import make_goldens

GOLDEN = Path(__file__).parent / "golden"


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    assert run_command(["gen", "--config", str(GOLDEN / "config.json"), "--seed",
                        str(make_goldens.SEED), "--captures", str(make_goldens.CAPTURES),
                        "--out", str(d)]) == 0
    trace = d / "trace.jsonl"
    assert run_command(["strip", "--in", str(trace), "--out", str(d)]) == 0
    assert run_command(["segments", "--in", str(trace), "--out", str(d)]) == 0
    for lv in ("A1", "A2", "A3"):
        assert run_command(["worstcase", "--in", str(trace), "--level", lv, "--out", str(d)]) == 0
    assert run_command(["attack", "--in", str(d / "attacker.jsonl"), "--out", str(d)]) == 0
    assert run_command(["attack-eval", "--in", str(trace), "--findings",
                        str(d / "findings.csv"), "--out", str(d)]) == 0
    return d


def test_gen_is_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert run_command(["gen", "--config", str(GOLDEN / "config.json"), "--seed", "7",
                            "--out", str(tmp_path / sub)]) == 0
    assert digest(tmp_path / "a/trace.jsonl") == digest(tmp_path / "b/trace.jsonl")


def test_gen_without_config_uses_defaults(tmp_path):
    assert run_command(["gen", "--seed", "1", "--captures", "2", "--out", str(tmp_path)]) == 0
    assert run_command(["validate", "--in", str(tmp_path / "trace.jsonl")]) == 0


@pytest.mark.parametrize("name", ["segments.csv", "worstcase_A1.csv", "worstcase_A2.csv",
                                  "worstcase_A3.csv", "findings.csv", "attack_counts.csv"])
def test_pipeline_matches_goldens(pipeline, name):
    assert (pipeline / name).read_text() == (GOLDEN / name).read_text()


def test_goldens_are_oracle_output(pipeline, tmp_path):
    make_goldens.build(pipeline / "trace.jsonl", pipeline / "findings.csv", tmp_path)
    for f in tmp_path.iterdir():
        assert f.read_text() == (GOLDEN / f.name).read_text()


def test_attack_eval_side_tables(pipeline):
    corr = rows(pipeline / "attack_corr.csv")
    assert [r["count_diff_vs"] for r in corr] == ["pipelined", "multiplexed"]
    errors = rows(pipeline / "attack_errors.csv")
    assert errors and all(r["class"] in ("plain", "pipelined", "multiplexed") for r in errors)
    cdf = rows(pipeline / "attack_error_cdf.csv")
    last = {}
    for r in cdf:
        last[r["class"]] = float(r["cum"])
    assert set(last.values()) == {1.0}


def test_worstcase_cdf_written(pipeline):
    cdf = rows(pipeline / "worstcase_A2_cdf.csv")
    assert cdf and list(cdf[0]) == ["size_range", "e", "cum"]


def test_indicators_on_toy(capsys):
    assert run_command(["indicators", "--in", str(FIXTURES / "toy.trace")]) == 0
    out = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert len(out) == 1
    assert float(out[0]["pipe_over_h2"]) > 0
    assert float(out[0]["mux_over_pipe"]) > 0


def test_indicators_timeline_and_sites(tmp_path, capsys):
    trace = FIXTURES / "toy.trace"
    assert run_command(["indicators", "--in", str(trace), "--timeline"]) == 0
    (row,) = csv.DictReader(capsys.readouterr().out.splitlines())
    assert row["day"] == "2017-05-01" and row["unique_sites"] == "1"
    assert run_command(["indicators", "--in", str(trace), "--out", str(tmp_path)]) == 0
    assert {p.name for p in tmp_path.iterdir()} == {"indicators.csv", "timeline.csv", "sites.csv"}


def test_jsonl_format(tmp_path):
    assert run_command(["segments", "--in", str(FIXTURES / "toy.trace"), "--format", "jsonl",
                        "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "segments.jsonl").read_text().splitlines()
    recs = [json.loads(x) for x in lines]
    assert [r["kind"] for r in recs] == ["pipelining", "multiplexing"]
    assert recs[0]["n_streams"] == 3


def test_characterize_and_extent_tables(tmp_path):
    trace = str(FIXTURES / "toy.trace")
    assert run_command(["characterize", "--in", trace, "--out", str(tmp_path)]) == 0
    assert run_command(["extent", "--in", trace, "--out", str(tmp_path)]) == 0
    for name in ("characterize_hist", "characterize_cdf", "extent_ranges", "extent_streams",
                 "extent_same_connection", "extent_share_cdf"):
        text = (tmp_path / f"{name}.csv").read_text()
        assert text.splitlines()[0].count(",") >= 2
    hist = rows(tmp_path / "characterize_hist.csv")
    assert {"table": "record_overhead", "group": "header", "value": "33", "count": "3"} in hist


def test_inputs_are_not_mutated_and_reruns_are_identical(pipeline, tmp_path):
    trace = pipeline / "trace.jsonl"
    before = digest(trace)
    outs = []
    for sub in ("x", "y"):
        assert run_command(["extent", "--in", str(trace), "--out", str(tmp_path / sub)]) == 0
        outs.append({p.name: digest(p) for p in (tmp_path / sub).iterdir()})
    assert digest(trace) == before
    assert outs[0] == outs[1]


def test_usage_errors_exit_2(capsys):
    assert run_command(["frobnicate"]) == 2
    assert run_command([]) == 2
    assert run_command(["gen", "--out", "x"]) == 2
    assert run_command(["worstcase", "--in", "x", "--level", "A9"]) == 2


def test_data_errors_exit_1(tmp_path, capsys):
    assert run_command(["validate", "--in", str(tmp_path / "missing.jsonl")]) == 1
    assert "missing.jsonl" in capsys.readouterr().err
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"kind":"capture"}\n')
    assert run_command(["segments", "--in", str(bad)]) == 1
    assert "line 1" in capsys.readouterr().err
    params = tmp_path / "p.json"
    params.write_text('{"abs_gap": -1}')
    assert run_command(["attack", "--in", str(FIXTURES / "toy.trace"),
                        "--params", str(params)]) == 1
    params.write_text("not json")
    assert run_command(["attack", "--in", str(FIXTURES / "toy.trace"),
                        "--params", str(params)]) == 1
    assert run_command(["attack-eval", "--in", str(FIXTURES / "toy.trace")]) == 1
    cfg = tmp_path / "c.json"
    cfg.write_text('{"policy": "chaos"}')
    assert run_command(["gen", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path)]) == 1


def test_attack_params_file(tmp_path, capsys):
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"fingerprint": [45, 99]}))
    assert run_command(["attack", "--in", str(FIXTURES / "toy.trace"),
                        "--params", str(params)]) == 0
    assert capsys.readouterr().out.strip().splitlines() == [
        "capture_id,conn_id,start_pos,end_pos,header_time,est_size,span_size,overlapped"]
