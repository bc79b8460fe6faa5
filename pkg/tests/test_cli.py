import json
import shutil

import pytest
import yaml

from gridpin.cli import run
from gridpin.config import ConfigError, load_config, parse_document, resolve


def write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_analyze_fourbus_table(capsys, data_dir, tmp_path):
    assert run(["analyze", "--config", str(data_dir / "case3.yaml"), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "analysis.json").read_text())
    paths = {tuple(r["pinned"]): r["path"] for r in report["candidates"]}
    assert paths[("DG1",)] == 6 and paths[("DG2",)] == 4
    assert "NOT_APPLICABLE" in capsys.readouterr().out


def test_analyze_defaults_to_singletons(tmp_path, capsys):
    cfg = write(tmp_path, "network:\n  n: 4\n  directed: false\n  edges: [[1, 2], [2, 3], [3, 4]]\n")
    assert run(["analyze", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = json.loads((tmp_path / "o" / "analysis.json").read_text())["candidates"]
    assert [r["pinned"] for r in rows] == [["DG1"], ["DG2"], ["DG3"], ["DG4"]]
    assert all(r["phi_lower"] - 1e-7 <= r["phi"] <= r["phi_upper"] + 1e-7 for r in rows)


def test_analyze_pinning_flag(tmp_path, data_dir):
    out = tmp_path / "o"
    assert run(["analyze", "--config", str(data_dir / "case1.yaml"), "--pinning", "DG1,DG3", "--pinning", "DG2", "--out", str(out)]) == 0
    rows = json.loads((out / "analysis.json").read_text())["candidates"]
    assert [r["pinned"] for r in rows] == [["DG1", "DG3"], ["DG2"]]


@pytest.mark.parametrize("lam, size", [(10, 1), (20, 2)])
def test_pin_target_rate(tmp_path, data_dir, lam, size):
    out = tmp_path / "o"
    assert run(["pin", "--config", str(data_dir / "case1.yaml"), "--lambda-star", str(lam), "--out", str(out)]) == 0
    sel = json.loads((out / "selection.json").read_text())
    assert len(sel["pinned"]) == size
    assert sel["score_trace"] and sel["ties"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert str(out / "selection.json") in manifest["outputs"]
    assert manifest["resolved_config"]["selection"]["lambda_star"] == lam


def test_pin_fixed_m_all_nodes(tmp_path, data_dir):
    out = tmp_path / "o"
    assert run(["pin", "--config", str(data_dir / "case1.yaml"), "--mode", "fixed-m", "--m", "5", "--out", str(out)]) == 0
    assert sorted(json.loads((out / "selection.json").read_text())["pinned"]) == ["DG1", "DG2", "DG3", "DG4", "DG5"]


def test_pin_exhaustive(tmp_path, data_dir):
    out = tmp_path / "o"
    assert run(["pin", "--config", str(data_dir / "case3.yaml"), "--mode", "exhaustive", "--out", str(out)]) == 0
    assert json.loads((out / "selection.json").read_text())["pinned"] == ["DG2"]


def test_unattainable_target_exit_3(data_dir, capsys):
    assert run(["pin", "--config", str(data_dir / "case1.yaml"), "--lambda-star", "200"]) == 3
    assert "best achieved" in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path, capsys):
    bad = write(tmp_path, "network:\n  n: 3\n  edges:\n    - [1, 2]\n    - [2, 2]\n")
    assert run(["analyze", "--config", str(bad)]) == 2
    assert "self-loop" in capsys.readouterr().err
    typo = write(tmp_path, "network:\n  file: fourbus.net\ngains:\n  c_v: fast\n", "t.yaml")
    assert run(["analyze", "--config", str(typo)]) == 2
    assert "t.yaml:4: field 'gains.c_v'" in capsys.readouterr().err
    syntax = write(tmp_path, "network: [1, 2\n", "s.yaml")
    assert run(["analyze", "--config", str(syntax)]) == 2
    assert run(["analyze", "--config", str(tmp_path / "missing.yaml")]) == 2
    unknown = write(tmp_path, "network:\n  file: fourbus.net\nselection:\n  mode: random\n", "u.yaml")
    assert run(["pin", "--config", str(unknown)]) == 2
    assert "u.yaml:4" in capsys.readouterr().err


def test_stability_guard_exit_2(tmp_path, data_dir, capsys):
    assert run(["simulate", "--config", str(data_dir / "case3.yaml"), "--pinning", "DG2", "--dt", "0.05", "--out", str(tmp_path)]) == 2
    assert "try dt <=" in capsys.readouterr().err


def test_simulate_errors_mode(tmp_path, data_dir):
    out = tmp_path / "o"
    assert run(["simulate", "--config", str(data_dir / "case1.yaml"), "--mode", "errors", "--out", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["pinned"] in (["DG2"], ["DG3"])
    assert metrics["initial_errors"] == "snapshot"
    assert metrics["channels"]["omega"]["rate_settling"] >= 10
    assert (out / "errors.csv").read_text().startswith("t,e_v_1,")


def test_simulate_zero_duration(tmp_path, data_dir):
    out = tmp_path / "o"
    assert run(["simulate", "--config", str(data_dir / "case3.yaml"), "--pinning", "DG2", "--t-end", "0", "--out", str(out)]) == 0
    assert (out / "errors.csv").read_text().splitlines() == ["t,e_v_1,e_v_2,e_v_3,e_v_4,e_w_1,e_w_2,e_w_3,e_w_4"]


def test_simulate_from_pin_result(tmp_path, data_dir):
    assert run(["pin", "--config", str(data_dir / "case1.yaml"), "--lambda-star", "20", "--out", str(tmp_path / "p")]) == 0
    out = tmp_path / "s"
    assert run(["simulate", "--config", str(data_dir / "case3.yaml"), "--pinning", "DG2", "--t-end", "0.01", "--out", str(out)]) == 0
    out2 = tmp_path / "s2"
    assert run(["simulate", "--config", str(data_dir / "case1.yaml"), "--mode", "errors", "--pin-result",
                str(tmp_path / "p" / "selection.json"), "--t-end", "0.05", "--out", str(out2)]) == 0
    assert len(json.loads((out2 / "metrics.json").read_text())["pinned"]) == 2


def test_unstable_plant_exit_4(tmp_path, data_dir):
    doc = yaml.safe_load((data_dir / "case1.yaml").read_text())
    doc["gains"]["c_p"] = 1e5
    doc["network"]["file"] = str(data_dir / "fivebus.net")
    cfg = write(tmp_path, yaml.safe_dump(doc))
    out = tmp_path / "o"
    assert run(["simulate", "--config", str(cfg), "--pinning", "DG2", "--t-end", "0.3", "--out", str(out)]) == 4
    assert json.loads((out / "metrics.json").read_text())["status"] == "UNSTABLE"
    assert (out / "plant.csv").exists()
    assert json.loads((out / "manifest.json").read_text())["status"] == "UNSTABLE"


def test_replay_reproduces_csv(tmp_path, data_dir):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["simulate", "--config", str(data_dir / "case2.yaml"), "--t-end", "0.3", "--out", str(a)]) == 0
    assert run(["replay", str(a / "manifest.json"), "--out", str(b)]) == 0
    for name in ("plant.csv", "violations.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_resolved_document_round_trips(data_dir):
    cfg = load_config(data_dir / "case2.yaml")
    doc = cfg.to_document()
    again = resolve(parse_document(yaml.safe_dump(doc)))
    assert again.to_document() == doc
    assert again.pinning == [2]


def test_flag_overrides_document(data_dir):
    cfg = load_config(data_dir / "case1.yaml", {"gain": 0.5, "lambda_star": 20, "dt": 5e-5})
    assert (cfg.pin_gain, cfg.lambda_star, cfg.dt) == (0.5, 20, 5e-5)


def test_inline_undirected_network(tmp_path):
    cfg = load_config(write(tmp_path, "network:\n  n: 3\n  directed: false\n  labels: [A, B, C]\n  edges: [[1, 2], [2, 3]]\npinning:\n  set: [B]\n"))
    assert cfg.network.is_undirected and cfg.network.node_labels == ("A", "B", "C")
    assert cfg.pinning == [1]
    with pytest.raises(ConfigError, match="unknown node"):
        load_config(write(tmp_path, "network:\n  n: 2\n  edges: [[1, 2]]\npinning:\n  set: [DG7]\n", "x.yaml"))


def test_case_files_ship(data_dir, tmp_path):
    for name in ("case1.yaml", "case1b.yaml", "case2.yaml", "case3.yaml"):
        load_config(data_dir / name)
    # configs copied elsewhere still find the shipped network files
    shutil.copy(data_dir / "case3.yaml", tmp_path / "case3.yaml")
    assert load_config(tmp_path / "case3.yaml").network.n_nodes == 4
