import csv
import json

import pytest

from dbar.cli import main
from dbar.config import load_config, parse_config, parse_window
from dbar.errors import UsageError
from dbar.kernel import spec_to_dict
from conftest import FAMILIES


def write_config(tmp_path, family="markov", name="cfg.json", **extra):
    x, y = FAMILIES[family]
    data = {"x": spec_to_dict(x), "y": spec_to_dict(y), "seed": 1, "replicas": 20,
            "window": [0, 999], "out": str(tmp_path / "out")}
    data.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_check_running_example(tmp_path, capsys):
    cfg = write_config(tmp_path, "renewal")
    assert main(["check", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 3 and all("satisfied" in line or "ordered" in line for line in out)


def test_check_violated_and_malformed(tmp_path, capsys):
    bad = tmp_path / "v.json"
    bad.write_text(json.dumps({"x": {"family": "iid", "p": 0.6}, "y": {"family": "iid", "p": 0.5}}))
    assert main(["check", "--config", str(bad)]) == 1
    assert "violated" in capsys.readouterr().out
    bad.write_text(json.dumps({"x": {"family": "iid", "p": 1.3}, "y": {"family": "iid", "p": 0.5}}))
    assert main(["check", "--config", str(bad)]) == 2
    bad.write_text("{not json")
    assert main(["check", "--config", str(bad)]) == 2
    assert main(["check", "--config", str(tmp_path / "missing.json")]) == 2


def test_argument_errors_exit_2(tmp_path):
    cfg = write_config(tmp_path)
    with pytest.raises(SystemExit) as exc:
        main(["check"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate", "--config", str(cfg)])
    assert exc.value.code == 2
    assert main(["sample", "--config", str(cfg), "--window", "9:0"]) == 2
    assert main(["sample", "--config", str(cfg), "--replicas", "0"]) == 2


def test_decompose_examples(tmp_path):
    cfg = write_config(tmp_path, "iid")
    assert main(["decompose", "--config", str(cfg)]) == 0
    rows = read_rows(tmp_path / "out" / "decompose.csv")
    assert rows == [["k", "alpha_k", "lambda_k", "cumulative_mass"], ["0", "1", "1", "1"]]
    cfg = write_config(tmp_path, "markov")
    assert main(["decompose", "--config", str(cfg)]) == 0
    rows = read_rows(tmp_path / "out" / "decompose.csv")[1:]
    assert [float(v) for v in rows[0]] == pytest.approx([0, 0.8, 0.8, 0.8], abs=1e-12)
    assert [float(v) for v in rows[1]] == pytest.approx([1, 1, 0.2, 1], abs=1e-12)
    assert len(rows) == 2


def test_decompose_renewal_reaches_full_mass(tmp_path, capsys):
    cfg = write_config(tmp_path, "renewal")
    assert main(["decompose", "--config", str(cfg)]) == 0
    rows = read_rows(tmp_path / "out" / "decompose.csv")[1:]
    lam = [float(r[2]) for r in rows]
    assert float(rows[-1][3]) >= 1 - 1e-9
    assert all(b == pytest.approx(a / 2, rel=1e-6) for a, b in zip(lam[1:], lam[2:]))
    assert main(["decompose", "--config", str(cfg), "--kmax", "5"]) == 0
    assert "truncated" in capsys.readouterr().err
    assert len(read_rows(tmp_path / "out" / "decompose.csv")) == 7


def test_decompose_hard_cap_exit_1(tmp_path, capsys):
    cfg = write_config(tmp_path, "renewal", k_hard=8)
    assert main(["decompose", "--config", str(cfg), "--kmax", "50"]) == 1
    assert "hard cap" in capsys.readouterr().err


def test_sample_iid_window(tmp_path):
    cfg = write_config(tmp_path, "iid", replicas=1)
    assert main(["sample", "--config", str(cfg), "--window", "0:9", "--seed", "1"]) == 0
    lines = (tmp_path / "out" / "sample_replica0.csv").read_text().splitlines()
    assert lines[0] == "# seed=1,replica=0,window=0:9,T=0"
    assert lines[1] == "t,x_t,y_t,L_t,regen_flag"
    assert len(lines) == 12
    for row in lines[2:]:
        t, x, y, mem, flag = map(int, row.split(","))
        assert x <= y and mem == 0 and flag == 1


def test_sample_window_coherence_through_cli(tmp_path):
    cfg = write_config(tmp_path, "renewal", replicas=2)
    assert main(["sample", "--config", str(cfg), "--window=-20:60", "--out", str(tmp_path / "a")]) == 0
    assert main(["sample", "--config", str(cfg), "--window", "5:30", "--out", str(tmp_path / "b")]) == 0
    for r in range(2):
        big = {row[0]: row[1:3] for row in read_rows(tmp_path / "a" / f"sample_replica{r}.csv")[2:]}
        small = read_rows(tmp_path / "b" / f"sample_replica{r}.csv")[2:]
        assert all(big[row[0]] == row[1:3] for row in small)


def test_estimate_passes_and_is_byte_identical(tmp_path):
    x = {"family": "iid", "p": 0.3}
    y = {"family": "iid", "p": 0.5}
    cfg = tmp_path / "iid.json"
    cfg.write_text(json.dumps({"x": x, "y": y, "seed": 7, "replicas": 50, "window": [0, 999]}))
    assert main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "estimate.csv").read_bytes()
    assert a == (tmp_path / "b" / "estimate.csv").read_bytes()
    rows = {r[0]: r for r in read_rows(tmp_path / "a" / "estimate.csv")}
    assert float(rows["dbar"][3]) == pytest.approx(0.2, abs=1e-15)
    assert {"cell_00", "cell_01", "cell_11", "mk_cost_geometric"} <= rows.keys()


def test_regen_stats_markov(tmp_path):
    cfg = write_config(tmp_path, "markov", replicas=4, window=[0, 9999])
    assert main(["regen-stats", "--config", str(cfg)]) == 0
    rows = {r[0]: r for r in read_rows(tmp_path / "out" / "regen_stats.csv")}
    assert float(rows["regen_rate"][3]) == pytest.approx(0.8, abs=1e-12)
    assert rows["regen_rate"][4] == "true"


def test_unordered_pair_exits_1_for_sampling(tmp_path):
    cfg = tmp_path / "v.json"
    cfg.write_text(json.dumps({"x": {"family": "iid", "p": 0.6}, "y": {"family": "iid", "p": 0.5}}))
    assert main(["sample", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_config_parsing(tmp_path):
    cfg = load_config(write_config(tmp_path, "renewal", tolerances={"dbar_floor": 0.01}))
    assert cfg.dbar_floor == 0.01 and cfg.window == (0, 999) and cfg.window_length == 1000
    again = parse_config(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert parse_window("-5:7") == (-5, 7)
    for text in ("5", "a:b", "3:1"):
        with pytest.raises(UsageError):
            parse_window(text)
    base = {"x": {"family": "iid", "p": 0.3}, "y": {"family": "iid", "p": 0.5}}
    for bad in ({**base, "seed": -1}, {**base, "window": [3, 1]}, {**base, "extra": 1},
                {"x": base["x"]}, {**base, "x": {"family": "markov", "order": 1, "table": {"0": 0.1}}},
                {**base, "y": {"family": "renewal", "hazard": {"kind": "geometric", "q_inf": 0.4}}}):
        with pytest.raises(UsageError):
            parse_config(bad)
