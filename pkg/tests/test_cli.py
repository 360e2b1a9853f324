import json
import os

import numpy as np
import pytest

from echoless.cli import main, parse_bytes
from echoless.tensor_io import read_elpt


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["gen-synthetic", "--out", str(d), "--targets", "300", "--seed", "2"]) == 0
    return d


def test_parse_bytes():
    assert parse_bytes("128GB") == 128 * 10**9
    assert parse_bytes("1GiB") == 2**30
    assert parse_bytes("4096") == 4096
    with pytest.raises(Exception):
        parse_bytes("lots")


def test_precompute_echoless(data_dir, tmp_path):
    out = tmp_path / "out"
    rc = main(["precompute", "--data", str(data_dir), "--strategy", "echoless", "--hops", "3",
               "--partitions", "2", "--out", str(out)])
    assert rc == 0
    files = sorted(os.listdir(out))
    assert [f for f in files if f.endswith(".elpt")] == ["hop_1.elpt", "hop_2.elpt", "hop_3.elpt"]
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["status"] == "ok" and meta["config"]["strategy"] == "echoless"
    t = read_elpt(out / "hop_2.elpt")
    assert t.has_retention and t.shape == (300, 5)
    assert t.meta["strategy"] == "echoless" and t.meta["hop"] == 2
    assert not (out / ".lock").exists()


def test_precompute_oom_guard(tmp_path, capsys):
    d = tmp_path / "big"
    assert main(["gen-synthetic", "--out", str(d), "--targets", "50000"]) == 0
    out = tmp_path / "out"
    rc = main(["precompute", "--data", str(d), "--strategy", "removediag", "--hops", "3",
               "--mem-cap", "1GB", "--out", str(out)])
    assert rc == 3
    err = capsys.readouterr().err
    assert "20000000000 bytes" in err  # 50,000^2 * 8
    assert not list(out.glob("*.elpt"))
    assert json.loads((out / "metadata.json").read_text())["status"] == "oom-guard"


def test_missing_labels_file(data_dir, tmp_path, capsys):
    rc = main(["precompute", "--data", str(data_dir), "--labels", str(tmp_path / "nope.tsv"),
               "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "nope.tsv" in capsys.readouterr().err


def test_config_file_with_flag_override(data_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"strategy": "plain", "hops": 4, "out": str(tmp_path / "o")}))
    assert main(["precompute", "--config", str(cfg), "--data", str(data_dir), "--hops", "2"]) == 0
    assert sorted(p.name for p in (tmp_path / "o").glob("*.elpt")) == ["hop_1.elpt", "hop_2.elpt"]
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["precompute", "--config", str(cfg), "--data", str(data_dir)]) == 2


def test_last_residual_file_names(data_dir, tmp_path):
    assert main(["precompute", "--data", str(data_dir), "--strategy", "lastresidual", "--hops", "3",
                 "--k-min", "2", "--out", str(tmp_path / "o")]) == 0
    assert sorted(p.name for p in (tmp_path / "o").glob("*.elpt")) == ["hop_2.elpt", "hop_3.elpt"]


def test_locked_out_dir(data_dir, tmp_path):
    out = tmp_path / "o"
    out.mkdir()
    (out / ".lock").write_text("123")
    assert main(["precompute", "--data", str(data_dir), "--out", str(out)]) == 2


def test_verify_leakage_report(data_dir, tmp_path):
    rep = tmp_path / "r.json"
    assert main(["verify-leakage", "--data", str(data_dir), "--strategy", "echoless", "--hops", "2",
                 "--report", str(rep)]) == 0
    d = json.loads(rep.read_text())
    assert d["leaking_nodes"] == 0 and d["max_leakage"] == 0.0
    assert main(["verify-leakage", "--data", str(data_dir), "--strategy", "plain", "--hops", "2",
                 "--per-node", "--report", str(rep)]) == 0
    d = json.loads(rep.read_text())
    assert d["leaking_nodes"] > 0 and len(d["per_node"]) > 0


def test_estimate_memory(tmp_path):
    rep = tmp_path / "m.json"
    assert main(["estimate-memory", "--num-nodes", "1939743", "--report", str(rep)]) == 0
    d = json.loads(rep.read_text())
    assert d["bytes"] == 1939743**2 * 8 and d["human"] == "30.1 TB"
    assert main(["estimate-memory", "--num-nodes", "1116162", "--mem-cap", "128GB", "--report", str(rep)]) == 3
    assert json.loads(rep.read_text())["exceeds_cap"] is True


def test_train_eval(data_dir, tmp_path):
    out = tmp_path / "o"
    assert main(["precompute", "--data", str(data_dir), "--hops", "2", "--out", str(out)]) == 0
    metrics = tmp_path / "m.json"
    rc = main(["train-eval", "--tensors", str(out / "hop_1.elpt"), str(out / "hop_2.elpt"),
               "--labels", str(data_dir / "labels.tsv"), "--splits", str(data_dir / "splits.tsv"),
               "--epochs", "30", "--dropout-label", "0.2", "--metrics-out", str(metrics)])
    assert rc == 0
    m = json.loads(metrics.read_text())
    for key in ("train_acc", "test_acc", "test_macro_f1", "valid_acc"):
        assert 0.0 <= m[key] <= 1.0


def test_bench_and_plot_data(data_dir, tmp_path):
    csv_path = tmp_path / "b.csv"
    assert main(["bench", "--data", str(data_dir), "--strategies", "echoless", "removediag",
                 "--hops-list", "2", "3", "--partitions-list", "2", "--mem-cap", "100KB",
                 "--csv", str(csv_path)]) == 0
    rows = csv_path.read_text().splitlines()
    assert len(rows) == 5
    assert rows[-1].startswith("removediag,3,2,") and "oom-guard" in rows[-1]
    plot = tmp_path / "p.json"
    assert main(["plot-data", "--bench", str(csv_path), "--report", str(plot)]) == 0
    assert "removediag/M=2" in json.loads(plot.read_text())["time_vs_K"]


def test_nonlinear_removediag_cli(data_dir, tmp_path):
    rc = main(["precompute", "--data", str(data_dir), "--strategy", "removediag", "--kind",
               "nonlinear-normalized", "--out", str(tmp_path / "o")])
    assert rc == 2


def test_metapath_plans(data_dir, tmp_path):
    rc = main(["precompute", "--data", str(data_dir), "--strategy", "plain", "--kind", "metapath",
               "--metapath", "cites", "--metapath", "rev_writes,writes", "--out", str(tmp_path / "o")])
    assert rc == 0
    t = read_elpt(tmp_path / "o" / "hop_2.elpt")
    assert t.meta["plan"]["metapath"] == ["rev_writes", "writes"]
    assert np.all(t.values >= 0)
