import json

import numpy as np
import pytest

from lhnn import cli
from lhnn.evaluation import load_labels


def run(tmp_path, *argv):
    return cli.main(["--manifest", str(tmp_path / "manifests.jsonl"), *argv])


@pytest.fixture
def workspace(tmp_path):
    """Generated circuit + labels shared by the command tests."""
    circ = tmp_path / "c0.circuit"
    labels = tmp_path / "c0.labels"
    rc = run(tmp_path, "gen", "--seed", "3", "--target-rate", "0.2",
             "--out-circuit", str(circ), "--out-labels", str(labels))
    assert rc == cli.EXIT_OK
    return tmp_path, circ, labels


def test_gen_deterministic(tmp_path):
    paths = [tmp_path / "a.circuit", tmp_path / "b.circuit"]
    for p in paths:
        assert run(tmp_path, "gen", "--seed", "7", "--out-circuit", str(p)) == cli.EXIT_OK
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_build_and_featurize(workspace, capsys):
    tmp_path, circ, _ = workspace
    h_dump = tmp_path / "h.txt"
    rc = run(tmp_path, "build", "--circuit", str(circ), "--filter-fraction", "0.35",
             "--dump-h", str(h_dump))
    assert rc == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "G-cells: 256" in out
    assert h_dump.exists()

    csv = tmp_path / "f.csv"
    rc = run(tmp_path, "featurize", "--circuit", str(circ), "--out-csv", str(csv),
             "--pgm-prefix", str(tmp_path / "map"))
    assert rc == cli.EXIT_OK
    assert len(csv.read_text().splitlines()) == 257
    assert (tmp_path / "map_pin_density.pgm").exists()


def test_train_predict_eval_pipeline(workspace, capsys):
    tmp_path, circ, labels = workspace
    ckpt = tmp_path / "model.ckpt"
    rc = run(tmp_path, "train", "--circuit", str(circ), "--labels", str(labels),
             "--epochs", "4", "--hidden-dim", "8", "--gnet-filter-fraction", "0.35",
             "--out-checkpoint", str(ckpt), "--metrics-csv", str(tmp_path / "m.csv"))
    assert rc == cli.EXIT_OK
    assert ckpt.exists() and (tmp_path / "m.csv").exists()
    assert len((tmp_path / "m.csv").read_text().splitlines()) == 5  # header + 4 epochs

    pred = tmp_path / "pred.csv"
    rc = run(tmp_path, "predict", "--checkpoint", str(ckpt), "--circuit", str(circ),
             "--out-csv", str(pred))
    assert rc == cli.EXIT_OK

    rc = run(tmp_path, "eval", "--pred", str(pred), "--labels", str(labels),
             "--out", str(tmp_path / "report.txt"))
    assert rc == cli.EXIT_OK
    report = (tmp_path / "report.txt").read_text()
    assert report.startswith("F1=")

    # re-running predict reproduces byte-identical output
    pred2 = tmp_path / "pred2.csv"
    run(tmp_path, "predict", "--checkpoint", str(ckpt), "--circuit", str(circ),
        "--out-csv", str(pred2))
    assert pred.read_bytes() == pred2.read_bytes()
    capsys.readouterr()


def test_eval_perfect_predictions(workspace, capsys):
    tmp_path, circ, labels = workspace
    maps, nx, ny = load_labels(str(labels))
    pred = tmp_path / "perfect.csv"
    with open(pred, "w") as fh:
        fh.write(f"# grid {nx} {ny} channels 1\n")
        fh.write("index,cls_0,reg_0\n")
        for i, y in enumerate(maps.cong_h.reshape(-1)):
            fh.write(f"{i},{y:.1f},0\n")
    assert run(tmp_path, "eval", "--pred", str(pred), "--labels", str(labels)) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "F1=1.0000 ACC=1.0000" in out


def test_mlp_train_path(workspace):
    tmp_path, circ, labels = workspace
    ckpt = tmp_path / "mlp.ckpt"
    rc = run(tmp_path, "train", "--model", "mlp", "--circuit", str(circ),
             "--labels", str(labels), "--epochs", "3", "--hidden-dim", "8",
             "--gnet-filter-fraction", "0.35", "--out-checkpoint", str(ckpt))
    assert rc == cli.EXIT_OK
    rc = run(tmp_path, "predict", "--model", "mlp", "--checkpoint", str(ckpt),
             "--circuit", str(circ), "--out-csv", str(tmp_path / "p.csv"))
    assert rc == cli.EXIT_OK


def test_ablate_smoke(workspace, capsys):
    tmp_path, circ, labels = workspace
    out = tmp_path / "ablation.csv"
    rc = run(tmp_path, "ablate", "--circuit", str(circ), "--labels", str(labels),
             "--epochs", "2", "--hidden-dim", "8", "--gnet-filter-fraction", "0.35",
             "--n-seeds", "1", "--out", str(out))
    assert rc == cli.EXIT_OK
    rows = out.read_text().splitlines()
    assert rows[0] == "combo,seed,f1,acc"
    combos = {line.split(",")[0] for line in rows[1:]}
    assert "full" in combos and "no_hypermp_edges" in combos
    capsys.readouterr()


def test_exit_codes(tmp_path, capsys):
    assert run(tmp_path, "build", "--circuit", str(tmp_path / "nope")) == cli.EXIT_MISSING_FILE
    bad = tmp_path / "bad.circuit"
    bad.write_text("GRID not-a-number 4 1 1 2 2\n")
    assert run(tmp_path, "build", "--circuit", str(bad)) == cli.EXIT_PARSE
    circ = tmp_path / "ok.circuit"
    assert run(tmp_path, "gen", "--out-circuit", str(circ)) == cli.EXIT_OK
    rc = run(tmp_path, "train", "--circuit", str(circ), "--labels", str(circ),
             "--labels", str(circ), "--epochs", "1",
             "--out-checkpoint", str(tmp_path / "x.ckpt"))
    assert rc == cli.EXIT_CONFIG  # circuit/label count mismatch
    capsys.readouterr()


def test_manifest_lines(workspace):
    tmp_path, circ, _ = workspace
    manifest = tmp_path / "manifests.jsonl"
    before = len(manifest.read_text().splitlines())
    run(tmp_path, "build", "--circuit", str(circ))
    lines = manifest.read_text().splitlines()
    assert len(lines) == before + 1  # append-only, one record per run
    record = json.loads(lines[-1])
    assert record["command"] == "build"
    assert str(circ) in record["inputs"]
    assert len(record["inputs"][str(circ)]) == 64  # sha256 hex
