import numpy as np
import pytest

from locsnn.cli import main
from locsnn.models import load_model


def _gen(tmp_path, name="data", **over):
    args = {"taxels": 6, "steps": 12, "classes": 2, "per-class": 8, "seed": 0}
    args.update(over)
    out = tmp_path / name
    argv = ["gen-synth", "--out", str(out)]
    for k, v in args.items():
        argv += [f"--{k}", str(v)]
    assert main(argv) == 0
    return out


def _train(tmp_path, data, *extra):
    out = tmp_path / "run"
    argv = ["train", "--data", str(data), "--out", str(out),
            "--set", "model=hybrid_srm_fc", "--set", "epochs=2",
            "--set", "batch_size=8", "--set", "hidden=6",
            "--set", "rounds=1", "--set", "n_classes=2", *extra]
    assert main(argv) == 0
    return out


def test_gen_synth_writes_loadable_dataset(tmp_path):
    data = _gen(tmp_path)
    assert (data / "manifest.cfg").is_file()
    files = list(data.rglob("*.evt"))
    assert len(files) == 16
    assert (data / "class00").is_dir() and (data / "class01").is_dir()


def test_train_writes_metrics_and_checkpoint(tmp_path, capsys):
    data = _gen(tmp_path)
    run = _train(tmp_path, data)
    echo = capsys.readouterr().out
    assert "# resolved configuration" in echo
    assert "epochs = 2" in echo
    assert "model = hybrid_srm_fc" in echo
    lines = (run / "metrics.csv").read_text().strip().split("\n")
    assert lines[0] == "round,epoch,train_loss,train_acc,test_acc"
    assert len(lines) == 3  # 1 round x 2 epochs
    model = load_model(run / "model.npz")
    assert model.n_taxels == 6 and model.n_steps == 12


def test_train_class_count_mismatch_exits_2_without_artifacts(tmp_path, capsys):
    data = _gen(tmp_path)
    out = tmp_path / "run"
    rc = main(["train", "--data", str(data), "--out", str(out),
               "--set", "n_classes=5", "--set", "epochs=1", "--set", "rounds=1"])
    assert rc == 2
    assert "configuration error" in capsys.readouterr().err
    assert not out.exists()


def test_train_missing_data_exits_3(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "nope"),
               "--out", str(tmp_path / "run")])
    assert rc == 3
    assert capsys.readouterr().err.strip() != ""


def test_train_unknown_config_key_exits_2(tmp_path, capsys):
    data = _gen(tmp_path)
    rc = main(["train", "--data", str(data), "--out", str(tmp_path / "run"),
               "--set", "hidden_units=6"])
    assert rc == 2
    assert "hidden_units" in capsys.readouterr().err


def test_config_file_and_set_precedence(tmp_path, capsys):
    data = _gen(tmp_path)
    cfg = tmp_path / "train.cfg"
    cfg.write_text("# comment\nmodel = hybrid_srm_fc\nepochs = 9\nhidden = 6\n"
                   "rounds = 1\nbatch_size = 8\nn_classes = 2\n")
    out = tmp_path / "run"
    rc = main(["train", "--data", str(data), "--out", str(out),
               "--config", str(cfg), "--set", "epochs=1"])
    assert rc == 0
    echo = capsys.readouterr().out
    assert "epochs = 1" in echo  # --set beats the file
    assert "hidden = 6" in echo  # file beats the default


def test_malformed_set_exits_2(tmp_path, capsys):
    data = _gen(tmp_path)
    rc = main(["train", "--data", str(data), "--out", str(tmp_path / "run"),
               "--set", "epochs"])
    assert rc == 2


def test_eval_prints_accuracy(tmp_path, capsys):
    data = _gen(tmp_path)
    run = _train(tmp_path, data)
    capsys.readouterr()
    rc = main(["eval", "--model", str(run / "model.npz"), "--data", str(data),
               "--threads", "2"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "accuracy" in out
    value = float(out.split("=")[1].split("(")[0])
    assert 0.0 <= value <= 1.0


def test_stream_emits_per_step_rows(tmp_path, capsys):
    data = _gen(tmp_path)
    run = _train(tmp_path, data)
    event_file = sorted(data.rglob("*.evt"))[0]
    csv = tmp_path / "steps.csv"
    capsys.readouterr()
    rc = main(["stream", "--model", str(run / "model.npz"),
               "--input", str(event_file), "--out", str(csv)])
    assert rc == 0
    lines = csv.read_text().strip().split("\n")
    assert lines[0] == "t,prediction,time0,time1,loc0,loc1"
    assert len(lines) == 13  # header + 12 steps
    assert "prediction" in capsys.readouterr().out


def test_stream_weighting_flag(tmp_path, capsys):
    data = _gen(tmp_path)
    run = _train(tmp_path, data)
    event_file = sorted(data.rglob("*.evt"))[0]
    capsys.readouterr()
    rc = main(["stream", "--model", str(run / "model.npz"),
               "--input", str(event_file), "--weighting", "sigmoid"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("t,prediction,")


def test_count_ops_reports_totals_and_ratio(tmp_path, capsys):
    data = _gen(tmp_path)
    run = _train(tmp_path, data)
    csv = tmp_path / "ops.csv"
    capsys.readouterr()
    rc = main(["count-ops", "--model", str(run / "model.npz"),
               "--data", str(data), "--limit", "4", "--out", str(csv)])
    assert rc == 0
    lines = csv.read_text().strip().split("\n")
    assert lines[0] == "layer,kind,synaptic_adds,state_adds,adds,mults"
    assert sum(1 for l in lines if l.startswith("total,")) == 2
    summary = capsys.readouterr().out
    assert "ratio" in summary

    capsys.readouterr()
    event_file = sorted(data.rglob("*.evt"))[0]
    rc = main(["count-ops", "--model", str(run / "model.npz"),
               "--input", str(event_file)])
    assert rc == 0
    assert "total,snn" in capsys.readouterr().out


def test_count_ops_requires_a_source(tmp_path, capsys):
    data = _gen(tmp_path)
    run = _train(tmp_path, data)
    capsys.readouterr()
    rc = main(["count-ops", "--model", str(run / "model.npz")])
    assert rc == 2


def test_graph_spatial_default_sensor(tmp_path, capsys):
    rc = main(["graph", "--kind", "spatial"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[0] == "u,v,weight"
    assert len(lines) == 39  # header + 38 tree edges
    u, v, w = lines[1].split(",")
    assert int(u) >= 0 and int(v) >= 0 and float(w) > 0


def test_graph_temporal_dense(capsys):
    rc = main(["graph", "--kind", "temporal", "--steps", "5", "--mode", "dense"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert len(lines) == 11  # header + 5*4/2 edges
    for line in lines[1:]:
        u, v, w = line.split(",")
        assert int(u) < int(v)
        assert float(w) == 1.0


def test_graph_custom_coords(tmp_path, capsys):
    coords = tmp_path / "coords.txt"
    coords.write_text("0 0.0 0.0\n1 1.0 0.0\n2 1.0 1.0\n")
    rc = main(["graph", "--kind", "spatial", "--coords", str(coords)])
    assert rc == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert len(lines) == 3  # header + 2 edges


def test_gen_synth_rejects_bad_rates(tmp_path, capsys):
    rc = main(["gen-synth", "--out", str(tmp_path / "d"),
               "--rate-lo", "0.9", "--rate-hi", "0.1"])
    assert rc == 2
    assert "configuration error" in capsys.readouterr().err


def test_no_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_late_burst_generation(tmp_path):
    data = _gen(tmp_path, name="late", task="late-burst", **{"late-start": 8})
    files = list(data.rglob("*.evt"))
    assert len(files) == 16
    manifest = (data / "manifest.cfg").read_text()
    assert "late-burst" in manifest
