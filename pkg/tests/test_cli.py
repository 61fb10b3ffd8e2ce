import json
import subprocess
import sys

import pytest

from aagan.cli import main
from aagan.config import TrainConfig

TINY = ["--classes", "3", "--dim", "4", "--samples-per-class", "4", "--test-per-class", "2", "--length", "12"]
FAST = ["--hidden", "4", "--epochs", "1", "--batch", "6"]


@pytest.fixture
def data(tmp_path):
    assert main(["gen-data", *TINY, "--seed", "2", "--out-dir", str(tmp_path / "d")]) == 0
    return tmp_path / "d" / "dataset.aagn"


def cfgfile(tmp_path, **kw):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"split": {"resample_len": 12, "observed_fraction": 0.25}, **kw}))
    return str(p)


def test_gen_data_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["gen-data", "--classes", "4", "--dim", "32", "--seed", "7", "--samples-per-class", "5",
                     "--test-per-class", "2", "--out-dir", str(tmp_path / name)]) == 0
    for f in ("dataset.aagn", "dataset.aagn.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_gen_data_missing_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen-data", "--dim", "4"])
    assert exc.value.code == 2
    assert "--classes" in capsys.readouterr().err


def test_gen_data_summary_counts(tmp_path, capsys):
    main(["gen-data", *TINY, "--test-per-class", "0", "--out-dir", str(tmp_path)])
    out = capsys.readouterr().out
    assert "K=3" in out and "D=4" in out and "records=12" in out and "seed=0" in out


def test_invalid_synthetic_config_is_runtime_error(tmp_path):
    assert main(["gen-data", "--classes", "1", "--out-dir", str(tmp_path)]) == 1


def test_train_default_hyperparameters(capsys):
    assert main(["train", "--print-config"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["epochs"] == 40 and cfg["batch_size"] == 32
    assert cfg["lr"] == 0.0002 and cfg["decay"] == 8e-9
    assert cfg["weights"] == {"w_v": 25.0, "w_tp": 20.0, "w_c": 43.0, "w_r": 15.0}
    assert cfg["hidden_dim"] == 300 and cfg["variant"] == "full"
    assert TrainConfig.from_dict({k: v for k, v in cfg.items() if k not in ("out_dir", "data")}) == TrainConfig()


def test_flags_override_config_file(tmp_path, capsys):
    c = cfgfile(tmp_path, epochs=3, lr=0.1)
    main(["train", "--config", c, "--epochs", "5", "--weights", "1,2,3,4", "--setting", "latest", "--print-config"])
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["epochs"] == 5 and cfg["lr"] == 0.1
    assert cfg["weights"] == {"w_v": 1.0, "w_tp": 2.0, "w_c": 3.0, "w_r": 4.0}
    assert cfg["split"] == {"observed_fraction": 0.5, "resample_len": 12, "horizon": None}


def test_unknown_config_keys_rejected(tmp_path):
    c = tmp_path / "bad.json"
    c.write_text(json.dumps({"epochz": 3}))
    assert main(["train", "--config", str(c), "--print-config"]) == 2
    c.write_text(json.dumps({"weights": {"w_q": 1}}))
    assert main(["train", "--config", str(c), "--print-config"]) == 2


def test_train_variant_c(tmp_path, data):
    out = tmp_path / "run"
    assert main(["train", "--data", str(data), "--config", cfgfile(tmp_path), "--variant", "c", *FAST,
                 "--out-dir", str(out)]) == 0
    assert json.loads((out / "config.json").read_text())["variant"] == "c"
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == "step,stage,epoch,batch,l_v,l_tp,l_c,l_r,total,d_v,d_tp,clamped"
    assert not list(out.glob("*.tmp"))


def test_train_without_data_is_usage_error(tmp_path):
    assert main(["train", "--out-dir", str(tmp_path)]) == 2


def test_missing_dataset_is_runtime_error(tmp_path):
    assert main(["train", "--data", str(tmp_path / "nope.aagn"), "--out-dir", str(tmp_path)]) == 1


def test_eval_setting_and_purity(tmp_path, data, capsys):
    run = tmp_path / "run"
    main(["train", "--data", str(data), "--config", cfgfile(tmp_path), *FAST, "--out-dir", str(run)])
    ck = str(run / "checkpoint.aagk")
    capsys.readouterr()
    assert main(["eval", "--checkpoint", ck, "--data", str(data), "--setting", "earliest", "--print-config"]) == 0
    assert json.loads(capsys.readouterr().out)["split"]["observed_fraction"] == 0.2
    reports = []
    for name in ("e1", "e2"):
        assert main(["eval", "--checkpoint", ck, "--data", str(data), "--setting", "earliest",
                     "--out-dir", str(tmp_path / name)]) == 0
        reports.append((tmp_path / name / "eval.json").read_text())
    assert reports[0] == reports[1]
    assert json.loads(reports[0])["setting"] == "Earliest"


def test_eval_missing_checkpoint(tmp_path, data):
    assert main(["eval", "--checkpoint", str(tmp_path / "none.aagk"), "--data", str(data)]) == 1


def test_resume_matches_uninterrupted(tmp_path, data):
    c = cfgfile(tmp_path)
    main(["train", "--data", str(data), "--config", c, *FAST, "--epochs", "2", "--out-dir", str(tmp_path / "full")])
    main(["train", "--data", str(data), "--config", c, *FAST, "--epochs", "2", "--steps", "1",
          "--out-dir", str(tmp_path / "part")])
    main(["train", "--data", str(data), "--resume", str(tmp_path / "part" / "checkpoint.aagk"),
          "--out-dir", str(tmp_path / "rest")])
    assert (tmp_path / "full" / "checkpoint.aagk").read_bytes() == (tmp_path / "rest" / "checkpoint.aagk").read_bytes()


def test_ablate_rows(tmp_path, data, capsys):
    assert main(["ablate", "--data", str(data), "--config", cfgfile(tmp_path), *FAST, "--variants", "a,c,j,o",
                 "--seeds", "2", "--out-dir", str(tmp_path / "abl")]) == 0
    rows = json.loads((tmp_path / "abl" / "ablation.json").read_text())
    assert [r["variant"] for r in rows] == ["a", "c", "j", "o"]
    assert all(r["seeds"] == 2 for r in rows)
    assert (tmp_path / "abl" / "ablation.csv").read_text().count("\n") == 5


def test_ablate_unknown_variant_exits_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["ablate", "--variants", "a,p"])
    assert exc.value.code == 2


def test_export_embeddings(tmp_path, data):
    run = tmp_path / "run"
    main(["train", "--data", str(data), "--config", cfgfile(tmp_path), *FAST, "--out-dir", str(run)])
    assert main(["export-embeddings", "--after", str(run / "checkpoint.aagk"), "--data", str(data),
                 "--count", "5", "--out-dir", str(tmp_path / "emb")]) == 0
    lines = (tmp_path / "emb" / "embeddings.csv").read_text().splitlines()
    assert lines[0] == "id,label,x_before,y_before,x_after,y_after" and len(lines) == 6


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "aagan", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "gen-data" in r.stdout
