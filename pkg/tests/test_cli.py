import json
from dataclasses import replace

import pytest

from eyeread.cli import (
    EXIT_DATA,
    EXIT_DIVERGED,
    EXIT_OK,
    EXIT_USAGE,
    RunConfig,
    main,
    read_subjects_csv,
    run_pipeline,
    write_subjects_csv,
)
from eyeread.classifier import load_model
from eyeread.dataset import SplitSpec
from eyeread.nn import TrainConfig
from eyeread.sdae import SparseAEConfig
from eyeread.synthetic import CohortSpec, generate_cohort


def small_config(seed=0, lr=0.1):
    train = TrainConfig(learning_rate=lr, epochs=15)
    return RunConfig(
        seed=seed,
        generator=CohortSpec(n_control=8, n_ad=8, trials_per_subject_mean=25, trials_per_subject_sd=4),
        split=SplitSpec(2, 2),
        stages=[SparseAEConfig(16, train=train), SparseAEConfig(4, train=train)],
        head=TrainConfig(learning_rate=0.5, epochs=30),
    )


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(small_config().to_dict()))
    return path


@pytest.fixture
def run_dir(tmp_path, config_file):
    out = tmp_path / "run"
    assert main(["run", "--config", str(config_file), "--out", str(out)]) == EXIT_OK
    return out


def test_config_round_trip_and_hash():
    cfg = small_config(seed=5)
    back = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg and back.hash() == cfg.hash()
    assert replace(cfg, seed=6).hash() != cfg.hash()
    assert replace(cfg, threshold=0.4).hash() != cfg.hash()


def test_seed_pins_every_component():
    a, b = small_config(seed=1).resolved(), small_config(seed=2).resolved()
    assert a.generator.seed != b.generator.seed
    assert a.split.seed != b.split.seed
    assert [s.train.seed for s in a.stages] != [s.train.seed for s in b.stages]
    assert small_config(seed=1).resolved() == a


def test_unknown_config_key_rejected():
    with pytest.raises(ValueError):
        RunConfig.from_dict({"seeed": 1})


def test_usage_errors(tmp_path, capsys):
    assert main([]) == EXIT_USAGE
    assert main(["nonsense"]) == EXIT_USAGE
    assert main(["run"]) == EXIT_USAGE
    assert main(["run", "--out", str(tmp_path), "--hidden", "16,x"]) == EXIT_USAGE
    assert main(["run", "--out", str(tmp_path), "--threshold", "1.5"]) == EXIT_USAGE
    bad = tmp_path / "bad.json"
    bad.write_text('{"seeed": 3}')
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_USAGE


def test_missing_input_is_data_error(tmp_path):
    out = tmp_path / "r"
    code = main(["run", "--input", str(tmp_path / "absent.csv"), "--out", str(out)])
    assert code == EXIT_DATA
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "failed" and manifest["partial"] is True


def test_malformed_input_is_data_error(tmp_path):
    bad = tmp_path / "fix.csv"
    bad.write_text("this,is,not\na,fixation,file\n")
    assert main(["ingest", str(bad)]) == EXIT_DATA
    assert main(["features", str(bad), "--out", str(tmp_path / "f")]) == EXIT_DATA


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exit_code(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(small_config(lr=1e9).to_dict()))
    out = tmp_path / "r"
    assert main(["run", "--config", str(path), "--out", str(out)]) == EXIT_DIVERGED
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["stage"] == "train"
    assert "model.json" not in manifest["artifacts"]
    assert "features.csv" in manifest["artifacts"]


def test_run_writes_all_artifacts(run_dir):
    for name in ("fixations.csv", "subjects.csv", "features.csv", "split.txt", "model.json",
                 "predictions.csv", "smoothness.csv", "report.json", "report.txt",
                 "histogram.csv", "per_type.csv", "manifest.json"):
        assert (run_dir / name).exists(), name
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert set(manifest["artifacts"]) >= {"model.json", "predictions.csv", "report.json"}
    chash = manifest["config_hash"]
    assert json.loads((run_dir / "model.json").read_text())["run"]["config_hash"] == chash
    assert json.loads((run_dir / "report.json").read_text())["config_hash"] == chash
    assert chash in (run_dir / "report.txt").read_text()
    assert chash in (run_dir / "split.txt").read_text()


def test_two_runs_identical(tmp_path, config_file, run_dir):
    again = tmp_path / "again"
    assert main(["run", "--config", str(config_file), "--out", str(again)]) == EXIT_OK
    a = json.loads((run_dir / "manifest.json").read_text())
    b = json.loads((again / "manifest.json").read_text())
    assert a["artifacts"] == b["artifacts"]
    assert (run_dir / "model.json").read_bytes() == (again / "model.json").read_bytes()


def test_run_on_existing_input(tmp_path, config_file, run_dir):
    out = tmp_path / "reuse"
    code = main(["run", "--config", str(config_file), "--input", str(run_dir / "fixations.csv"),
                 "--subjects", str(run_dir / "subjects.csv"), "--out", str(out)])
    assert code == EXIT_OK
    assert (out / "features.csv").read_bytes() == (run_dir / "features.csv").read_bytes()


def test_subcommand_chain(tmp_path, config_file, run_dir):
    gen, feat, model_dir, ev, sm = (tmp_path / d for d in ("gen", "feat", "model", "eval", "smooth"))
    cfg = ["--config", str(config_file)]
    assert main(["generate", *cfg, "--out", str(gen)]) == EXIT_OK
    assert (gen / "fixations.csv").read_bytes() == (run_dir / "fixations.csv").read_bytes()
    assert main(["ingest", str(gen / "fixations.csv"), "--out", str(gen)]) == EXIT_OK
    assert json.loads((gen / "ingest.json").read_text())["subjects"] == 16
    assert main(["features", *cfg, str(gen / "fixations.csv"), "--out", str(feat)]) == EXIT_OK
    assert (feat / "features.csv").read_bytes() == (run_dir / "features.csv").read_bytes()
    assert main(["train", *cfg, str(feat / "features.csv"), "--out", str(model_dir)]) == EXIT_OK
    assert (model_dir / "model.json").read_bytes() == (run_dir / "model.json").read_bytes()
    preds = tmp_path / "preds.csv"
    assert main(["predict", str(model_dir / "model.json"), str(feat / "features.csv"),
                 "--split", str(model_dir / "split.txt"), "--out", str(preds)]) == EXIT_OK
    assert preds.read_bytes() == (run_dir / "predictions.csv").read_bytes()
    assert main(["evaluate", *cfg, str(preds), "--subjects", str(gen / "subjects.csv"),
                 "--out", str(ev)]) == EXIT_OK
    assert json.loads((ev / "report.json").read_text())["confusion"] == \
        json.loads((run_dir / "report.json").read_text())["confusion"]
    assert main(["smoothness", *cfg, str(model_dir / "model.json"), str(feat / "features.csv"),
                 "--split", str(model_dir / "split.txt"), "--out", str(sm)]) == EXIT_OK
    assert (sm / "smoothness.csv").read_bytes() == (run_dir / "smoothness.csv").read_bytes()


def test_overrides_reach_the_model(tmp_path, config_file):
    out = tmp_path / "o"
    code = main(["run", "--config", str(config_file), "--hidden", "8,3", "--sparsity", "0.2",
                 "--corruption", "0.1", "--threshold", "0.6", "--seed", "4", "--out", str(out)])
    assert code == EXIT_OK
    model = load_model(out / "model.json")
    assert model.stack.dims == [14, 8, 3]
    assert all(s.config.sparsity_target == 0.2 for s in model.stack.stages)
    assert all(s.config.corruption_fraction == 0.1 for s in model.stack.stages)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["threshold"] == 0.6 and manifest["seed"] == 4


def test_subjects_csv_round_trip(tmp_path):
    subjects = generate_cohort(CohortSpec(n_control=3, n_ad=3, seed=2)).subjects
    write_subjects_csv(subjects, tmp_path / "s.csv")
    assert read_subjects_csv(tmp_path / "s.csv") == list(subjects)
