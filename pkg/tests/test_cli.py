import json
import subprocess
import sys

import pytest

from trimodal.cli import run_cli

SMALL = {
    "seed": 7,
    "dataset": {"n_subjects": 60, "geometry": [8, 8, 6, 3, 4, 3]},
    "train": {"default": {"epochs": 2, "batch_size": 16}},
}


def cli(*args):
    return subprocess.run([sys.executable, "-m", "trimodal", *args], capture_output=True, text=True)


def test_help_exits_zero():
    res = cli("--help")
    assert res.returncode == 0
    for name in ("generate", "train", "eval", "fuse", "report", "pipeline"):
        assert name in res.stdout


def test_unknown_subcommand():
    res = cli("trian")
    assert res.returncode == 2
    assert res.stderr.strip().splitlines()[-1] == "error: unknown subcommand 'trian'"


def test_missing_subcommand(capsys):
    assert run_cli([]) == 2


def test_bad_flag_value(capsys):
    assert run_cli(["train", "--modality", "audio"]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_data_is_runtime_error(tmp_path):
    res = cli("eval", "--modality", "cognitive", "--workdir", str(tmp_path / "nowhere"))
    assert res.returncode == 1
    errors = [line for line in res.stderr.splitlines() if line.startswith("error:")]
    assert len(errors) == 1
    assert not (tmp_path / "nowhere").exists()


def test_bad_config(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert run_cli(["generate", "--config", str(p), "--workdir", str(tmp_path)]) == 2
    p.write_text(json.dumps({"fusion": {"strategy": ["median"]}}))
    assert run_cli(["generate", "--config", str(p), "--workdir", str(tmp_path)]) == 2


def test_report_without_fusion(tmp_path, capsys):
    assert run_cli(["report", "--workdir", str(tmp_path)]) == 1


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "small.json").write_text(json.dumps(SMALL))
    code = run_cli(["pipeline", "--config", str(root / "small.json"), "--workdir", str(root / "run"), "-q"])
    return code, root


def test_pipeline_smoke(small_run):
    code, root = small_run
    assert code == 0
    run = root / "run"
    for m in ("image", "cognitive", "biomarker"):
        assert (run / "checkpoints" / f"{m}.tmf").exists()
        assert (run / "checkpoints" / f"{m}_history.csv").exists()
    for s in ("weighted", "majority", "bayes", "stacked"):
        assert (run / f"fusion_{s}.csv").exists()
    report = json.loads((run / "report.json").read_text())
    assert len(report["rows"]) == 7
    for row in report["rows"]:
        for col in ("Accuracy", "Precision", "Recall", "F1", "AUC-ROC"):
            assert 0.0 <= row[col] <= 1.0


def test_stages_reuse_workdir(small_run, capsys):
    _, root = small_run
    args = ["--config", str(root / "small.json"), "--workdir", str(root / "run")]
    assert run_cli(["eval", "--modality", "biomarker", "--split", "val", *args]) == 0
    assert "Biomarkers (LSTM)" in capsys.readouterr().out
    assert run_cli(["fuse", "--strategy", "bayes", "--drop-modality", "image", "-q", *args]) == 0
    rows = (root / "run" / "fusion_bayes.csv").read_text().splitlines()[1:]
    assert rows and all(",MISSING," in r for r in rows)
