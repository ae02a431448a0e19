import json

import pytest
import yaml

from src.cli.app import LOSS_LOG, IsibApp, build_parser, row_dirname, run
from src.eval.report import RowKey
from src.storage.checkpoint import BLOB, MANIFEST, load_checkpoint


def _write_config(tiny_config, root):
    """Config file pointing every output below root"""
    config = tiny_config.model_copy(
        update={
            "output": tiny_config.output.model_copy(
                update={
                    "data_dir": str(root / "data"),
                    "run_dir": str(root / "runs"),
                    "report_dir": str(root / "reports"),
                }
            )
        }
    )
    path = root / "config.yaml"
    path.write_text(yaml.safe_dump(config.model_dump(mode="json")), encoding="utf-8")
    return ["--config", str(path)]


@pytest.fixture
def workspace(tiny_config, tmp_path, monkeypatch):
    monkeypatch.setenv("ISIB_THREADS", "1")
    return tmp_path, _write_config(tiny_config, tmp_path)


@pytest.fixture
def generated(workspace):
    root, base = workspace
    assert run(base + ["gen-data"]) == 0
    return root, base


def test_gen_data_layout(generated):
    root, _ = generated
    assert (root / "data" / "languages.json").exists()
    index = json.loads((root / "data" / "l2_test" / "index.json").read_text())
    assert len(index["utterances"]) == 6


def test_train_eval_tokenize(generated):
    root, base = generated
    assert run(base + ["init-centroids", "--init", "l2", "--out", str(root / "init")]) == 0
    assert load_checkpoint(str(root / "init")).stage == "init"

    code = run(base + ["train", "--checkpoint", str(root / "init"), "--alpha", "0.5", "--out", str(root / "model")])
    assert code == 0
    trained = load_checkpoint(str(root / "model"))
    assert trained.stage == "stage2"
    assert trained.metadata["alpha"] == 0.5
    assert len((root / "model" / LOSS_LOG).read_text().splitlines()) == 1 + 4

    assert run(base + ["eval", "--checkpoint", str(root / "model"), "--corpus", "accented"]) == 0

    out = root / "tokens.txt"
    assert run(base + ["tokenize", "--checkpoint", str(root / "model"), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 6
    assert all(0 <= int(t) < 6 for line in lines for t in line.split())


def test_staged_training_matches_single_run(generated):
    root, base = generated
    assert run(base + ["train", "--stage", "1", "--out", str(root / "s1")]) == 0
    assert run(base + ["train", "--stage", "2", "--checkpoint", str(root / "s1"), "--out", str(root / "s2")]) == 0
    assert run(base + ["train", "--stage", "all", "--out", str(root / "both")]) == 0
    assert (root / "s2" / BLOB).read_bytes() == (root / "both" / BLOB).read_bytes()
    assert load_checkpoint(str(root / "s2")).metadata == load_checkpoint(str(root / "both")).metadata


def test_usage_errors(generated):
    root, base = generated
    assert run(base + ["train", "--stage", "2", "--out", str(root / "x")]) == 2
    assert run(base + ["train", "--alpha", "1.5", "--out", str(root / "x")]) == 2
    assert run(base + ["eval", "--checkpoint", str(root / "missing")]) == 2


def test_missing_dataset(workspace):
    root, base = workspace
    assert run(base + ["init-centroids", "--out", str(root / "init")]) == 2


def test_missing_config(tmp_path):
    assert run(["--config", str(tmp_path / "nope.yaml"), "gen-data"]) == 2


def test_parser_defaults():
    args = build_parser().parse_args(["eval", "--checkpoint", "c"])
    assert args.corpus == "l2_test"
    assert args.lang == "l2"
    with pytest.raises(SystemExit):
        build_parser().parse_args(["train"])


def test_row_dirname():
    assert row_dirname(RowKey("l1", True, 0.5)) == "init-l1_diffkm_alpha0.5"
    assert row_dirname(RowKey("l2", False)) == "init-l2_baseline"


@pytest.mark.slow
def test_experiment_writes_reports(workspace):
    root, base = workspace
    assert run(base + ["experiment", "--scenario", "native"]) == 0
    assert (root / "reports" / "native-only.csv").exists()
    assert (root / "reports" / "native-only.json").exists()
    assert (root / "runs" / "experiment" / "init-l1_baseline" / "seed1" / BLOB).exists()


def test_bad_thread_setting_is_a_usage_error(workspace, monkeypatch):
    _, base = workspace
    monkeypatch.setenv("ISIB_THREADS", "abc")
    assert run(base + ["gen-data"]) == 2


def test_unexpected_value_error_propagates(workspace, monkeypatch):
    _, base = workspace

    def broken(self, args):
        raise ValueError("boom")

    monkeypatch.setattr(IsibApp, "gen_data", broken)
    with pytest.raises(ValueError, match="boom"):
        run(base + ["gen-data"])


@pytest.mark.slow
def test_experiment_is_byte_identical_across_runs(tiny_config, tmp_path, monkeypatch):
    monkeypatch.setenv("ISIB_THREADS", "1")
    roots = [tmp_path / "a", tmp_path / "b"]
    for root in roots:
        root.mkdir()
        assert run(_write_config(tiny_config, root) + ["experiment", "--scenario", "both"]) == 0

    def outputs(root):
        files = sorted((root / "reports").glob("*.*"))
        files += sorted((root / "runs" / "experiment").rglob(MANIFEST))
        files += sorted((root / "runs" / "experiment").rglob(BLOB))
        return {str(f.relative_to(root)): f.read_bytes() for f in files}

    first, second = outputs(roots[0]), outputs(roots[1])
    assert any(name.endswith(BLOB) for name in first)
    assert first == second
