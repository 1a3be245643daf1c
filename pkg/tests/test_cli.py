"""End-to-end checks of the command-line interface.

Every test drives ``main(argv)`` in process and asserts on exit codes,
stdout/stderr text, and the files left behind. Exit codes: 0 success,
1 validation (bad flags, malformed files), 2 runtime failure.
"""

import json

import numpy as np
import pytest

from robustseq.cli import main
from robustseq.data_io import load_checkpoint, load_cohort
from robustseq.errors import TrainingDivergedError
from robustseq.model import predict_next
from robustseq.training import GradCheckReport


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A generated cohort plus a trained checkpoint, shared read-only."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "cohort.jsonl"
    model = root / "model.json"
    assert main(["gen", "--patients", "12", "--vars", "5", "--codes", "4",
                 "--min-visits", "3", "--max-visits", "6", "--seed", "3",
                 "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--out", str(model),
                 "--epochs", "2", "--hidden", "6", "--seed", "1"]) == 0
    return root, data, model


class TestGen:
    def test_writes_requested_cohort(self, tmp_path, capsys):
        out = tmp_path / "c.jsonl"
        rc = main(["gen", "--patients", "7", "--vars", "4", "--codes", "3",
                   "--seed", "5", "--out", str(out)])
        assert rc == 0
        assert "wrote 7 patients" in capsys.readouterr().out
        cohort = load_cohort(out)
        assert len(cohort) == 7
        assert cohort[0].num_variables == 4
        assert cohort[0].num_codes == 3

    def test_same_flags_same_bytes(self, tmp_path):
        argv = ["gen", "--patients", "6", "--seed", "9"]
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_output(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert main(["gen", "--patients", "6", "--seed", "1", "--out", str(a)]) == 0
        assert main(["gen", "--patients", "6", "--seed", "2", "--out", str(b)]) == 0
        assert a.read_bytes() != b.read_bytes()

    def test_invalid_count_is_validation_error(self, tmp_path, capsys):
        rc = main(["gen", "--patients", "0", "--out", str(tmp_path / "c.jsonl")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_required_flag(self, tmp_path, capsys):
        assert main(["gen", "--patients", "5"]) == 1
        assert "--out" in capsys.readouterr().err

    def test_unwritable_path(self, tmp_path, capsys):
        rc = main(["gen", "--patients", "5",
                   "--out", str(tmp_path / "no" / "dir" / "c.jsonl")])
        assert rc == 1
        assert "cannot write" in capsys.readouterr().err


class TestTrain:
    def test_checkpoint_and_loss_file(self, workspace):
        _, data, model = workspace
        state = load_checkpoint(model)
        assert state.config.hidden_size == 6
        loss_lines = (model.parent / (model.name + ".loss.txt")).read_text().splitlines()
        assert len(loss_lines) == 2
        for epoch, line in enumerate(loss_lines, start=1):
            tag, value = line.split("\t")
            assert int(tag) == epoch
            assert np.isfinite(float(value))

    def test_reports_losses(self, tmp_path, workspace, capsys):
        _, data, _ = workspace
        rc = main(["train", "--data", str(data), "--out", str(tmp_path / "m.json"),
                   "--epochs", "2", "--hidden", "5", "--seed", "2"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "epoch 1 mean loss" in out
        assert "final mean loss" in out

    def test_mean_imputation_flag(self, tmp_path, workspace):
        _, data, _ = workspace
        out = tmp_path / "m.json"
        assert main(["train", "--data", str(data), "--out", str(out),
                     "--epochs", "1", "--hidden", "5",
                     "--imputation", "mean"]) == 0
        assert load_checkpoint(out).config.imputation == "mean"

    def test_gaussian_noise_flag(self, tmp_path, workspace):
        _, data, _ = workspace
        out = tmp_path / "m.json"
        assert main(["train", "--data", str(data), "--out", str(out),
                     "--epochs", "1", "--hidden", "5",
                     "--noise", "gaussian", "--sigma", "0.92"]) == 0
        spec = load_checkpoint(out).config.noise
        assert spec.kind == "gaussian"
        assert spec.sigma == 0.92

    def test_missing_data_file(self, tmp_path, capsys):
        rc = main(["train", "--data", str(tmp_path / "nope.jsonl"),
                   "--out", str(tmp_path / "m.json")])
        assert rc == 1
        assert "cannot read" in capsys.readouterr().err

    def test_corrupt_data_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("this is not json\n")
        rc = main(["train", "--data", str(bad), "--out", str(tmp_path / "m.json")])
        assert rc == 1
        assert "line 1" in capsys.readouterr().err

    def test_bad_learning_rate(self, workspace, tmp_path):
        _, data, _ = workspace
        assert main(["train", "--data", str(data), "--out", str(tmp_path / "m.json"),
                     "--lr", "0.0"]) == 1

    def test_divergence_exits_two(self, workspace, tmp_path, monkeypatch, capsys):
        _, data, _ = workspace

        def blow_up(*args, **kwargs):
            raise TrainingDivergedError("loss became non-finite at epoch 1")

        monkeypatch.setattr("robustseq.cli.train", blow_up)
        rc = main(["train", "--data", str(data), "--out", str(tmp_path / "m.json")])
        assert rc == 2
        assert "runtime failure" in capsys.readouterr().err


class TestEval:
    def test_report_to_stdout(self, workspace, capsys):
        _, data, model = workspace
        rc = main(["eval", "--model", str(model), "--data", str(data)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "micro_auc" in out
        assert "recall@10" in out

    def test_json_report(self, workspace, tmp_path):
        _, data, model = workspace
        out = tmp_path / "report.json"
        rc = main(["eval", "--model", str(model), "--data", str(data),
                   "--topk", "2", "3", "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert 0.0 <= doc["micro_auc"] <= 1.0
        assert set(doc["recalls"]) == {"2", "3"}

    def test_split_scores_held_out_side(self, workspace, tmp_path):
        _, data, model = workspace
        full = tmp_path / "full.json"
        held = tmp_path / "held.json"
        assert main(["eval", "--model", str(model), "--data", str(data),
                     "--out", str(full)]) == 0
        assert main(["eval", "--model", str(model), "--data", str(data),
                     "--split", "0.5", "--out", str(held)]) == 0
        n_full = json.loads(full.read_text())["counts"]["instances"]
        n_held = json.loads(held.read_text())["counts"]["instances"]
        assert 0 < n_held < n_full

    def test_runs_repeat_identically(self, workspace, capsys):
        _, data, model = workspace
        assert main(["eval", "--model", str(model), "--data", str(data)]) == 0
        first = capsys.readouterr().out
        assert main(["eval", "--model", str(model), "--data", str(data)]) == 0
        assert capsys.readouterr().out == first

    def test_ties_flag_accepted(self, workspace):
        _, data, model = workspace
        assert main(["eval", "--model", str(model), "--data", str(data),
                     "--ties", "half"]) == 0

    def test_thread_env_var(self, workspace, monkeypatch):
        _, data, model = workspace
        monkeypatch.setenv("ROBUSTSEQ_THREADS", "2")
        assert main(["eval", "--model", str(model), "--data", str(data)]) == 0

    def test_bad_thread_env_var(self, workspace, monkeypatch, capsys):
        _, data, model = workspace
        monkeypatch.setenv("ROBUSTSEQ_THREADS", "abc")
        assert main(["eval", "--model", str(model), "--data", str(data)]) == 1
        assert "ROBUSTSEQ_THREADS" in capsys.readouterr().err

    def test_corrupt_checkpoint(self, workspace, tmp_path, capsys):
        _, data, _ = workspace
        bad = tmp_path / "bad.json"
        bad.write_text("{\"oops\": 1}")
        assert main(["eval", "--model", str(bad), "--data", str(data)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_checkpoint(self, workspace, tmp_path):
        _, data, _ = workspace
        assert main(["eval", "--model", str(tmp_path / "nope.json"),
                     "--data", str(data)]) == 1


class TestPredict:
    def test_defaults_to_first_patient(self, workspace, capsys):
        _, data, model = workspace
        rc = main(["predict", "--model", str(model), "--data", str(data),
                   "--topk", "3"])
        out = capsys.readouterr().out
        assert rc == 0
        first_id = load_cohort(data)[0].patient_id
        assert f"patient\t{first_id}" in out
        ranks = [line for line in out.splitlines() if line[:1].isdigit()]
        assert len(ranks) == 3

    def test_selects_named_patient(self, workspace, capsys):
        _, data, model = workspace
        target = load_cohort(data)[4].patient_id
        rc = main(["predict", "--model", str(model), "--data", str(data),
                   "--patient", target])
        assert rc == 0
        assert f"patient\t{target}" in capsys.readouterr().out

    def test_ranking_matches_model(self, workspace, tmp_path):
        _, data, model = workspace
        out = tmp_path / "rank.json"
        assert main(["predict", "--model", str(model), "--data", str(data),
                     "--topk", "4", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        probs = predict_next(load_checkpoint(model), load_cohort(data)[0])
        expected = np.argsort(-probs, kind="stable")[:4]
        assert [row["code"] for row in doc["ranking"]] == [int(c) for c in expected]
        got = [row["probability"] for row in doc["ranking"]]
        assert got == sorted(got, reverse=True)

    def test_topk_clamped_to_code_count(self, workspace, capsys):
        _, data, model = workspace
        assert main(["predict", "--model", str(model), "--data", str(data),
                     "--topk", "99"]) == 0
        out = capsys.readouterr().out
        ranks = [line for line in out.splitlines() if line[:1].isdigit()]
        assert len(ranks) == load_cohort(data)[0].num_codes

    def test_unknown_patient(self, workspace, capsys):
        _, data, model = workspace
        assert main(["predict", "--model", str(model), "--data", str(data),
                     "--patient", "ghost"]) == 1
        assert "ghost" in capsys.readouterr().err


class TestGradcheck:
    def test_passes_and_reports(self, capsys):
        rc = main(["gradcheck", "--seed", "2"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "max relative error" in out
        assert "PASS" in out

    def test_failure_exits_two(self, monkeypatch, capsys):
        report = GradCheckReport(max_rel_error=1.0, per_tensor={"head.W_code": 1.0},
                                 loss=0.5, num_parameters=4)
        monkeypatch.setattr("robustseq.cli.run_gradcheck", lambda seed: report)
        assert main(["gradcheck"]) == 2
        assert "FAIL" in capsys.readouterr().out


class TestParsing:
    def test_no_subcommand(self, capsys):
        assert main([]) == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_unknown_flag(self, tmp_path, capsys):
        assert main(["gen", "--patients", "5", "--out", str(tmp_path / "c.jsonl"),
                     "--bogus", "1"]) == 1
        assert "bogus" in capsys.readouterr().err
