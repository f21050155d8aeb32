"""Command-line pipelines: generate, split, train, encode, evaluate."""

import json

import numpy as np
import pytest

from streamhash.cli import main
from streamhash.data import read_imat, write_fmat, write_lmat


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A small dataset, plan, trained state, and report built via the CLI."""
    root = tmp_path_factory.mktemp("cli")
    dataset = root / "dataset"
    plan = root / "plan.json"
    state = root / "state"
    report = root / "report.jsonl"
    assert main([
        "generate", "--out", str(dataset), "--n", "300", "--categories", "6",
        "--modalities", "2", "--dims", "12,9", "--noise", "0.1", "--seed", "13",
    ]) == 0
    assert main([
        "split", "--dataset", str(dataset), "--out", str(plan),
        "--scenario", "iid", "--chunks", "80,80,80", "--test-size", "40", "--seed", "3",
    ]) == 0
    assert main([
        "train", "--dataset", str(dataset), "--plan", str(plan),
        "--state", str(state), "--report", str(report),
        "--bits", "16", "--anchors", "24", "--supervision", "pseudo:5:48", "--seed", "9",
    ]) == 0
    return {"root": root, "dataset": dataset, "plan": plan, "state": state, "report": report}


def _records(report_path):
    return [json.loads(line) for line in report_path.read_text().splitlines()]


class TestTrainReport:
    def test_one_record_per_round(self, workspace):
        records = _records(workspace["report"])
        rounds = [r for r in records if r["type"] == "round"]
        assert [r["round"] for r in rounds] == [1, 2, 3]

    def test_map_in_unit_interval(self, workspace):
        for rec in _records(workspace["report"]):
            if rec["type"] == "round":
                assert 0.0 <= rec["map"] <= 1.0
                assert rec["r"] == 16
                assert rec["n_database"] == 80 * rec["round"]

    def test_run_record_embeds_fingerprints(self, workspace):
        run = _records(workspace["report"])[0]
        assert run["type"] == "run"
        for key in ("dataset", "plan", "config", "seed"):
            assert key in run["fingerprints"]
        assert len(run["fingerprints"]["dataset"]) == 64

    def test_report_reproducible_modulo_timing(self, workspace):
        report2 = workspace["root"] / "report2.jsonl"
        state2 = workspace["root"] / "state2"
        assert main([
            "train", "--dataset", str(workspace["dataset"]), "--plan", str(workspace["plan"]),
            "--state", str(state2), "--report", str(report2),
            "--bits", "16", "--anchors", "24", "--supervision", "pseudo:5:48", "--seed", "9",
        ]) == 0
        for a, b in zip(_records(workspace["report"]), _records(report2)):
            a.pop("wall_ms", None), b.pop("wall_ms", None)
            a.pop("eval_ms", None), b.pop("eval_ms", None)
            if a.get("type") == "run":
                a["artifacts"], b["artifacts"] = None, None
            assert a == b


class TestEncode:
    def test_encode_reproducible(self, workspace, tmp_path):
        rng = np.random.default_rng(0)
        q1, q2 = tmp_path / "q1.fmat", tmp_path / "q2.fmat"
        write_fmat(q1, rng.standard_normal((12, 7)))
        write_fmat(q2, rng.standard_normal((9, 7)))
        out_a, out_b = tmp_path / "a.imat", tmp_path / "b.imat"
        for out in (out_a, out_b):
            assert main([
                "encode", "--state", str(workspace["state"]),
                "--queries", f"{q1},{q2}", "--out", str(out),
            ]) == 0
        assert out_a.read_bytes() == out_b.read_bytes()
        assert read_imat(out_a).shape == (16, 7)

    def test_no_fine_grained_flag(self, workspace, tmp_path):
        rng = np.random.default_rng(1)
        q1, q2 = tmp_path / "q1.fmat", tmp_path / "q2.fmat"
        write_fmat(q1, rng.standard_normal((12, 4)))
        write_fmat(q2, rng.standard_normal((9, 4)))
        out = tmp_path / "codes.imat"
        assert main([
            "encode", "--state", str(workspace["state"]),
            "--queries", f"{q1},{q2}", "--out", str(out), "--no-fine-grained",
        ]) == 0
        assert read_imat(out).shape == (16, 4)


class TestEvaluate:
    def test_metrics_schema(self, workspace, tmp_path, capsys):
        state_dir = workspace["state"]
        rng = np.random.default_rng(2)
        codes = tmp_path / "q.imat"
        qlab = tmp_path / "q.lmat"
        from streamhash.data import write_imat

        ql = np.zeros((6, 5), dtype=np.uint8)
        ql[rng.integers(0, 6, size=5), np.arange(5)] = 1
        write_imat(codes, rng.choice([-1, 1], size=(16, 5)).astype(np.int8))
        write_lmat(qlab, ql)
        assert main([
            "evaluate", "--codes", str(codes),
            "--database-codes", str(state_dir / "database_codes.imat"),
            "--query-labels", str(qlab),
            "--database-labels", str(state_dir / "database_labels.lmat"),
            "--p-at-k", "5,10", "--round", "3",
        ]) == 0
        metrics = json.loads(capsys.readouterr().out.strip())
        assert set(metrics) == {"round", "r", "map", "p_at_k", "n_queries", "n_database", "wall_ms"}
        assert metrics["n_queries"] == 5 and metrics["n_database"] == 240
        assert 0.0 <= metrics["map"] <= 1.0
        assert set(metrics["p_at_k"]) == {"5", "10"}


class TestFullPipeline:
    def test_default_config_under_sixty_seconds(self, tmp_path):
        import time

        started = time.perf_counter()
        dataset = tmp_path / "dataset"
        plan = tmp_path / "plan.json"
        assert main(["generate", "--out", str(dataset), "--seed", "101"]) == 0
        assert main([
            "split", "--dataset", str(dataset), "--out", str(plan),
            "--scenario", "iid", "--chunks", "360,360,360,360,360",
            "--test-size", "200", "--seed", "7",
        ]) == 0
        report = tmp_path / "report.jsonl"
        assert main([
            "train", "--dataset", str(dataset), "--plan", str(plan),
            "--state", str(tmp_path / "state"), "--report", str(report),
            "--anchors", "128", "--seed", "9",
        ]) == 0
        elapsed = time.perf_counter() - started
        rounds = [json.loads(l) for l in report.read_text().splitlines() if '"round"' in l]
        assert len(rounds) == 5
        assert all(0.0 <= r["map"] <= 1.0 for r in rounds if r["type"] == "round")
        assert elapsed < 60.0


class TestErrors:
    def test_missing_dataset_is_json_error(self, tmp_path, capsys):
        code = main([
            "split", "--dataset", str(tmp_path / "nope"), "--out", str(tmp_path / "p.json"),
            "--scenario", "iid", "--chunks", "5", "--test-size", "1",
        ])
        assert code == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert err["type"] == "error" and err["error"]

    def test_bad_bits_is_json_error(self, workspace, tmp_path, capsys):
        code = main([
            "train", "--dataset", str(workspace["dataset"]), "--plan", str(workspace["plan"]),
            "--state", str(tmp_path / "s"), "--bits", "4",
        ])
        assert code == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert "8..1024" in err["message"]
