from __future__ import annotations

import json

import numpy as np
import pytest
from click.testing import CliRunner

from condfair import datasets, imaging
from condfair.cli import main
from condfair.core import ClassPartition, EvalRecord, EvalSet, write_eval_manifest
from condfair.imaging import Image

from conftest import FIXTURES

DATA = datasets.Path(datasets.__file__).parent / "data"


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("CONDFAIR_CONFIG", raising=False)
    runner = CliRunner()

    def invoke(*args):
        return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)

    return invoke


class TestValidate:
    def test_ok(self, run):
        res = run("validate", FIXTURES / "eval_small.csv", "--classes", "A,B,C")
        assert res.exit_code == 0
        assert "30 records" in res.output

    def test_diversity_detected(self, run):
        res = run("validate", FIXTURES / "diversity_small.csv", "--classes", "A,B,C")
        assert res.exit_code == 0 and "3 conditions" in res.output

    def test_unknown_class_exit_2_with_line(self, run):
        res = run("validate", FIXTURES / "eval_unknown_class_line17.csv", "--classes", "A,B,C")
        assert res.exit_code == 2
        assert "line 17" in res.output

    def test_missing_file_exit_1(self, run):
        assert run("validate", "nope.csv").exit_code == 1


class TestFairness:
    def test_case1(self, run, tmp_path):
        assert run("simulate", "--confusion", DATA / "extreme_case1.csv", "--counts", 20000,
                   "--seed", 3, "--out", "c1.csv").exit_code == 0
        res = run("fairness", "c1.csv", "--out", "rep")
        assert res.exit_code == 0
        assert "Δ_PR-χ² = 0.12" in res.output
        assert "REJECTED" in res.output
        for ext in ("json", "csv", "md"):
            assert (tmp_path / "rep" / f"fairness.{ext}").is_file()
        data = json.loads((tmp_path / "rep" / "fairness.json").read_text())
        assert data["classes"] == ["White", "Black", "Asian"]

    def test_degenerate_all_correct_stated(self, run, tmp_path):
        p = tmp_path / "perfect.csv"
        p.write_text("sample_id,true_class,recon_class\na,A,A\nb,B,B\nc,A,A\n")
        res = run("fairness", p, "--format", "json")
        assert res.exit_code == 0
        assert "DegenerateAllCorrect" in res.output

    def test_correct_variant_and_alpha(self, run):
        run("simulate", "--confusion", DATA / "extreme_case2.csv", "--counts", 50, "--out", "c2.csv")
        res = run("fairness", "c2.csv", "--rdp-variant", "correct", "--alpha", "0.01", "--format", "markdown")
        assert res.exit_code == 0
        assert "Δ_RDP_correct-χ² = 2.000000" in res.output
        assert "alpha=0.01" in res.output

    def test_config_file(self, run, tmp_path, monkeypatch):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("rdp_variant = correct\nformats = json\n")
        monkeypatch.setenv("CONDFAIR_CONFIG", str(cfg))
        run("simulate", "--confusion", DATA / "biased_model.csv", "--counts", 30, "--out", "b.csv")
        res = run("fairness", "b.csv", "--out", "o")
        assert res.exit_code == 0 and "RDP_correct" in res.output
        assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["fairness.json"]

    def test_bad_config_exit_2(self, run, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("alpha = 7\n")
        assert run("--config", cfg, "validate", FIXTURES / "eval_small.csv").exit_code == 2


class TestDiversity:
    def test_run(self, run):
        res = run("diversity", FIXTURES / "diversity_small.csv", "--classes", "A,B,C", "--out", "d")
        assert res.exit_code == 0
        assert "Δ_UCPR-χ²" in res.output

    def test_declared_condition_missing(self, run):
        res = run("diversity", FIXTURES / "diversity_missing_condition.csv", "--classes", "A,B,C")
        assert res.exit_code == 2 and "EmptyCondition" in res.output


class TestSubsample:
    def _index(self, tmp_path, counts):
        lines = ["sample_id,class"]
        for label, c in counts.items():
            lines += [f"{label}{i},{label}" for i in range(c)]
        p = tmp_path / "idx.csv"
        p.write_text("\n".join(lines) + "\n")
        return p

    def test_synthetic(self, run, tmp_path):
        idx = self._index(tmp_path, {"A": 1000, "B": 50})
        (tmp_path / "t.csv").write_text("class,probability\nA,0.8\nB,0.2\n")
        res = run("subsample", "--index", idx, "--target", "t.csv", "--seed", 1, "--out", "ids.txt")
        assert res.exit_code == 0
        assert "n=250" in res.output
        assert len(datasets.read_subset(tmp_path / "ids.txt")) == 250
        assert (tmp_path / "ids.txt.summary.csv").read_text().splitlines()[1].startswith("A,1000,0.8,200,0.8")

    def test_infeasible_exit_3(self, run, tmp_path):
        idx = self._index(tmp_path, {"A": 10, "B": 0})
        (tmp_path / "t.csv").write_text("class,probability\nA,0.5\nB,0.5\n")
        res = run("subsample", "--index", idx, "--classes", "A,B", "--target", "t.csv", "--out", "ids.txt")
        assert res.exit_code == 3 and "InfeasibleTarget" in res.output

    def test_unfairface(self, run, tmp_path):
        idx = self._index(tmp_path, {r: 400 for r in datasets.FAIRFACE_RACES})
        res = run("subsample", "--index", idx, "--unfairface", "--out", "ids.txt")
        assert res.exit_code == 0
        assert "White,400" in res.output

    def test_needs_one_target(self, run, tmp_path):
        idx = self._index(tmp_path, {"A": 3, "B": 3})
        assert run("subsample", "--index", idx, "--out", "x").exit_code == 2


class TestConditions:
    def _tree(self, tmp_path, empty=False):
        root = tmp_path / "imgs"
        rng = np.random.default_rng(0)
        for label, level in (("a", 40), ("b", 200)):
            (root / label).mkdir(parents=True)
            if empty and label == "b":
                continue
            for i in range(3):
                px = np.clip(rng.normal(level, 5, size=(32, 32, 3)), 0, 255).round()
                imaging.save_png(Image(px), root / label / f"{i}.png")
        return root

    def test_build(self, run, tmp_path):
        root = self._tree(tmp_path)
        res = run("conditions", root, "out", "--perturb", "2,10,7")
        assert res.exit_code == 0
        names = sorted(p.name for p in (tmp_path / "out").iterdir())
        assert names == ["a.png", "a_p000.png", "a_p001.png", "b.png", "b_p000.png", "b_p001.png"]
        a = imaging.load_png(tmp_path / "out" / "a.png")
        assert a.shape == (4, 4, 3)
        assert abs(a.pixels.mean() - 40) < 2

    def test_empty_class_exit_2(self, run, tmp_path):
        root = self._tree(tmp_path, empty=True)
        res = run("conditions", root, "out")
        assert res.exit_code == 2 and "EmptyGroup" in res.output


class TestMetrics:
    def test_images_and_embeddings(self, run, tmp_path):
        part = ClassPartition(("A", "B"))
        rng = np.random.default_rng(1)
        (tmp_path / "t").mkdir()
        (tmp_path / "r").mkdir()
        recs = []
        for i in range(6):
            px = rng.integers(0, 256, size=(16, 16, 3)).astype(float)
            imaging.save_png(Image(px), tmp_path / "t" / f"s{i}.png")
            imaging.save_png(Image(np.clip(px + 20, 0, 255)), tmp_path / "r" / f"s{i}.png")
            recs.append(EvalRecord(f"s{i}", i % 2, 0, (1.0, float(i)), (1.0, float(i) + 0.5)))
        es = EvalSet(part, tuple(recs), "m")
        write_eval_manifest(es, tmp_path / "m.csv", tmp_path / "m.jsonl")
        res = run("metrics", "m.csv", "--embeddings", "m.jsonl", "--true-images", "t", "--recon-images", "r",
                  "--workers", 2, "--write-manifest", "aug.csv", "--out", "rep")
        assert res.exit_code == 0, res.output
        for name in ("loss_01:", "cos:", "dssim:", "blur:"):
            assert name in res.output
        header = (tmp_path / "aug.csv").read_text().splitlines()[0]
        assert "scalar:dssim" in header and "scalar:blur" in header and "scalar:cos_sim" in header

    def test_missing_image_exit_1(self, run, tmp_path):
        (tmp_path / "r").mkdir()
        (tmp_path / "m.csv").write_text("sample_id,true_class,recon_class\nx,A,B\ny,B,B\n")
        assert run("metrics", "m.csv", "--recon-images", "r").exit_code == 1


class TestReport:
    def test_full(self, run, tmp_path):
        for name, seed in (("biased_model", 1), ("balanced_model", 2)):
            run("simulate", "--confusion", DATA / f"{name}.csv", "--counts", 200, "--seed", seed, "--out", f"{name}.csv")
        div = tmp_path / "div.csv"
        div.write_text("condition_id,replicate,recon_class\n" + "".join(
            f"{c},{r},{'White' if r % 4 else 'Black'}\n" for c in ("w", "b", "a") for r in range(40)))
        res = run("report", "--run", "M:UFF:biased_model.csv", "--run", "M:FF:balanced_model.csv",
                  "--diversity", "M:UFF:div.csv", "--out", "r", "--stem", "bench")
        assert res.exit_code == 0, res.output
        md = (tmp_path / "r" / "bench.md").read_text()
        assert "## Diversity" in md and "Δ_UCPR-χ² (UFF)" in md
        data = json.loads((tmp_path / "r" / "bench.json").read_text())
        assert data["diversity"][0]["test"]["reject"] is True

    def test_label_mismatch_exit_2(self, run, tmp_path):
        run("simulate", "--confusion", DATA / "biased_model.csv", "--counts", 20, "--out", "b.csv")
        res = run("report", "--run", "M:UFF:b.csv", "--diversity", f"M:UFF:{FIXTURES / 'diversity_small.csv'}",
                  "--classes", "White,Black,Asian")
        assert res.exit_code == 2 and "UnknownClass" in res.output

    def test_bad_run_spec(self, run):
        assert run("report", "--run", "nocolons").exit_code == 2

    def test_nothing_to_report(self, run):
        assert run("report").exit_code == 2
