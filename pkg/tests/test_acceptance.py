"""Acceptance criteria, one test group per criterion.

Every test here is named ``test_criterion_<N>_...``; the conftest hook prints
one PASS/FAIL line per criterion at the end of the run.
"""
from __future__ import annotations

import itertools
import math
import os
import subprocess
import sys
from collections import Counter
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy import stats as sps

from condfair import datasets, fairness, imaging, stats
from condfair.core import ClassPartition, DiscreteDistribution, uniform_distribution
from condfair.fairness import Kind
from condfair.imaging import Image
from condfair.reporting import CROSS

DATA = Path(datasets.__file__).parent / "data"
FAIRFACE_ENV = "CONDFAIR_FAIRFACE_LABELS"


def _chi2_envelope(scale: float, dof: int) -> float:
    """Upper 3-sigma bound of scale * chi2_dof: mean + 3 sd."""
    return scale * (dof + 3 * math.sqrt(2 * dof))


# -- 1: discrepancies vanish exactly at uniformity --------------------------------

def test_criterion_1_uniform_and_nonuniform_distributions():
    rng = np.random.default_rng(1)
    checked_nonuniform = 0
    for i in range(1000):
        k = int(rng.integers(2, 11))
        u = uniform_distribution(k)
        assert fairness.chi2_divergence_to_uniform(u) <= 1e-12
        assert fairness.chebyshev_to_uniform(u) <= 1e-12
        # alternate broad Dirichlet draws with tiny perturbations of uniform
        if i % 2:
            w = rng.dirichlet(np.ones(k))
        else:
            w = np.full(k, 1.0 / k) + rng.normal(0, 1e-5, size=k)
            w = np.abs(w) / np.abs(w).sum()
        d = DiscreteDistribution(tuple(w / w.sum()))
        if np.max(np.abs(d.array - 1.0 / k)) > 1e-6:
            checked_nonuniform += 1
            assert fairness.chi2_divergence_to_uniform(d) > 0
            assert fairness.chebyshev_to_uniform(d) > 0
    assert checked_nonuniform >= 900


# -- 2: closed-form fixtures ------------------------------------------------------------

def test_criterion_2_closed_form_three_class():
    d = DiscreteDistribution((0.5, 0.25, 0.25))
    assert abs(fairness.chi2_divergence_to_uniform(d) - 0.125) <= 1e-12
    assert abs(fairness.chebyshev_to_uniform(d) - 1 / 6) <= 1e-12


def test_criterion_2_closed_form_point_mass_k7():
    d = DiscreteDistribution((1.0,) + (0.0,) * 6)
    assert abs(fairness.chi2_divergence_to_uniform(d) - 6.0) <= 1e-12
    assert abs(fairness.chebyshev_to_uniform(d) - 6 / 7) <= 1e-12


# -- 3: Pearson statistic = n * chi2 divergence ------------------------------------------

def test_criterion_3_statistic_identity():
    rng = np.random.default_rng(3)
    for _ in range(200):
        k = int(rng.integers(2, 11))
        counts = rng.integers(0, 1000, size=k)
        if counts.sum() == 0:
            counts[0] = 1
        n = int(counts.sum())
        d = DiscreteDistribution.from_weights(counts)
        t = stats.chi2_gof_uniform(counts).statistic
        assert abs(t - n * fairness.chi2_divergence_to_uniform(d)) <= 1e-9 * max(1.0, t)


# -- 4: Extreme-case scenarios end-to-end via the simulator -------------------------------------

N_PER_CLASS = 100_000


def _simulate(name, seed):
    part, conf = datasets.load_confusion(DATA / f"{name}.csv")
    return datasets.simulate_eval_set(conf, [N_PER_CLASS] * part.k, seed=seed, partition=part)


def test_criterion_4_case1_rdp_near_zero():
    es = _simulate("extreme_case1", seed=41)
    k, m = 3, 0.5  # every class misreconstructed with probability 1/2
    sc = fairness.score(Kind.RDP, es)
    # delta method: Delta_RDP-chi2 ~ (1 - m) / (m n k) * chi2_{k-1}
    assert sc.chi2_divergence <= _chi2_envelope((1 - m) / (m * N_PER_CLASS * k), k - 1)
    sd_p = math.sqrt(m * (1 - m) / N_PER_CLASS * (1 - 1 / k)) / (k * m)
    assert sc.chebyshev <= 3 * sd_p


def test_criterion_4_case1_pr_within_binomial_band_and_rejected():
    es = _simulate("extreme_case1", seed=42)
    target = np.array([0.5, 0.25, 0.25])
    n = 3 * N_PER_CLASS
    pr = fairness.pr_distribution(es).array
    sigma = np.sqrt(target * (1 - target) / n)
    assert np.all(np.abs(pr - target) <= 3 * sigma)
    assert fairness.uniformity_test(Kind.PR, es).reject


def test_criterion_4_case2_pr_near_zero_not_rejected():
    es = _simulate("extreme_case2", seed=43)
    n, k = 3 * N_PER_CLASS, 3
    sc = fairness.score(Kind.PR, es)
    # under uniform PR, n * Delta_PR-chi2 ~ chi2_{k-1}
    assert sc.chi2_divergence <= _chi2_envelope(1 / n, k - 1)
    assert not fairness.uniformity_test(Kind.PR, es).reject


def test_criterion_4_case2_rdp_correct_near_two():
    es = _simulate("extreme_case2", seed=44)
    sc = fairness.score(Kind.RDP_CORRECT, es)
    # the case-2 rates are 1, 0, 0 with certainty, so the sampling sd is 0
    assert abs(sc.chi2_divergence - 2.0) <= 1e-12


# -- 5: test oracles ----------------------------------------------------------------------

def _enumerated_tail_counts(n):
    """Histogram of W+ over all 2^n sign assignments of ranks 1..n."""
    return Counter(sum(s) for s in itertools.product(*[(0, r) for r in range(1, n + 1)]))


def test_criterion_5_wilcoxon_exact_vs_enumeration():
    for n in range(1, 11):
        hist = _enumerated_tail_counts(n)
        total = n * (n + 1) // 2
        for signs in itertools.product((-1, 1), repeat=n):
            d = np.arange(1, n + 1) * np.array(signs, dtype=float)
            w_plus = sum(r for r, s in zip(range(1, n + 1), signs) if s > 0)
            lo = min(w_plus, total - w_plus)
            want = min(Fraction(1), Fraction(2 * sum(c for w, c in hist.items() if w <= lo), 2 ** n))
            got = stats.wilcoxon_signed_rank(d, np.zeros(n)).p_value
            assert Fraction(got) == want


def test_criterion_5_chi2_cdf_dof2():
    for x in np.linspace(0.0, 40.0, 100):
        assert abs(stats.chi2_cdf(float(x), 2) - (1 - math.exp(-x / 2))) <= 1e-12


def test_criterion_5_anderson_darling():
    rng = np.random.default_rng(5)
    assert stats.anderson_darling_normal(rng.uniform(size=1000), 0.05).reject
    n = 100
    quantiles = sps.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    assert not stats.anderson_darling_normal(quantiles, 0.05).reject


# -- 6: image operations ---------------------------------------------------------------------

def test_criterion_6_ssim_identity():
    rng = np.random.default_rng(6)
    for _ in range(20):
        h, w = rng.integers(11, 40, size=2)
        x = Image(rng.uniform(0, 255, size=(h, w, int(rng.choice([1, 3])))))
        assert abs(imaging.ssim(x, x) - 1.0) <= 1e-12
        assert abs(imaging.dssim(x, x)) <= 1e-12


def test_criterion_6_constant_downsample_invariance():
    rng = np.random.default_rng(7)
    for _ in range(20):
        v = float(rng.uniform(0, 255))
        h, w = rng.integers(4, 80, size=2)
        out = imaging.downsample_bilinear_aa(Image(np.full((h, w, 3), v)), 4, 4)
        assert np.max(np.abs(out.pixels - v)) <= 1e-9


def test_criterion_6_constant_pair_ssim():
    c1 = (0.01 * 255) ** 2
    analytic = c1 / (255.0 ** 2 + c1)  # = 6.5025 / 65031.5025
    got = imaging.ssim(Image(np.zeros((16, 16, 3))), Image(np.full((16, 16, 3), 255.0)))
    assert abs(got - analytic) <= 1e-9 * analytic
    assert f"{got:.5e}" == "9.99900e-05"


# -- 7: subsampler -----------------------------------------------------------------------------

def test_criterion_7_synthetic_instance_and_maximality():
    part = ClassPartition(("A", "B"))
    ids = [f"a{i}" for i in range(1000)] + [f"b{i}" for i in range(50)]
    idx = datasets.LabeledIndex(part, tuple(ids), (0,) * 1000 + (1,) * 50)
    target = DiscreteDistribution((0.8, 0.2))
    chosen = datasets.max_biased_subset(idx, target, seed=0)
    counts = (sum(s.startswith("a") for s in chosen), sum(s.startswith("b") for s in chosen))
    assert len(chosen) == 250 and counts == (200, 50)
    feasible = [n for n in range(1051) if all(t * n <= a for t, a in zip(target.probs, (1000, 50)))]
    assert max(feasible) == len(chosen)


@pytest.mark.skipif(not os.environ.get(FAIRFACE_ENV), reason=f"set {FAIRFACE_ENV} to a FairFace label CSV")
def test_criterion_7_fairface_unfairface_target():
    path = Path(os.environ[FAIRFACE_ENV])
    part = ClassPartition(datasets.FAIRFACE_RACES)
    idx = datasets.load_labeled_index(path, part, id_column="file", class_column="race")
    chosen = set(datasets.max_biased_subset(idx, datasets.unfairface_target(part), seed=0))
    white = sum(1 for s, c in zip(idx.sample_ids, idx.classes) if s in chosen and c == part.index("White"))
    assert abs(len(chosen) - 20_000) <= 3_000
    assert white / len(chosen) > 0.80


# -- 8: CLI smoke ------------------------------------------------------------------------------

def _cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "condfair", *map(str, args)], cwd=cwd,
                          capture_output=True, text=True, env={**os.environ, "CONDFAIR_CONFIG": ""})


def test_criterion_8_cli_pipeline(tmp_path):
    for name, seed in (("biased_model", 1), ("balanced_model", 2), ("balanced_model", 3)):
        res = _cli("simulate", "--confusion", DATA / f"{name}.csv", "--counts", 300, "--seed", seed,
                   "--out", f"{name}_{seed}.csv", cwd=tmp_path)
        assert res.returncode == 0, res.stderr
    res = _cli("fairness", "biased_model_1.csv", "--out", "fair", cwd=tmp_path)
    assert res.returncode == 0, res.stderr
    assert "Δ_RDP-χ²" in res.stdout and "Δ_PR-χ²" in res.stdout
    res = _cli("report",
               "--run", "biased:UFF:biased_model_1.csv", "--run", "biased:FF:balanced_model_2.csv",
               "--run", "steady:UFF:balanced_model_2.csv", "--run", "steady:FF:balanced_model_2.csv",
               "--out", "rep", cwd=tmp_path)
    assert res.returncode == 0, res.stderr
    md = (tmp_path / "rep" / "report.md").read_text(encoding="utf-8")
    assert "Values are in bold if the null hypothesis" in md
    assert f"{CROSS} marks that the null hypothesis P = U([k]) is rejected" in md
    steady = next(line for line in md.splitlines() if line.startswith("| steady |"))
    assert "**" in steady
    fairness_rows = md.split("## Fairness")[1].split("##")[0].splitlines()
    biased = next(line for line in fairness_rows if line.startswith("| biased |"))
    assert CROSS in biased
