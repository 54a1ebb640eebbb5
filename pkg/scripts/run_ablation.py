"""Pipeline 1 vs Pipeline 2 ablation over several seeds.

For each seed: hold out a stratified 20% test split, run 10-fold CV of the
booster on the training part under both pipelines on one shared partition,
pair the fold weighted F1 scores in a t-test, then score both pipelines on
the held-out split.

    python scripts/run_ablation.py --data data/mi_complications.csv --seeds 0 1 2 3 4
"""

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

from mortboost import evaluation
from mortboost.cli import load_dataset
from mortboost.config import RunConfig
from mortboost.gbdt import GbdtParams, fit, predict_label
from mortboost.preprocess import fit_transform, transform
from mortboost.stats import paired_t_test


def held_out(data, cfg, mode):
    feats, y_fit, state = fit_transform(data.train, data.target[data.train_rows], cfg.pipeline_config(mode))
    model = fit(feats.values, y_fit, cfg.gbdt_params(), feats.names)
    pred = predict_label(model, transform(data.test, state).values)
    return evaluation.metrics(pred, data.target[data.test_rows])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data", default="data/mi_complications.csv")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--folds", type=int, default=10)
    parser.add_argument("--alpha", type=float, default=0.5)
    parser.add_argument("--k", type=int, default=50)
    parser.add_argument("--n-trees", type=int, default=100)
    parser.add_argument("--out", type=Path, default=Path("runs/ablation_seeds.json"))
    args = parser.parse_args(argv)

    rows, summary = [], []
    for seed in args.seeds:
        start = time.perf_counter()
        cfg = RunConfig(data_path=args.data, alpha=args.alpha, k=args.k, seed=seed,
                        gbdt=GbdtParams(n_trees=args.n_trees))
        data = {m: load_dataset(cfg, m) for m in ("preprocessed", "raw")}
        y_train = data["raw"].target[data["raw"].train_rows]
        folds = evaluation.stratified_kfold(y_train, args.folds, seed)
        cvs = {
            m: evaluation.cross_validate(data[m].train, y_train, cfg.gbdt_params(), cfg.pipeline_config(m), folds, seed)
            for m in data
        }
        test = paired_t_test(cvs["preprocessed"].scores(), cvs["raw"].scores())
        tests = {m: held_out(data[m], cfg, m) for m in data}
        elapsed = time.perf_counter() - start
        summary.append({
            "seed": seed,
            "partition_hash": evaluation.partition_hash(folds),
            "cv_mean_weighted_f1": {m: cvs[m].mean() for m in cvs},
            "paired_t_test": test.to_dict(),
            "test_metrics": {m: tests[m].to_dict() for m in tests},
            "seconds": elapsed,
        })
        for m, label in (("preprocessed", "1"), ("raw", "2")):
            rows.append((f"GBDT s{seed}", label, tests[m]))
        print(f"seed {seed}: p = {test.p_value:.3f}, {elapsed:.1f}s", flush=True)

    print()
    print(evaluation.format_table(rows), end="")
    p_values = [s["paired_t_test"]["p_value"] for s in summary]
    raw_acc = statistics.fmean(s["test_metrics"]["raw"]["accuracy"] for s in summary)
    raw_f1 = statistics.fmean(s["test_metrics"]["raw"]["weighted_f1"] for s in summary)
    print(f"\nseeds with p > 0.05: {sum(p > 0.05 for p in p_values)}/{len(p_values)}")
    print(f"Pipeline 2 mean test accuracy {raw_acc:.4f}, weighted F1 {raw_f1:.4f}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps({"runs": summary}, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
