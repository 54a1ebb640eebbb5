"""Train the raw-pipeline booster on one split and write its SHAP summary.

Writes shap_values.json, importance_ranking.txt and beeswarm.svg to --out and
prints the top of the global ranking.

    python scripts/explain_reference.py --data data/mi_complications.csv --out runs/explain
"""

import argparse
import sys
from pathlib import Path

from mortboost.beeswarm import beeswarm_svg
from mortboost.cli import load_dataset
from mortboost.config import RunConfig
from mortboost.explain import global_importance, tree_shap
from mortboost.gbdt import fit
from mortboost.preprocess import fit_transform, transform


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data", default="data/mi_complications.csv")
    parser.add_argument("--pipeline", choices=("preprocessed", "raw"), default="raw")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--top", type=int, default=10)
    parser.add_argument("--out", type=Path, default=Path("runs/explain"))
    args = parser.parse_args(argv)

    cfg = RunConfig(data_path=args.data, pipeline=args.pipeline, seed=args.seed)
    data = load_dataset(cfg)
    feats, y_fit, state = fit_transform(data.train, data.target[data.train_rows], cfg.pipeline_config())
    model = fit(feats.values, y_fit, cfg.gbdt_params(), feats.names)
    test = transform(data.test, state)
    shap = tree_shap(model, test.values)
    ranking = global_importance(shap)

    args.out.mkdir(parents=True, exist_ok=True)
    shap.save_json(args.out / "shap_values.json")
    (args.out / "importance_ranking.txt").write_text(ranking.to_text(), encoding="utf-8")
    (args.out / "beeswarm.svg").write_text(
        beeswarm_svg(shap.values, test.values, shap.feature_names, ranking.ranking), encoding="utf-8")
    print("\n".join(ranking.to_text().splitlines()[: args.top + 1]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
