"""Command-line workflow: prepare, train, evaluate, gridsearch, ablate, explain, report.

Exit codes: 0 success, 1 internal failure, 2 user or configuration error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evaluation
from .beeswarm import beeswarm_svg
from .config import ConfigError, RunConfig, build_config
from .explain import global_importance, tree_shap
from .gbdt import Forest, ModelSchemaError, TrainingError, fit, predict_label
from .preprocess import (
    CleaningReport,
    PipelineConfig,
    PipelineFitState,
    clean,
    dumps,
    fit_transform,
    transform,
)
from .tabular import (
    ColumnSchema,
    DataError,
    IngestionError,
    SchemaError,
    StratificationError,
    Table,
    binarize_target,
    load_schema,
    load_table,
    missing_summary,
    stratified_split,
    write_table,
)

LOGGER = logging.getLogger("mortboost")

USER_ERRORS = (
    ConfigError, FileNotFoundError, SchemaError, IngestionError, DataError,
    StratificationError, ModelSchemaError, TrainingError,
)


@dataclass
class Dataset:
    """Cleaned table, binary target and the fixed train/test split of one run."""

    table: Table
    target: np.ndarray
    train_rows: np.ndarray
    test_rows: np.ndarray
    report: CleaningReport

    @property
    def train(self) -> Table:
        return self.table.take(self.train_rows)

    @property
    def test(self) -> Table:
        return self.table.take(self.test_rows)


def _passthrough(table: Table, target_column: str) -> tuple[Table, CleaningReport]:
    """Raw pipeline: drop only the id and the unused outcome columns."""
    report = CleaningReport(**missing_summary(table))
    keep = []
    for col in table.schema:
        if col.kind == "id" or (col.kind == "target" and col.name != target_column):
            report.dropped_other.append(col.name)
        else:
            keep.append(col.name)
            if col.is_feature:
                report.surviving_features.append(col.name)
    return table.select(keep), report


def load_dataset(cfg: RunConfig, mode: str | None = None) -> Dataset:
    mode = mode or cfg.pipeline
    schema = load_schema(cfg.schema_path)
    table = load_table(cfg.data_path, schema)
    target = binarize_target(table, cfg.target_column)
    if mode == "preprocessed":
        table, report = clean(table, cfg.target_column)
    else:
        table, report = _passthrough(table, cfg.target_column)
    split = stratified_split(target, cfg.test_fraction, cfg.seed)
    return Dataset(table.select(report.surviving_features), target,
                   np.asarray(split.train), np.asarray(split.test), report)


class Outputs:
    """Collects artifacts and writes them only once the command has succeeded."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.files: dict[str, str | Table] = {}

    def json(self, name: str, payload: dict) -> None:
        self.files[name] = dumps({"meta": self.cfg.meta(), **payload})

    def text(self, name: str, text: str) -> None:
        self.files[name] = text

    def table(self, name: str, table: Table) -> None:
        self.files[name] = table

    def flush(self) -> list[Path]:
        out = Path(self.cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, content in self.files.items():
            path = out / name
            if isinstance(content, Table):
                write_table(content, path)
            else:
                path.write_text(content, encoding="utf-8")
            written.append(path)
        return written


def _with_target(table: Table, target: np.ndarray, rows: np.ndarray) -> Table:
    # the written tables keep the binarized outcome next to the features
    sub = table.take(rows)
    schema = sub.schema + (ColumnSchema("DEATH", "binary"),)
    columns = {**sub.columns, "DEATH": target[rows].astype(np.float64)}
    missing = {**sub.missing, "DEATH": np.zeros(len(rows), dtype=bool)}
    return Table(schema, columns, missing, len(rows))


def _fit_state(data: Dataset, cfg: RunConfig, mode: str):
    return fit_transform(data.train, data.target[data.train_rows], cfg.pipeline_config(mode))


def cmd_prepare(cfg: RunConfig, args) -> Outputs:
    out = Outputs(cfg)
    data = load_dataset(cfg)
    out.table("train.csv", _with_target(data.table, data.target, data.train_rows))
    out.table("test.csv", _with_target(data.table, data.target, data.test_rows))
    out.json("cleaning_report.json", {
        "pipeline": cfg.pipeline,
        "n_rows": data.table.n_rows,
        "n_positive": int(data.target.sum()),
        "n_train": len(data.train_rows),
        "n_test": len(data.test_rows),
        **data.report.to_dict(),
    })
    _, _, state = _fit_state(data, cfg, cfg.pipeline)
    out.json("pipeline_state.json", state.to_dict())
    print(f"{len(data.report.surviving_features)} feature columns survive cleaning "
          f"({len(data.train_rows)} train / {len(data.test_rows)} test rows)")
    return out


def _train(cfg: RunConfig, data: Dataset) -> tuple[Forest, PipelineFitState]:
    features, y_fit, state = _fit_state(data, cfg, cfg.pipeline)
    return fit(features.values, y_fit, cfg.gbdt_params(), features.names), state


def _model_payload(model: Forest, cfg: RunConfig) -> str:
    return json.dumps({"meta": cfg.meta(), **model.to_dict()}, sort_keys=True,
                      separators=(",", ":"), allow_nan=False) + "\n"


def cmd_train(cfg: RunConfig, args) -> Outputs:
    out = Outputs(cfg)
    data = load_dataset(cfg)
    model, state = _train(cfg, data)
    train_pred = predict_label(model, transform(data.train, state).values)
    report = evaluation.metrics(train_pred, data.target[data.train_rows])
    out.text("model.json", _model_payload(model, cfg))
    out.json("pipeline_state.json", state.to_dict())
    out.json("train_metrics.json", {"pipeline": cfg.pipeline, "n_trees": len(model.trees),
                                    "metrics": report.to_dict()})
    print(f"trained {len(model.trees)} trees on {len(state.feature_names)} features")
    return out


def _load_model(path: Path) -> Forest:
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    return Forest.load(path)


def _load_state(path: Path) -> PipelineFitState:
    if not path.is_file():
        raise FileNotFoundError(f"pipeline state not found: {path}")
    return PipelineFitState.load(path)


def _model_paths(cfg: RunConfig, args) -> tuple[Path, Path]:
    model_path = Path(args.model) if getattr(args, "model", None) else Path(cfg.output_dir) / "model.json"
    state_path = (Path(args.pipeline_state) if getattr(args, "pipeline_state", None)
                  else model_path.with_name("pipeline_state.json"))
    return model_path, state_path


def cmd_evaluate(cfg: RunConfig, args) -> Outputs:
    out = Outputs(cfg)
    model_path, state_path = _model_paths(cfg, args)
    model, state = _load_model(model_path), _load_state(state_path)
    data = load_dataset(cfg, state.mode)
    pred = predict_label(model, transform(data.test, state).values)
    report = evaluation.metrics(pred, data.target[data.test_rows])
    label = "1" if state.mode == "preprocessed" else "2"
    out.json("metrics.json", {"pipeline": state.mode, "split": "test", "metrics": report.to_dict()})
    table = evaluation.format_table([("GBDT", label, report)])
    out.text("metrics.txt", table)
    print(table, end="")
    return out


def _grid(cfg: RunConfig) -> evaluation.GridSpec:
    base = cfg.gbdt_params()
    if not cfg.grid:
        return evaluation.default_grid(cfg.pipeline, cfg.alpha, cfg.seed, base, cfg.cv_folds)
    grid = dict(cfg.grid)
    ks = grid.pop("k", (cfg.k,))
    keys = list(grid)
    params = [base.__class__(**{**base.to_dict(), **dict(zip(keys, combo))})
              for combo in itertools.product(*(grid[k] for k in keys))]
    configs = ([cfg.pipeline_config("raw")] if cfg.pipeline == "raw"
               else [PipelineConfig("preprocessed", cfg.alpha, k, cfg.seed) for k in ks])
    return evaluation.GridSpec([(p, c) for c in configs for p in params], cfg.cv_folds)


def cmd_gridsearch(cfg: RunConfig, args) -> Outputs:
    out = Outputs(cfg)
    data = load_dataset(cfg)
    spec = _grid(cfg)
    result = evaluation.grid_search(data.train, data.target[data.train_rows], spec, cfg.seed)
    out.json("gridsearch.json", result.to_dict())
    params, config = result.best
    lines = [f"best candidate {result.best_index} of {len(spec.candidates)}",
             f"pipeline: {vars(config)}", f"params: {params.to_dict()}", ""]
    best_cv = result.results[result.best_index]
    lines.append(evaluation.format_table(
        [("GBDT", "1" if config.mode == "preprocessed" else "2", evaluation.mean_report(best_cv))]))
    out.text("gridsearch.txt", "\n".join(lines))
    print("\n".join(lines), end="")
    return out


def cmd_ablate(cfg: RunConfig, args) -> Outputs:
    out = Outputs(cfg)
    modes = tuple(m.strip() for m in args.pipelines.split(","))
    if len(modes) != 2:
        raise ConfigError("--pipelines takes exactly two comma-separated modes")
    configs = tuple(cfg.pipeline_config(m) for m in modes)
    # the split depends only on the target and seed, so both pipelines see the same rows
    datasets = {m: load_dataset(cfg, m) for m in sorted(set(modes))}
    data = datasets[modes[0]]
    y_train = data.target[data.train_rows]
    folds = evaluation.stratified_kfold(y_train, cfg.cv_folds, cfg.seed)
    params = cfg.gbdt_params()
    cvs = tuple(
        evaluation.cross_validate(datasets[c.mode].train, y_train, params, c, folds, cfg.seed)
        for c in configs
    )
    test = evaluation.paired_t_test(cvs[0].scores(), cvs[1].scores())
    result = evaluation.AblationResult(modes, cvs, test)
    out.json("ablation.json", {"params": params.to_dict(), "alpha": cfg.alpha, "k": cfg.k, **result.to_dict()})
    names = {"preprocessed": "1", "raw": "2"}
    text = evaluation.format_table(
        [("GBDT", names[m], evaluation.mean_report(cv)) for m, cv in zip(modes, cvs)]
    )
    text += (f"\npaired t-test on fold weighted F1 ({cfg.cv_folds} folds): "
             f"t = {test.t_statistic:.4f}, df = {test.degrees_of_freedom}, p = {test.p_value:.4f}"
             f"{' (zero variance)' if test.zero_variance else ''}\n"
             f"seed = {cfg.seed}, partition hash = {evaluation.partition_hash(folds)}\n")
    out.text("ablation.txt", text)
    print(text, end="")
    return out


def cmd_explain(cfg: RunConfig, args) -> Outputs:
    out = Outputs(cfg)
    model_path, state_path = _model_paths(cfg, args)
    model, state = _load_model(model_path), _load_state(state_path)
    data = load_dataset(cfg, state.mode)
    features = transform(data.test, state)
    if list(features.names) != list(model.feature_names):
        raise ModelSchemaError("pipeline features do not match the model's feature names")
    shap = tree_shap(model, features.values)
    ranking = global_importance(shap)
    out.json("shap_values.json", shap.to_dict())
    csv_lines = [",".join(shap.feature_names)]
    csv_lines += [",".join(repr(float(v)) for v in row) for row in shap.values]
    out.text("shap_values.csv", "\n".join(csv_lines) + "\n")
    out.text("importance_ranking.txt", ranking.to_text())
    out.text("beeswarm.svg", beeswarm_svg(shap.values, features.values, shap.feature_names, ranking.ranking))
    print(ranking.to_text().splitlines()[0])
    print("\n".join(ranking.to_text().splitlines()[1:11]))
    return out


def cmd_report(cfg: RunConfig, args) -> Outputs:
    out = Outputs(cfg)
    base = Path(cfg.output_dir)
    sections = []
    found = False
    for name in ("metrics.txt", "ablation.txt", "gridsearch.txt", "importance_ranking.txt"):
        path = base / name
        if path.is_file():
            found = True
            sections.append(f"== {name} ==\n{path.read_text(encoding='utf-8')}")
    if not found:
        raise FileNotFoundError(f"no run artifacts found in {base}")
    text = f"seed = {cfg.seed}, config hash = {cfg.config_hash()}\n\n" + "\n".join(sections)
    out.text("report.txt", text)
    print(text, end="")
    return out


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "gridsearch": cmd_gridsearch,
    "ablate": cmd_ablate,
    "explain": cmd_explain,
    "report": cmd_report,
}

_GBDT_FLAGS = ("n_trees", "learning_rate", "max_leaves", "max_depth", "min_samples_leaf", "lambda_l2")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mortboost", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--data", dest="data_path")
        p.add_argument("--schema", dest="schema_path")
        p.add_argument("--target", dest="target_column")
        p.add_argument("--pipeline", choices=("preprocessed", "raw"))
        p.add_argument("--alpha", type=float)
        p.add_argument("--k", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--test-fraction", dest="test_fraction", type=float)
        p.add_argument("--cv-folds", dest="cv_folds", type=int)
        p.add_argument("--out", dest="output_dir")
        for flag in _GBDT_FLAGS:
            p.add_argument("--" + flag.replace("_", "-"), dest=flag)
        if name in ("evaluate", "explain"):
            p.add_argument("--model")
            p.add_argument("--pipeline-state", dest="pipeline_state")
        if name == "ablate":
            p.add_argument("--pipelines", default="preprocessed,raw")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run_keys = ("data_path", "schema_path", "target_column", "pipeline", "alpha", "k", "seed",
                "test_fraction", "cv_folds", "output_dir")
    try:
        cfg = build_config(
            args.config,
            {k: getattr(args, k) for k in run_keys},
            {k: getattr(args, k) for k in _GBDT_FLAGS},
        )
        # report only reads existing artifacts
        inputs = () if args.command == "report" else (cfg.data_path, cfg.schema_path)
        for path in inputs:
            if not Path(path).is_file():
                raise FileNotFoundError(f"file not found: {path}")
        outputs = COMMANDS[args.command](cfg, args)
        outputs.flush()
    except USER_ERRORS as exc:
        print(f"mortboost {args.command}: error: {exc}".replace("\n", " "), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        LOGGER.debug("internal failure", exc_info=True)
        print(f"mortboost {args.command}: internal error: {type(exc).__name__}: {exc}".replace("\n", " "),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
