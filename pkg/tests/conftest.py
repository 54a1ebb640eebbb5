import csv
import io
import os
from pathlib import Path

import numpy as np
import pytest

from mortboost.gbdt import Forest, GbdtParams, Tree, TreeNode
from mortboost.tabular import (
    ColumnSchema,
    load_schema,
    load_table,
    read_table,
    reference_schema_path,
)

REFERENCE_ENV = "MI_DATA_PATH"
DEFAULT_REFERENCE = Path(__file__).resolve().parents[1] / "data" / "mi_complications.csv"


def reference_data_path() -> Path | None:
    path = Path(os.environ.get(REFERENCE_ENV, DEFAULT_REFERENCE))
    return path if path.is_file() else None


def write_surrogate_csv(path: Path, n_rows: int = 1700, n_dead: int = 271, seed: int = 0) -> Path:
    """MI-shaped synthetic table on the shipped codebook schema.

    Only for exercising the workflow end to end; it carries none of the real
    data's statistics beyond the row/column/outcome counts.
    """
    rng = np.random.default_rng(seed)
    schema = load_schema(reference_schema_path())
    cols = {}
    latent = rng.normal(scale=0.8, size=n_rows)
    for j, col in enumerate(schema):
        if col.kind == "id":
            cols[col.name] = [str(i + 1) for i in range(n_rows)]
            continue
        if col.kind == "target":
            continue
        if col.kind == "numeric":
            vals = rng.normal(loc=100 + 5 * j, scale=15, size=n_rows).round(1)
        elif col.kind == "binary":
            p = rng.choice([0.02, 0.1, 0.3, 0.5])
            vals = (rng.random(n_rows) < p).astype(int)
        else:
            cats = [int(c) for c in col.ordinal_order]
            vals = rng.choice(cats, size=n_rows)
        if col.name == "S_AD_ORIT":
            latent -= (vals - vals.mean()) / vals.std()
        elif col.name == "TIME_B_S":
            latent -= 0.8 * (vals - 5) / 2.6
        elif col.name in ("AGE", "L_BLOOD"):
            latent += 0.7 * (vals - vals.mean()) / vals.std()
        miss_rate = rng.choice([0.0, 0.01, 0.05, 0.08, 0.2, 0.6], p=[0.3, 0.25, 0.2, 0.1, 0.1, 0.05])
        cells = [str(v) for v in vals]
        for i in np.flatnonzero(rng.random(n_rows) < miss_rate):
            cells[i] = "?"
        cols[col.name] = cells
    dead = np.zeros(n_rows, dtype=bool)
    dead[np.argsort(-latent, kind="stable")[:n_dead]] = True
    for col in schema:
        if col.kind == "target":
            if col.name == "LET_IS":
                codes = np.where(dead, rng.integers(1, 8, size=n_rows), 0)
            else:
                codes = (rng.random(n_rows) < 0.1).astype(int)
            cols[col.name] = [str(c) for c in codes]
    lines = [",".join(c.name for c in schema)]
    for i in range(n_rows):
        lines.append(",".join(cols[c.name][i] for c in schema))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def surrogate_csv(tmp_path_factory) -> Path:
    return write_surrogate_csv(tmp_path_factory.mktemp("surrogate") / "mi_surrogate.csv")


@pytest.fixture(scope="session")
def small_surrogate_csv(tmp_path_factory) -> Path:
    return write_surrogate_csv(tmp_path_factory.mktemp("small") / "mi_small.csv", n_rows=400, n_dead=64, seed=3)


@pytest.fixture(scope="session")
def reference_schema():
    return load_schema(reference_schema_path())


@pytest.fixture
def toy_schema():
    return [
        ColumnSchema("ID", "id"),
        ColumnSchema("AGE", "numeric"),
        ColumnSchema("SEX", "binary"),
        ColumnSchema("PAIN", "categorical_ordinal", ("0", "1", "2")),
        ColumnSchema("WARD", "categorical_nominal"),
        ColumnSchema("LET_IS", "target"),
    ]


def toy_table(schema, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(c.name for c in schema)
    writer.writerows(rows)
    buf.seek(0)
    return read_table(buf, schema)


def random_tree(rng, n_features: int, max_depth: int):
    """Hand-assembled tree with random splits, leaf values and covers."""
    def build(depth):
        if depth == max_depth or (depth > 0 and rng.random() < 0.25):
            return TreeNode.leaf(float(rng.normal()), float(rng.uniform(0.1, 5.0)))
        return TreeNode.split(
            int(rng.integers(n_features)),
            float(rng.normal()),
            build(depth + 1),
            build(depth + 1),
            default_left=bool(rng.random() < 0.5),
        )

    return Tree.from_node(build(0))


def random_forest(rng, n_trees: int = 3, max_depth: int = 3, n_features: int = 8):
    trees = [random_tree(rng, n_features, max_depth) for _ in range(n_trees)]
    return Forest(float(rng.normal()), trees, [f"f{j}" for j in range(n_features)], GbdtParams())


def random_instances(rng, n: int, n_features: int, missing: float = 0.15):
    X = rng.normal(size=(n, n_features))
    X[rng.random(X.shape) < missing] = np.nan
    return X


# ------------------------------------------------------------ acceptance log

ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, status: str, text: str) -> None:
    line = f"[{status}] criterion {number:>2}: {text}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
