"""Build data/mi_complications.csv from the public MI complications table.

The published file (MI.data) has no header row: 124 comma-separated fields
per line with "?" for missing cells. This script downloads it (or reads a
local copy), checks the field count against the shipped schema and writes a
CSV whose header is the schema's column names.

    python scripts/fetch_dataset.py
    python scripts/fetch_dataset.py --source /path/to/MI.data
"""

import argparse
import csv
import io
import sys
import urllib.error
import urllib.request
from pathlib import Path

from mortboost.tabular import load_schema, load_table, reference_schema_path

DEFAULT_URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/00579/MI.data"
DEFAULT_OUT = Path(__file__).resolve().parents[1] / "data" / "mi_complications.csv"


def read_source(source: str) -> str:
    if Path(source).is_file():
        return Path(source).read_text(encoding="utf-8")
    with urllib.request.urlopen(source, timeout=60) as response:
        return response.read().decode("utf-8")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--source", default=DEFAULT_URL, help="URL or local path of MI.data")
    parser.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = parser.parse_args(argv)

    schema = load_schema(reference_schema_path())
    try:
        text = read_source(args.source)
    except (urllib.error.URLError, OSError) as exc:
        print(f"error: cannot read {args.source}: {exc}; download MI.data manually and pass --source", file=sys.stderr)
        return 2
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    bad = [i + 1 for i, r in enumerate(rows) if len(r) != len(schema)]
    if bad:
        print(f"error: {len(bad)} rows do not have {len(schema)} fields (first: line {bad[0]})", file=sys.stderr)
        return 2
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(c.name for c in schema)
        writer.writerows([cell.strip() for cell in r] for r in rows)
    table = load_table(args.out, schema)
    print(f"wrote {args.out}: {table.n_rows} rows, {len(schema)} columns")
    return 0


if __name__ == "__main__":
    sys.exit(main())
