"""Run configuration: defaults < ``key = value`` config file < command-line flags."""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .gbdt import GbdtParams
from .preprocess import PipelineConfig
from .tabular import reference_schema_path

ARTIFACT_FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    data_path: str = "data/mi_complications.csv"
    schema_path: str = str(reference_schema_path())
    target_column: str = "LET_IS"
    pipeline: str = "preprocessed"
    alpha: float = 0.5
    k: int = 50
    seed: int = 0
    test_fraction: float = 0.2
    cv_folds: int = 10
    gbdt: GbdtParams = field(default_factory=GbdtParams)
    output_dir: str = "runs/default"
    grid: dict = field(default_factory=dict)

    def pipeline_config(self, mode: str | None = None) -> PipelineConfig:
        return PipelineConfig(mode or self.pipeline, self.alpha, self.k, self.seed)

    def gbdt_params(self) -> GbdtParams:
        # tree growth draws from the run seed like every other consumer
        return replace(self.gbdt, seed=self.seed)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["gbdt"] = self.gbdt_params().to_dict()
        return data

    def config_hash(self) -> str:
        data = self.to_dict()
        data.pop("output_dir")
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def meta(self) -> dict:
        return {"format_version": ARTIFACT_FORMAT_VERSION, "seed": self.seed, "config_hash": self.config_hash()}


_RUN_TYPES = {f.name: f.type for f in fields(RunConfig) if f.name not in ("gbdt", "grid")}
_GBDT_FIELDS = {f.name for f in fields(GbdtParams)}


def _coerce(value: str, kind: str):
    value = value.strip()
    if kind.startswith("int"):
        if kind.endswith("None") and value.lower() in ("none", ""):
            return None
        return int(value)
    if kind == "float":
        return float(value)
    return value


def _gbdt_kind(name: str) -> str:
    return {f.name: str(f.type) for f in fields(GbdtParams)}[name]


def parse_overrides(section: dict, gbdt_section: dict) -> tuple[dict, dict]:
    run, gbdt = {}, {}
    for key, value in section.items():
        if key not in _RUN_TYPES:
            raise ConfigError(f"unknown run setting {key!r}")
        run[key] = _coerce(value, str(_RUN_TYPES[key])) if isinstance(value, str) else value
    for key, value in gbdt_section.items():
        if key not in _GBDT_FIELDS:
            raise ConfigError(f"unknown gbdt setting {key!r}")
        gbdt[key] = _coerce(value, _gbdt_kind(key)) if isinstance(value, str) else value
    return run, gbdt


def read_config_file(path: str | Path) -> tuple[dict, dict, dict]:
    """Sections ``[run]``, ``[gbdt]`` and ``[grid]``; keys outside a section go to run."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    text = path.read_text(encoding="utf-8")
    try:
        parser.read_string("[run]\n" + text if not text.lstrip().startswith("[") else text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}".replace("\n", " ")) from None
    unknown = set(parser.sections()) - {"run", "gbdt", "grid"}
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {sorted(unknown)}")
    get = lambda s: dict(parser[s]) if parser.has_section(s) else {}  # noqa: E731
    return get("run"), get("gbdt"), get("grid")


def parse_grid(section: dict) -> dict:
    grid = {}
    for key, value in section.items():
        if key != "k" and key not in _GBDT_FIELDS:
            raise ConfigError(f"unknown grid setting {key!r}")
        kind = "int" if key == "k" else _gbdt_kind(key)
        grid[key] = tuple(_coerce(v, kind) for v in value.split(","))
    return grid


def build_config(config_path=None, flags: dict | None = None, gbdt_flags: dict | None = None) -> RunConfig:
    run, gbdt, grid = ({}, {}, {}) if config_path is None else read_config_file(config_path)
    run, gbdt = parse_overrides(run, gbdt)
    flag_run, flag_gbdt = parse_overrides(
        {k: v for k, v in (flags or {}).items() if v is not None},
        {k: v for k, v in (gbdt_flags or {}).items() if v is not None},
    )
    run.update(flag_run)
    gbdt.update(flag_gbdt)
    try:
        params = GbdtParams(**gbdt)
        cfg = RunConfig(**run, gbdt=params, grid=parse_grid(grid))
        cfg.pipeline_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if not 0 < cfg.test_fraction < 1:
        raise ConfigError("test_fraction must lie in (0, 1)")
    if cfg.cv_folds < 2:
        raise ConfigError("cv_folds must be at least 2")
    return cfg
