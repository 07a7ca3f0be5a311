"""Run configuration: one JSON document drives every subcommand."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import ParameterError
from .models.base import GBDTParams, MLPParams, params_from_dict
from .synth import Scenario

MODEL_KINDS = ("gbdt", "mlp", "prior")
INPUT_KEYS = ("stations", "sensors", "readings", "events")


@dataclass
class ShapSettings:
    mode: str = "exact"
    samples: int = 2048
    max_rows: int = 512


@dataclass
class PermutationSettings:
    repeats: int = 10
    loss: str = "one_minus_auc"
    noise: str = "permute"


@dataclass
class RunConfig:
    seed: int
    scenario: Scenario | None = None
    inputs: dict[str, str] | None = None
    station_filter_threshold: float = 0.03
    eval_year: int | None = None
    models: tuple[str, ...] = MODEL_KINDS
    gbdt: GBDTParams = field(default_factory=GBDTParams)
    mlp: MLPParams = field(default_factory=MLPParams)
    search_budget: int = 0
    k_folds: int = 5
    shap: ShapSettings = field(default_factory=ShapSettings)
    permutation: PermutationSettings = field(default_factory=PermutationSettings)
    gammas: tuple[float, ...] = (0.01,)
    idw_exponent: float = 3.0
    idw_inverse: bool = True
    traffic_corr_threshold: float = 0.95
    woe_bins: int = 24
    t_test: str = "welch"
    stations: tuple[str, ...] | None = None
    figures: bool = True
    out_dir: str = "out"

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ParameterError("seed must be an integer")
        if (self.scenario is None) == (self.inputs is None):
            raise ParameterError("give exactly one of 'scenario' or 'inputs'")
        if self.inputs is not None:
            missing = [k for k in INPUT_KEYS if k not in self.inputs]
            if missing:
                raise ParameterError(f"inputs lack: {', '.join(missing)}")
            for key, path in self.inputs.items():
                if not Path(path).is_file():
                    raise ParameterError(f"input '{key}' not found: {path}")
        self.models = tuple(self.models)
        bad = [m for m in self.models if m not in MODEL_KINDS]
        if bad or not self.models or len(set(self.models)) != len(self.models):
            raise ParameterError(f"models must be a non-empty subset of {MODEL_KINDS}")
        self.gammas = tuple(float(g) for g in self.gammas)
        if any(not 0.0 <= g < 1.0 for g in self.gammas):
            raise ParameterError("gammas must lie in [0, 1)")
        if not 0.0 < self.station_filter_threshold < 1.0:
            raise ParameterError("station_filter_threshold must lie in (0, 1)")
        if self.search_budget < 0 or self.k_folds < 2:
            raise ParameterError("search_budget must be >= 0 and k_folds >= 2")
        if self.shap.mode not in ("exact", "sampled") or self.shap.max_rows < 1:
            raise ParameterError("invalid shap settings")
        if self.shap.mode == "sampled" and self.shap.samples < 64:
            raise ParameterError("sampled SHAP needs at least 64 samples")
        if self.permutation.repeats < 1 or self.permutation.loss not in ("one_minus_auc", "log_loss"):
            raise ParameterError("invalid permutation settings")
        if self.permutation.noise not in ("permute", "uniform"):
            raise ParameterError("permutation noise must be 'permute' or 'uniform'")
        if self.t_test not in ("welch", "pooled"):
            raise ParameterError("t_test must be 'welch' or 'pooled'")
        if self.idw_exponent <= 0 or self.woe_bins < 1:
            raise ParameterError("idw_exponent must be positive and woe_bins >= 1")
        if self.stations is not None:
            self.stations = tuple(str(s) for s in self.stations)

    @property
    def out_path(self) -> Path:
        return Path(self.out_dir)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["scenario"] = None if self.scenario is None else self.scenario.to_dict()
        d["models"] = list(self.models)
        d["gammas"] = list(self.gammas)
        d["mlp"]["hidden"] = list(self.mlp.hidden)
        if self.stations is not None:
            d["stations"] = list(self.stations)
        return d

    def hash(self) -> str:
        """SHA-256 of the canonical JSON form, ignoring where output goes."""
        d = self.to_dict()
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def with_overrides(self, seed=None, station=None, out=None) -> "RunConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = seed
            if self.scenario is not None:
                changes["scenario"] = replace(self.scenario, seed=seed)
        if station is not None:
            changes["stations"] = (station,)
        if out is not None:
            changes["out_dir"] = str(out)
        return replace(self, **changes)


def _sub(cls, data):
    return params_from_dict(cls, data)


def config_from_dict(doc: Mapping[str, Any], base_dir: Path | str = ".") -> RunConfig:
    """Validate a parsed config; relative input paths resolve against ``base_dir``."""
    doc = dict(doc)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ParameterError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "seed" not in doc:
        raise ParameterError("config must set 'seed'")
    base_dir = Path(base_dir)
    if doc.get("scenario") is not None:
        scen = dict(doc["scenario"])
        scen.setdefault("seed", doc["seed"])
        doc["scenario"] = Scenario.from_dict(scen)
    if doc.get("inputs") is not None:
        doc["inputs"] = {k: str((base_dir / v).resolve()) if v is not None else None
                         for k, v in doc["inputs"].items()}
        doc["inputs"] = {k: v for k, v in doc["inputs"].items() if v is not None}
    for key, cls in (("gbdt", GBDTParams), ("mlp", MLPParams), ("shap", ShapSettings),
                     ("permutation", PermutationSettings)):
        if key in doc:
            doc[key] = _sub(cls, doc[key])
    if "out_dir" in doc:
        doc["out_dir"] = str(base_dir / doc["out_dir"])
    return RunConfig(**doc)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ParameterError(f"{path}: config must be a JSON object")
    return config_from_dict(doc, path.parent)
