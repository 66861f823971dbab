"""Experiment files: a JSON document naming the system, scenario, mode and parameters."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

from .config import Scenario, SystemConfig, desk_config
from .errors import ConfigError, InvalidArgument
from .geometry import build_scenario, reference_scenario

MODES = ("train", "sample", "eval-ser", "eval-heatmap", "eval-rate-vs-snr", "baseline")
TOP_KEYS = {"system", "scenario", "mode", "params", "output_dir", "rng_seed"}

# allowed keys and defaults of the per-mode parameter block
MODE_PARAMS: Dict[str, Dict[str, Any]] = {
    "train": dict(episodes=20000, hidden=[64, 64], batch_size=16, lr_high=1e-2, lr_low=1e-3,
                  switch_fraction=0.9, temperature_start=2.0, temperature_end=1.0, anneal_span=0.5,
                  log_every=100, resume=None, n_samples=2000, n_keep=5),
    "sample": dict(checkpoint="checkpoint.json", n_samples=2000, n_keep=5, temperature=1.0),
    "eval-ser": dict(configs=None, configs_file=None, n_configs=None, directions=None,
                     n_symbols=10000, switching_period=256),
    "eval-heatmap": dict(configs=None, configs_file=None, n_configs=None, theta_grid=[-90.0, 90.0, 2.0],
                         phi_grid=[0.0, 90.0, 2.0], metric="ser", n_symbols=1024, switching_period=256),
    "eval-rate-vs-snr": dict(methods=["gflownet", "sa", "random"], snr_list=[-10.0, 0.0, 10.0, 20.0],
                             budget=322000, n_seeds=3, hidden=[64, 64], final_samples=2000,
                             reuse_model=False),
    "baseline": dict(method="sa", budget=322000, t_init=1.0, decay=0.95),
}

SCENARIO_KEYS = {"positions", "user_angles", "user_distance", "target_angles", "target_distance"}
POSITION_KEYS = {"bs", "irs", "users", "target"}
SCENARIO_FIELDS = {f.name for f in dataclasses.fields(Scenario)}
SYSTEM_FIELDS = {f.name for f in dataclasses.fields(SystemConfig)} | {"preset"}


@dataclass
class ExperimentSpec:
    system: SystemConfig
    scenario: Scenario
    mode: str
    params: Dict[str, Any] = field(default_factory=dict)
    output_dir: str = "out"
    rng_seed: int = 0


def _unknown(where: str, keys, allowed) -> None:
    extra = sorted(set(keys) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def parse_system(d: Optional[dict]) -> SystemConfig:
    d = dict(d or {})
    _unknown("system", d, SYSTEM_FIELDS)
    preset = d.pop("preset", "desk")
    if preset not in ("desk", "full"):
        raise ConfigError("system.preset must be 'desk' or 'full'")
    try:
        return desk_config(**d) if preset == "desk" else SystemConfig(**d)
    except (InvalidArgument, TypeError) as exc:
        raise ConfigError(f"system: {exc}") from exc


def parse_scenario(d: Optional[dict], cfg: SystemConfig) -> Scenario:
    """Either explicit positions or the default layout placed by angles; any Scenario field overrides."""
    d = dict(d or {})
    _unknown("scenario", d, SCENARIO_KEYS | SCENARIO_FIELDS)
    try:
        if "positions" in d:
            pos = d.pop("positions")
            _unknown("scenario.positions", pos, POSITION_KEYS)
            missing = POSITION_KEYS - set(pos)
            if missing:
                raise ConfigError(f"scenario.positions missing: {', '.join(sorted(missing))}")
            if SCENARIO_KEYS & set(d):
                raise ConfigError("positions cannot be combined with angle placement keys")
            return build_scenario(pos["bs"], pos["irs"], pos["users"], pos["target"], cfg, **d)
        kw = {k: d.pop(k) for k in list(d) if k in SCENARIO_KEYS}
        if "user_angles" in kw:
            kw["user_angles"] = tuple(tuple(a) for a in kw["user_angles"])
        return reference_scenario(cfg, **kw, **d)
    except (InvalidArgument, TypeError) as exc:
        raise ConfigError(f"scenario: {exc}") from exc


def parse_params(mode: str, d: Optional[dict]) -> Dict[str, Any]:
    d = dict(d or {})
    _unknown(f"params for mode {mode}", d, MODE_PARAMS[mode])
    params = {**MODE_PARAMS[mode], **d}
    if mode == "eval-rate-vs-snr":
        snrs = params["snr_list"]
        if not snrs or not all(isinstance(s, (int, float)) and math.isfinite(s) for s in snrs):
            raise ConfigError("snr_list must be a nonempty list of finite numbers")
    if mode == "eval-heatmap":
        for name in ("theta_grid", "phi_grid"):
            g = params[name]
            if len(g) != 3 or g[2] <= 0 or g[1] < g[0]:
                raise ConfigError(f"{name} must be [start, stop, positive step] with stop >= start")
    if mode in ("eval-ser", "eval-heatmap"):
        if params["switching_period"] < 1 or params["n_symbols"] < 1:
            raise ConfigError("switching_period and n_symbols must be >= 1")
    return params


def parse_experiment(doc: dict, mode: Optional[str] = None) -> ExperimentSpec:
    """Validate a decoded experiment document; ``mode`` (from the CLI) must agree with the file."""
    if not isinstance(doc, dict):
        raise ConfigError("experiment file must hold a JSON object")
    _unknown("experiment", doc, TOP_KEYS)
    file_mode = doc.get("mode")
    if mode is not None and file_mode is not None and file_mode != mode:
        raise ConfigError(f"file mode {file_mode!r} does not match command {mode!r}")
    mode = mode or file_mode
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}")
    cfg = parse_system(doc.get("system"))
    scen = parse_scenario(doc.get("scenario"), cfg)
    seed = doc.get("rng_seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("rng_seed must be an integer")
    return ExperimentSpec(cfg, scen, mode, parse_params(mode, doc.get("params")),
                          str(doc.get("output_dir", "out")), seed)


def load_experiment(path, mode: Optional[str] = None) -> ExperimentSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read experiment file: {exc}") from exc
    return parse_experiment(doc, mode)
