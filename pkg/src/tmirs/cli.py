"""Command-line entry point: ``tmirs <mode> --config FILE [--seed N] [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .baselines import all_on_baseline, random_search, simulated_annealing
from .config import TmIrsConfig
from .errors import ConfigError, CorruptCheckpoint, InvalidArgument, NumericalAbort
from .evaluation import Table, emit_csv, heatmap, rate_vs_snr, ser_monte_carlo
from .experiment import MODES, ExperimentSpec, load_experiment
from .reward import RewardModel
from .training import (TrainingSchedule, load_checkpoint, make_rng, sample_top_configs,
                       save_checkpoint, train)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("tmirs")


def _write_configs(path: Path, items) -> None:
    doc = [{"reward": float(r), "config": c.to_dict()} for c, r in items]
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="ascii", newline="\n")


def _load_configs(spec: ExperimentSpec) -> List[TmIrsConfig]:
    p = spec.params
    if p["configs"] is not None and p["configs_file"] is not None:
        raise ConfigError("give either configs or configs_file, not both")
    if p["configs"] == "all_on":
        configs = [all_on_baseline(spec.scenario, spec.system)]
    elif p["configs"] is not None:
        configs = [TmIrsConfig.from_dict(d) for d in p["configs"]]
    elif p["configs_file"] is not None:
        try:
            doc = json.loads(Path(p["configs_file"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read configs_file: {exc}") from exc
        configs = [TmIrsConfig.from_dict(d["config"] if "config" in d else d) for d in doc]
    else:
        raise ConfigError("eval modes need configs or configs_file")
    if p["n_configs"] is not None:
        configs = configs[: p["n_configs"]]
    if not configs:
        raise ConfigError("no configurations to evaluate")
    if any(c.n_elements != spec.system.n_elements for c in configs):
        raise ConfigError("configuration size does not match the system")
    return configs


def run_train(spec: ExperimentSpec, out: Path) -> None:
    p = spec.params
    schedule = TrainingSchedule.two_phase(
        p["episodes"], p["switch_fraction"], p["lr_high"], p["lr_low"],
        temperature_start=p["temperature_start"], temperature_end=p["temperature_end"],
        anneal_span=p["anneal_span"], batch_size=p["batch_size"], rng_seed=spec.rng_seed,
        log_every=p["log_every"])
    resume = load_checkpoint(p["resume"]) if p["resume"] else None
    rm = RewardModel(spec.scenario, spec.system)
    res = train(schedule, spec.scenario, spec.system, hidden=p["hidden"], reward_fn=rm, resume=resume)
    save_checkpoint(out / "checkpoint.json", res.net, res.adam, res.episodes_done, res.rng,
                    res.best_config, res.best_reward, res.log)
    emit_csv(Table(("episode", "loss", "log_z", "mean_reward", "best_reward"),
                   [r[:5] for r in res.log.rows()]), out / "training_log.csv")
    top = sample_top_configs(res.net, p["n_samples"], p["n_keep"], spec.scenario, spec.system,
                             make_rng(spec.rng_seed + 1), reward_fn=rm)
    _write_configs(out / "top_configs.json", top)


def run_sample(spec: ExperimentSpec, out: Path) -> None:
    p = spec.params
    ck = load_checkpoint(p["checkpoint"])
    top = sample_top_configs(ck["net"], p["n_samples"], p["n_keep"], spec.scenario, spec.system,
                             make_rng(spec.rng_seed), temperature=p["temperature"])
    _write_configs(out / "top_configs.json", top)


def run_eval_ser(spec: ExperimentSpec, out: Path) -> None:
    p = spec.params
    configs = _load_configs(spec)
    directions = p["directions"] or list(spec.scenario.user_angles)
    table = Table(("theta_deg", "phi_deg", "symbol_errors", "symbols_total", "ser", "log_ser"))
    for d in directions:
        r = ser_monte_carlo(configs, d, p["switching_period"], p["n_symbols"], spec.scenario, spec.system,
                            make_rng(spec.rng_seed))
        table.rows.append((*r.direction, r.symbol_errors, r.symbols_total, r.ser, r.log_ser))
    emit_csv(table, out / "ser.csv")


def run_eval_heatmap(spec: ExperimentSpec, out: Path) -> None:
    p = spec.params
    grid = lambda g: np.arange(g[0], g[1] + 0.5 * g[2], g[2])
    table = heatmap(_load_configs(spec), grid(p["theta_grid"]), grid(p["phi_grid"]), p["metric"],
                    spec.scenario, spec.system, make_rng(spec.rng_seed), n_symbols=p["n_symbols"],
                    switching_period=p["switching_period"])
    emit_csv(table, out / "heatmap.csv")


def run_rate_vs_snr(spec: ExperimentSpec, out: Path) -> None:
    p = spec.params
    table = Table(("method", "snr_db", "mean_rate", "std_rate", "n_seeds"))
    for method in p["methods"]:
        t = rate_vs_snr(method, p["snr_list"], p["budget"], spec.scenario, spec.system,
                        make_rng(spec.rng_seed), n_seeds=p["n_seeds"], hidden=p["hidden"],
                        final_samples=p["final_samples"], reuse_model=p["reuse_model"])
        table.rows += [(method, *r) for r in t.rows]
    emit_csv(table, out / "rate_vs_snr.csv")


def run_baseline(spec: ExperimentSpec, out: Path) -> None:
    p = spec.params
    scen, cfg = spec.scenario, spec.system
    rm = RewardModel(scen, cfg)
    if p["method"] == "all_on":
        c = all_on_baseline(scen, cfg)
        _write_configs(out / "baseline.json", [(c, rm(c))])
        return
    if p["method"] == "sa":
        res = simulated_annealing(scen, cfg, p["budget"], make_rng(spec.rng_seed), p["t_init"], p["decay"], rm)
    elif p["method"] == "random":
        res = random_search(scen, cfg, p["budget"], make_rng(spec.rng_seed), rm)
    else:
        raise ConfigError("baseline method must be sa, random or all_on")
    _write_configs(out / "baseline.json", [(res.best_config, res.best_reward)])
    emit_csv(Table(("evaluation", "best_reward"), res.reward_trace), out / "baseline_trace.csv")


RUNNERS = {"train": run_train, "sample": run_sample, "eval-ser": run_eval_ser,
           "eval-heatmap": run_eval_heatmap, "eval-rate-vs-snr": run_rate_vs_snr, "baseline": run_baseline}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tmirs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        s = sub.add_parser(mode)
        s.add_argument("--config", required=True, help="experiment file (JSON)")
        s.add_argument("--seed", type=int, default=None, help="overrides rng_seed from the file")
        s.add_argument("--out", default=None, help="output directory (overrides output_dir)")
        s.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = load_experiment(args.config, args.mode)
        if args.seed is not None:
            spec.rng_seed = args.seed
        out = Path(args.out or spec.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        RUNNERS[spec.mode](spec, out)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, CorruptCheckpoint, InvalidArgument, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
