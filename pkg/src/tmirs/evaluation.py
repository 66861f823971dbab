"""Monte-Carlo SER, angular heatmaps, rate-vs-SNR sweeps and CSV output."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .baselines import random_search, simulated_annealing
from .config import Scenario, SystemConfig, TmIrsConfig, eta, with_snr
from .errors import InvalidArgument
from .model import harmonic_profiles, rates_from_profiles, total_rate
from .reward import RewardModel
from .training import TrainingSchedule, make_rng, sample_top_configs, train

SER_FLOOR = 1e-4
DEFAULT_THETA_GRID = np.arange(-90.0, 90.0 + 1e-9, 2.0)
DEFAULT_PHI_GRID = np.arange(0.0, 90.0 + 1e-9, 2.0)


@dataclass
class Table:
    columns: Tuple[str, ...]
    rows: List[tuple] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows])


@dataclass
class SerResult:
    direction: Tuple[float, float]
    symbol_errors: int
    symbols_total: int
    ser: float
    log_ser: float
    # errors per OFDM symbol (0..K) and the config index used for each symbol
    per_symbol_errors: Optional[np.ndarray] = None
    schedule: Optional[np.ndarray] = None


def _log_ser(ser: float) -> float:
    return math.log10(max(ser, SER_FLOOR))


def psk_points(order: int) -> np.ndarray:
    """Unit-energy PSK points centred in equal angular decision sectors."""
    return np.exp(1j * (2 * np.pi * np.arange(order) + np.pi) / order)


def psk_decide(y: np.ndarray, order: int) -> np.ndarray:
    """Nearest-point PSK decision (sector of the received phase)."""
    ang = np.mod(np.angle(y), 2 * np.pi)
    return np.floor(ang / (2 * np.pi / order)).astype(np.int64) % order


def _mixing_matrices(configs: Sequence[TmIrsConfig], directions, scen: Scenario,
                     cfg: SystemConfig) -> np.ndarray:
    """(C, D, K, K) maps from transmitted to demodulated subcarrier symbols."""
    k = cfg.n_subcarriers
    scale = scen.zeta_nlos * math.sqrt(cfg.n_tx_antennas / k)
    idx = np.arange(k)[:, None] - np.arange(k)[None, :] + (k - 1)
    return np.stack([scale * harmonic_profiles(c, directions, scen, cfg)[:, idx] for c in configs])


def _draws(n_symbols: int, cfg: SystemConfig, noise_var: float, rng: np.random.Generator):
    """Transmitted symbol indices and receiver noise, all drawn up front."""
    k = cfg.n_subcarriers
    sym = rng.integers(0, cfg.modulation_order, (n_symbols, k))
    noise = rng.standard_normal((n_symbols, k, 2)) @ np.array([1.0, 1j]) * math.sqrt(noise_var / 2)
    return sym, noise


def _schedule(n_configs: int, switching_period: int, n_symbols: int) -> np.ndarray:
    return (np.arange(n_symbols) // switching_period) % n_configs


def _symbol_errors(mix: np.ndarray, schedule: np.ndarray, sym: np.ndarray, noise: np.ndarray,
                   order: int) -> np.ndarray:
    """Per-OFDM-symbol error counts for mixing matrices ``mix`` of shape (C, K, K)."""
    d = psk_points(order)[sym]
    errors = np.zeros(sym.shape[0], dtype=np.int64)
    for c in range(mix.shape[0]):
        rows = schedule == c
        if not rows.any():
            continue
        y = d[rows] @ mix[c].T + noise[rows]
        errors[rows] = np.count_nonzero(psk_decide(y, order) != sym[rows], axis=1)
    return errors


def _check_ser_args(configs, switching_period, n_symbols):
    if not configs:
        raise InvalidArgument("at least one configuration is required")
    if switching_period < 1 or n_symbols < 1:
        raise InvalidArgument("switching_period and n_symbols must be >= 1")


def ser_monte_carlo(configs: Sequence[TmIrsConfig], direction, switching_period: int, n_symbols: int,
                    scen: Scenario, cfg: SystemConfig, rng: np.random.Generator) -> SerResult:
    """Symbol error rate at one direction, cycling configs every ``switching_period`` symbols.

    All symbols and noise are drawn before detection, so the draws do not
    depend on the configurations and runs with one seed share them.
    """
    configs = list(configs)
    _check_ser_args(configs, switching_period, n_symbols)
    theta, phi = (float(a) for a in direction)
    mix = _mixing_matrices(configs, [[theta, phi]], scen, cfg)[:, 0]
    sym, noise = _draws(n_symbols, cfg, scen.noise_var, rng)
    sched = _schedule(len(configs), switching_period, n_symbols)
    per = _symbol_errors(mix, sched, sym, noise, cfg.modulation_order)
    total = n_symbols * cfg.n_subcarriers
    errors = int(per.sum())
    ser = errors / total
    return SerResult((theta, phi), errors, total, ser, _log_ser(ser), per, sched)


def heatmap(configs: Sequence[TmIrsConfig], theta_grid=None, phi_grid=None, metric: str = "ser",
            scen: Scenario = None, cfg: SystemConfig = None, rng: Optional[np.random.Generator] = None,
            n_symbols: int = 1024, switching_period: Optional[int] = None) -> Table:
    """One row (theta, phi, value) per grid direction.

    For ``ser`` every direction reuses the same symbol and noise draws. With
    several configs the SER aggregates over the switching schedule and the
    rate is the symbol-weighted mean over that schedule.
    """
    configs = list(configs)
    theta_grid = DEFAULT_THETA_GRID if theta_grid is None else np.asarray(theta_grid, dtype=float)
    phi_grid = DEFAULT_PHI_GRID if phi_grid is None else np.asarray(phi_grid, dtype=float)
    if theta_grid.size == 0 or phi_grid.size == 0:
        raise InvalidArgument("grids must be nonempty")
    if metric not in ("ser", "rate"):
        raise InvalidArgument("metric must be 'ser' or 'rate'")
    period = switching_period or n_symbols
    _check_ser_args(configs, period, n_symbols)
    dirs = np.array([(t, p) for t in theta_grid for p in phi_grid])
    sched = _schedule(len(configs), period, n_symbols)
    weights = np.bincount(sched, minlength=len(configs)) / n_symbols

    table = Table(("theta_deg", "phi_deg", "log_ser" if metric == "ser" else "rate"))
    if metric == "rate":
        e = eta(scen, cfg)
        rates = np.stack([rates_from_profiles(harmonic_profiles(c, dirs, scen, cfg), e, scen.noise_var)
                          for c in configs])
        values = weights @ rates
        table.rows = [(float(t), float(p), float(v)) for (t, p), v in zip(dirs, values)]
        return table

    if rng is None:
        raise InvalidArgument("an rng is required for the ser metric")
    sym, noise = _draws(n_symbols, cfg, scen.noise_var, rng)
    total = n_symbols * cfg.n_subcarriers
    chunk = 256
    for start in range(0, len(dirs), chunk):
        part = dirs[start:start + chunk]
        mix = _mixing_matrices(configs, part, scen, cfg)
        for j, (t, p) in enumerate(part):
            errors = _symbol_errors(mix[:, j], sched, sym, noise, cfg.modulation_order).sum()
            table.rows.append((float(t), float(p), _log_ser(errors / total)))
    return table


def ser_at_directions(configs, directions, switching_period, n_symbols, scen, cfg, rng) -> np.ndarray:
    """Plain SER at many directions with shared draws (no log floor)."""
    configs = list(configs)
    dirs = np.asarray(directions, dtype=float).reshape(-1, 2)
    _check_ser_args(configs, switching_period, n_symbols)
    sym, noise = _draws(n_symbols, cfg, scen.noise_var, rng)
    sched = _schedule(len(configs), switching_period, n_symbols)
    mix = _mixing_matrices(configs, dirs, scen, cfg)
    total = n_symbols * cfg.n_subcarriers
    return np.array([_symbol_errors(mix[:, j], sched, sym, noise, cfg.modulation_order).sum() / total
                     for j in range(len(dirs))])


# --- optimizer comparison -----------------------------------------------------

METHODS = ("gflownet", "sa", "random")


def best_config(method: str, budget: int, scen: Scenario, cfg: SystemConfig, seed: int,
                hidden: Sequence[int] = (64, 64), final_samples: int = 2000,
                batch_size: int = 16) -> Tuple[TmIrsConfig, float]:
    """Best (config, reward) one optimizer finds within ``budget`` reward evaluations.

    GFlowNet spends ``final_samples`` draws on post-training sampling and the
    rest on training episodes; its answer is the better of the best config
    seen in training and the top post-training sample.
    """
    if method not in METHODS:
        raise InvalidArgument(f"unknown method {method!r}")
    if method == "sa":
        res = simulated_annealing(scen, cfg, budget, make_rng(seed))
        return res.best_config, res.best_reward
    if method == "random":
        res = random_search(scen, cfg, budget, make_rng(seed))
        return res.best_config, res.best_reward
    res = _train_gflownet(budget, scen, cfg, seed, hidden, final_samples, batch_size)
    return _gflownet_pick(res, scen, cfg, final_samples)


def _train_gflownet(budget, scen, cfg, seed, hidden, final_samples, batch_size):
    episodes = (budget - final_samples) // batch_size
    if episodes < 1 or final_samples < 1:
        raise InvalidArgument("budget too small for training plus final sampling")
    schedule = TrainingSchedule.two_phase(episodes, batch_size=batch_size, rng_seed=seed,
                                          log_every=max(1, episodes // 20))
    return train(schedule, scen, cfg, hidden=hidden, reward_fn=RewardModel(scen, cfg))


def _gflownet_pick(res, scen, cfg, final_samples, include_training_best=True):
    config, reward = sample_top_configs(res.net, final_samples, 1, scen, cfg, res.rng)[0]
    if include_training_best and res.best_reward > reward:
        config, reward = res.best_config, res.best_reward
    return config, reward


def rate_vs_snr(method: str, snr_list: Sequence[float], budget: int, scen: Scenario, cfg: SystemConfig,
                rng: np.random.Generator, n_seeds: int = 3, reuse_model: bool = False, **kw) -> Table:
    """Mean and std over seeds of the best config's sum rate at each SNR.

    The scenario noise is recalibrated per SNR and every method is rerun
    there; seeds are drawn from ``rng`` once and shared across SNRs. With
    ``reuse_model`` GFlowNet trains once per seed at the scenario's own SNR
    and only the final sampling is redone (and re-scored) per SNR.
    """
    if n_seeds < 1:
        raise InvalidArgument("n_seeds must be >= 1")
    if not all(math.isfinite(s) for s in snr_list):
        raise InvalidArgument("SNR values must be finite")
    seeds = [int(s) for s in rng.integers(0, 2 ** 31, n_seeds)]
    table = Table(("snr_db", "mean_rate", "std_rate", "n_seeds"))
    shared = None
    if reuse_model and method == "gflownet":
        hidden, final_samples = kw.get("hidden", (64, 64)), kw.get("final_samples", 2000)
        shared = {s: _train_gflownet(budget, scen, cfg, s, hidden, final_samples, kw.get("batch_size", 16))
                  for s in seeds}
    for snr in snr_list:
        scen_s, cfg_s = with_snr(scen, cfg, snr)
        if shared is None:
            picks = [best_config(method, budget, scen_s, cfg_s, s, **kw)[0] for s in seeds]
        else:
            # training-time rewards belong to another SNR, so only fresh samples count
            picks = [_gflownet_pick(shared[s], scen_s, cfg_s, final_samples, False)[0] for s in seeds]
        rates = [total_rate(c, scen_s, cfg_s) for c in picks]
        std = float(np.std(rates, ddof=1)) if len(rates) > 1 else 0.0
        table.rows.append((float(snr), float(np.mean(rates)), std, len(rates)))
    return table


# --- output ---------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    return str(v)


def emit_csv(table: Table, path) -> Path:
    """Header plus one line per row; floats at 9 significant digits, LF endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])
    return path
