"""Budget-matched comparison optimizers over the discrete TM-IRS grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .config import Scenario, SystemConfig, TmIrsConfig, random_config
from .errors import InvalidArgument
from .mdp import Layout, ONSET, DURATION, PHASE
from .reward import RewardModel


@dataclass
class BudgetedResult:
    best_config: TmIrsConfig
    best_reward: float
    evaluations_used: int
    reward_trace: List[Tuple[int, float]] = field(default_factory=list)
    # reward of the chain's current state after each evaluation (annealing only)
    current_trace: List[float] = field(default_factory=list)


def _grid(cfg: SystemConfig) -> Tuple[Layout, np.ndarray]:
    layout = Layout(cfg)
    return layout, np.asarray(layout.levels)


def _to_config(values: np.ndarray, layout: Layout) -> TmIrsConfig:
    cols = dict(zip(layout.kinds, values.T))
    return TmIrsConfig(cols[ONSET], cols[DURATION], layout.q_onset, layout.q_duration,
                       phase_index=cols.get(PHASE), q_phase=layout.q_phase)


def simulated_annealing(scen: Scenario, cfg: SystemConfig, budget: int, rng: np.random.Generator,
                        t_init: float = 1.0, decay: float = 0.95, reward_fn=None) -> BudgetedResult:
    """Single-parameter-move annealing with geometric cooling.

    Every proposal costs one reward evaluation; the initial random point
    costs one as well, so ``budget`` evaluations are used in total.
    """
    if budget < 1:
        raise InvalidArgument("budget must be >= 1")
    if not 0 < decay < 1:
        raise InvalidArgument("decay must lie in (0, 1)")
    if not t_init > 0:
        raise InvalidArgument("t_init must be positive")
    reward_fn = reward_fn if reward_fn is not None else RewardModel(scen, cfg)
    layout, levels = _grid(cfg)
    n_kinds = len(layout.kinds)
    current = np.stack([rng.integers(0, q, layout.n_elements) for q in levels], axis=1)
    cur_r = reward_fn(_to_config(current, layout))
    best, best_r = current.copy(), cur_r
    trace = [(1, best_r)]
    chain = [cur_r]
    temp = t_init
    for step in range(2, budget + 1):
        m = rng.integers(layout.n_elements)
        k = rng.integers(n_kinds)
        q = levels[k]
        shift = rng.integers(1, q)  # uniform over the other q-1 levels
        cand = current.copy()
        cand[m, k] = (cand[m, k] + shift) % q
        r = reward_fn(_to_config(cand, layout))
        delta = r - cur_r
        u = rng.random()
        if delta >= 0 or (temp > 0 and u < math.exp(delta / temp)):
            current, cur_r = cand, r
        if r > best_r:
            best, best_r = cand.copy(), r
        trace.append((step, best_r))
        chain.append(cur_r)
        temp *= decay
    return BudgetedResult(_to_config(best, layout), float(best_r), budget, trace, chain)


def random_search(scen: Scenario, cfg: SystemConfig, budget: int, rng: np.random.Generator,
                  reward_fn=None, chunk: int = 1024) -> BudgetedResult:
    """Best of ``budget`` i.i.d. uniform configurations."""
    if budget < 1:
        raise InvalidArgument("budget must be >= 1")
    reward_fn = reward_fn if reward_fn is not None else RewardModel(scen, cfg)
    best_c, best_r = None, -math.inf
    trace = []
    done = 0
    while done < budget:
        n = min(chunk, budget - done)
        configs = [random_config(cfg, rng) for _ in range(n)]
        rewards = reward_fn.batch(configs)
        for c, r in zip(configs, rewards):
            done += 1
            if r > best_r:
                best_c, best_r = c, float(r)
            trace.append((done, best_r))
    return BudgetedResult(best_c, best_r, budget, trace)


def all_on_baseline(scen: Scenario, cfg: SystemConfig) -> TmIrsConfig:
    """Every element always on with phases compensating the designated user."""
    m = cfg.n_elements
    zeros = np.zeros(m, dtype=np.int64)
    return TmIrsConfig(zeros, zeros, cfg.q_onset, cfg.q_duration, phase_index=None, always_on=True)
