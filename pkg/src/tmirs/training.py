"""GFlowNet training loop, sampling and checkpoint persistence.

Randomness comes from numpy's counter-based Philox generator
(``np.random.Generator(np.random.Philox(seed))``) so a seed fully determines
a run and the generator state can be checkpointed exactly.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import Scenario, SystemConfig, TmIrsConfig
from .errors import CorruptCheckpoint, InvalidArgument, NumericalAbort
from .mdp import Layout, decode_bits
from .policy import (AdamState, PolicyNetwork, Trajectory, _forward, adam_step, init_network,
                     masked_log_softmax, tb_gradients)
from .reward import RewardModel

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
DEFAULT_HIDDEN = (64, 64)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass
class TrainingSchedule:
    total_episodes: int
    lr_phases: List[Tuple[int, float]] = field(default_factory=lambda: [(1, 1e-2)])
    temperature_start: float = 2.0
    temperature_end: float = 1.0
    anneal_span: float = 0.5
    batch_size: int = 16
    rng_seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        self.lr_phases = [(int(n), float(lr)) for n, lr in self.lr_phases]
        if self.total_episodes < 0:
            raise InvalidArgument("total_episodes must be >= 0")
        if sum(n for n, _ in self.lr_phases) != self.total_episodes and self.total_episodes > 0:
            raise InvalidArgument("lr_phases spans must add up to total_episodes")
        if not 0 < self.temperature_end <= self.temperature_start:
            raise InvalidArgument("need 0 < temperature_end <= temperature_start")
        if not 0 <= self.anneal_span <= 1:
            raise InvalidArgument("anneal_span is a fraction of the episodes")
        if self.batch_size < 1 or self.log_every < 1:
            raise InvalidArgument("batch_size and log_every must be >= 1")

    @classmethod
    def two_phase(cls, total_episodes: int, switch_fraction: float = 0.9,
                  lr_high: float = 1e-2, lr_low: float = 1e-3, **kw) -> "TrainingSchedule":
        first = int(round(total_episodes * switch_fraction))
        return cls(total_episodes, [(first, lr_high), (total_episodes - first, lr_low)], **kw)

    def learning_rate(self, episode: int) -> float:
        end = 0
        for n, lr in self.lr_phases:
            end += n
            if episode < end:
                return lr
        return self.lr_phases[-1][1]

    def temperature(self, episode: int) -> float:
        span = self.anneal_span * self.total_episodes
        if span <= 0 or episode >= span:
            return self.temperature_end
        frac = episode / span
        return self.temperature_start + frac * (self.temperature_end - self.temperature_start)


def full_schedule(**kw) -> TrainingSchedule:
    """1e6 episodes, lr 1e-2 for the first 9e5 then 1e-3."""
    return TrainingSchedule.two_phase(1_000_000, 0.9, **kw)


def desk_schedule(**kw) -> TrainingSchedule:
    return TrainingSchedule.two_phase(20_000, 0.9, **kw)


@dataclass
class TrainingLog:
    episode: List[int] = field(default_factory=list)
    loss: List[float] = field(default_factory=list)
    log_z: List[float] = field(default_factory=list)
    mean_reward: List[float] = field(default_factory=list)
    best_reward: List[float] = field(default_factory=list)
    wall_seconds: List[float] = field(default_factory=list)
    # per-episode curves (every episode, not only logged ones)
    loss_history: List[float] = field(default_factory=list)
    log_z_history: List[float] = field(default_factory=list)

    def rows(self):
        return list(zip(self.episode, self.loss, self.log_z, self.mean_reward, self.best_reward,
                        self.wall_seconds))

    def deterministic_view(self) -> dict:
        """Everything except wall-clock timings."""
        return dict(episode=self.episode, loss=self.loss, log_z=self.log_z,
                    mean_reward=self.mean_reward, best_reward=self.best_reward,
                    loss_history=self.loss_history, log_z_history=self.log_z_history)


@dataclass
class TrainResult:
    net: PolicyNetwork
    log: TrainingLog
    adam: AdamState
    best_config: Optional[TmIrsConfig]
    best_reward: float
    episodes_done: int
    rng: np.random.Generator

    def __iter__(self):
        # allows ``net, log = train(...)``
        return iter((self.net, self.log))


def _sample_actions(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw of one index per row."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=1)
    # guard against round-off landing past the last positive entry
    last = probs.shape[1] - 1 - np.argmax(probs[:, ::-1] > 0, axis=1)
    return np.minimum(idx, last)


def sample_batch(net: PolicyNetwork, temperature: float, layout: Layout, batch: int,
                 rng: np.random.Generator, with_backward: bool = True):
    """Sample root-to-terminal paths; returns states, actions, log P_F, log P_B.

    With ``with_backward=False`` the log P_B array is left at zero.
    """
    n_steps = layout.n_subblocks
    states = np.zeros((batch, n_steps + 1, layout.size), dtype=np.int8)
    actions = np.zeros((batch, n_steps), dtype=np.int64)
    log_pf = np.zeros((batch, n_steps))
    log_pb = np.zeros((batch, n_steps))
    n_act = net.n_actions
    rows = np.arange(batch)
    for t in range(n_steps + 1):
        cur = states[:, t]
        out, _ = _forward(net, cur.astype(float))
        if t > 0 and with_backward:
            lsm_b = masked_log_softmax(out[:, n_act:], cur.astype(bool))
            log_pb[:, t - 1] = lsm_b[rows, actions[:, t - 1]]
        if t == n_steps:
            break
        mask = layout.valid_mask(cur)
        logits = out[:, :n_act]
        lsm = masked_log_softmax(logits, mask)
        tempered = lsm if temperature == 1.0 else masked_log_softmax(logits / temperature, mask)
        a = _sample_actions(np.exp(tempered), rng)
        actions[:, t] = a
        log_pf[:, t] = lsm[rows, a]
        nxt = cur.copy()
        nxt[rows, a] = 1
        states[:, t + 1] = nxt
    return states, actions, log_pf, log_pb


def _make_reward(scen, cfg, reward_fn):
    return reward_fn if reward_fn is not None else RewardModel(scen, cfg)


def sample_trajectory(net: PolicyNetwork, temperature: float, scen: Scenario, cfg: SystemConfig,
                      rng: np.random.Generator, reward_fn=None) -> Trajectory:
    return sample_trajectories(net, temperature, scen, cfg, rng, 1, reward_fn)[0]


def sample_trajectories(net, temperature, scen, cfg, rng, n, reward_fn=None) -> List[Trajectory]:
    layout = Layout(cfg)
    reward_fn = _make_reward(scen, cfg, reward_fn)
    states, actions, lpf, lpb = sample_batch(net, temperature, layout, n, rng)
    configs = [decode_bits(s[-1], layout) for s in states]
    rewards = reward_fn.batch(configs)
    return [Trajectory(states[i], actions[i], float(rewards[i]), lpf[i], lpb[i], temperature)
            for i in range(n)]


def train(schedule: TrainingSchedule, scen: Optional[Scenario], cfg: SystemConfig,
          hidden: Sequence[int] = DEFAULT_HIDDEN, reward_fn=None, resume: Optional[dict] = None,
          stop_at: Optional[int] = None) -> TrainResult:
    """Run the trajectory-balance training loop.

    ``resume`` is a loaded checkpoint; ``stop_at`` ends the run early at that
    episode index (used to checkpoint mid-run). Raises
    :class:`NumericalAbort` on a non-finite loss.
    """
    layout = Layout(cfg)
    reward_fn = _make_reward(scen, cfg, reward_fn)
    if resume is None:
        rng = make_rng(schedule.rng_seed)
        net = init_network(layout.size, hidden, rng)
        adam = AdamState.zeros_like(net)
        start, best_reward, best_config = 0, -math.inf, None
        tlog = TrainingLog()
    else:
        net, adam, rng = resume["net"], resume["adam"], resume["rng"]
        start = resume["episode"]
        best_reward = resume.get("best_reward", -math.inf)
        best_config = resume.get("best_config")
        tlog = resume.get("log") or TrainingLog()
    if net.n_actions != layout.size:
        raise InvalidArgument("network input width does not match the MDP")

    end = schedule.total_episodes if stop_at is None else min(stop_at, schedule.total_episodes)
    t0 = time.perf_counter()
    for ep in range(start, end):
        temp = schedule.temperature(ep)
        states, actions, lpf, lpb = sample_batch(net, temp, layout, schedule.batch_size, rng,
                                                 with_backward=False)
        configs = [decode_bits(s[-1], layout) for s in states]
        rewards = reward_fn.batch(configs)
        trajs = [Trajectory(states[i], actions[i], float(rewards[i]), lpf[i], None, temp)
                 for i in range(schedule.batch_size)]
        if not np.all(np.isfinite(rewards)):
            worst = trajs[int(np.flatnonzero(~np.isfinite(rewards))[0])]
            raise NumericalAbort(f"non-finite reward at episode {ep}", snapshot=net.copy(), trajectory=worst)
        grads = tb_gradients(net, trajs, layout)
        bad = not math.isfinite(grads.loss) or not all(np.all(np.isfinite(g)) for g in grads.flat())
        if bad:
            worst = trajs[int(np.argmin(rewards))]
            raise NumericalAbort(f"non-finite loss at episode {ep}", snapshot=net.copy(), trajectory=worst)
        adam_step(net, adam, grads, schedule.learning_rate(ep))

        i_best = int(np.argmax(rewards))
        if rewards[i_best] > best_reward:
            best_reward, best_config = float(rewards[i_best]), configs[i_best]
        tlog.loss_history.append(grads.loss)
        tlog.log_z_history.append(net.log_z)
        if ep % schedule.log_every == 0 or ep == schedule.total_episodes - 1:
            tlog.episode.append(ep)
            tlog.loss.append(grads.loss)
            tlog.log_z.append(net.log_z)
            tlog.mean_reward.append(float(np.mean(rewards)))
            tlog.best_reward.append(best_reward)
            tlog.wall_seconds.append(time.perf_counter() - t0)
            log.debug("episode %d loss %.4g lnZ %.4f mean R %.4g best R %.4g",
                      ep, grads.loss, net.log_z, np.mean(rewards), best_reward)
    return TrainResult(net, tlog, adam, best_config, best_reward, end, rng)


def sample_top_configs(net: PolicyNetwork, n_samples: int, n_keep: int, scen: Scenario,
                       cfg: SystemConfig, rng: np.random.Generator, temperature: float = 1.0,
                       reward_fn=None, chunk: int = 256) -> List[Tuple[TmIrsConfig, float]]:
    """Draw terminal states, deduplicate and keep the best ``n_keep`` by reward."""
    if n_samples < 1 or n_keep < 1:
        raise InvalidArgument("n_samples and n_keep must be >= 1")
    layout = Layout(cfg)
    reward_fn = _make_reward(scen, cfg, reward_fn)
    seen = {}
    remaining = n_samples
    while remaining > 0:
        b = min(chunk, remaining)
        states, *_ = sample_batch(net, temperature, layout, b, rng, with_backward=False)
        for s in states:
            c = decode_bits(s[-1], layout)
            seen.setdefault(c.key(), c)
        remaining -= b
    configs = list(seen.values())
    rewards = reward_fn.batch(configs)
    order = sorted(range(len(configs)), key=lambda i: (-rewards[i], i))
    return [(configs[i], float(rewards[i])) for i in order[:n_keep]]


def terminal_distribution(net: PolicyNetwork, cfg: SystemConfig, n_samples: int,
                          rng: np.random.Generator, temperature: float = 1.0) -> dict:
    """Empirical frequencies of sampled terminal configurations, keyed by config key."""
    layout = Layout(cfg)
    states, *_ = sample_batch(net, temperature, layout, n_samples, rng, with_backward=False)
    counts = {}
    for s in states:
        k = decode_bits(s[-1], layout).key()
        counts[k] = counts.get(k, 0) + 1
    return {k: v / n_samples for k, v in counts.items()}


# --- checkpoints ----------------------------------------------------------------

def _dump(obj) -> str:
    """JSON writer that prints floats with 17 significant digits."""
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_dump(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dump(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return json.dumps(obj if not isinstance(obj, np.bool_) else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return json.dumps(str(x))
        return format(x, ".17g")
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in np.ravel(a)]}


def _unarray(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=float).reshape(d["shape"])


def _rng_state(rng: np.random.Generator) -> dict:
    st = rng.bit_generator.state
    inner = {k: [int(x) for x in np.atleast_1d(v)] for k, v in st["state"].items()}
    return {"bit_generator": st["bit_generator"], "state": inner,
            "buffer": [int(x) for x in st["buffer"]], "buffer_pos": int(st["buffer_pos"]),
            "has_uint32": int(st["has_uint32"]), "uinteger": int(st["uinteger"])}


def _restore_rng(d: dict) -> np.random.Generator:
    if d["bit_generator"] != "Philox":
        raise CorruptCheckpoint("unsupported bit generator")
    bg = np.random.Philox()
    bg.state = {"bit_generator": "Philox",
                "state": {k: np.asarray(v, dtype=np.uint64) for k, v in d["state"].items()},
                "buffer": np.asarray(d["buffer"], dtype=np.uint64), "buffer_pos": d["buffer_pos"],
                "has_uint32": d["has_uint32"], "uinteger": d["uinteger"]}
    return np.random.Generator(bg)


def save_checkpoint(path, net: PolicyNetwork, adam: AdamState, episode: int,
                    rng: Optional[np.random.Generator] = None, best_config: Optional[TmIrsConfig] = None,
                    best_reward: Optional[float] = None, log_state: Optional[TrainingLog] = None) -> None:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "layer_dims": list(net.layer_dims),
        "activation": net.activation,
        "weights": [_array(w) for w in net.weights],
        "biases": [_array(b) for b in net.biases],
        "log_z": net.log_z,
        "adam": {
            "m": [_array(m) for m in adam.m], "v": [_array(v) for v in adam.v],
            "m_z": adam.m_z, "v_z": adam.v_z, "step_count": adam.step_count,
            "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps,
        },
        "episode": int(episode),
        "rng": _rng_state(rng) if rng is not None else None,
        "best_reward": best_reward,
        "best_config": best_config.to_dict() if best_config is not None else None,
        "log": log_state.__dict__ if log_state is not None else None,
    }
    Path(path).write_text(_dump(doc) + "\n", encoding="ascii", newline="\n")


def load_checkpoint(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="ascii"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptCheckpoint(f"unreadable checkpoint: {exc}") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CorruptCheckpoint("missing format_version")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"checkpoint version {doc['format_version']} != {CHECKPOINT_VERSION}")
    try:
        net = PolicyNetwork(doc["layer_dims"], [_unarray(w) for w in doc["weights"]],
                            [_unarray(b) for b in doc["biases"]], float(doc["log_z"]), doc["activation"])
        a = doc["adam"]
        adam = AdamState([_unarray(m) for m in a["m"]], [_unarray(v) for v in a["v"]],
                         float(a["m_z"]), float(a["v_z"]), int(a["step_count"]),
                         float(a["beta1"]), float(a["beta2"]), float(a["eps"]))
        out = {"net": net, "adam": adam, "episode": int(doc["episode"]),
               "rng": _restore_rng(doc["rng"]) if doc.get("rng") else None,
               "best_reward": float(doc["best_reward"]) if doc.get("best_reward") is not None else -math.inf,
               "best_config": TmIrsConfig.from_dict(doc["best_config"]) if doc.get("best_config") else None,
               "log": TrainingLog(**doc["log"]) if doc.get("log") else None}
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"malformed checkpoint: {exc}") from exc
    return out
