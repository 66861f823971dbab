"""Feedforward forward/backward policy with trajectory-balance gradients.

The network maps a state bit vector to 2 * M * Q logits: the first half
parametrize the forward policy, the second half the backward policy. All
gradients are derived by hand; there is no autodiff dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import InvalidArgument, InvalidTrajectory, NoValidActions
from .mdp import Layout, StateVector

LEAKY_SLOPE = 0.01
ACTIVATION = "leaky_relu_0.01"
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class PolicyNetwork:
    layer_dims: List[int]
    weights: List[np.ndarray]  # weights[i] has shape (layer_dims[i], layer_dims[i + 1])
    biases: List[np.ndarray]
    log_z: float = 0.0
    activation: str = ACTIVATION

    def __post_init__(self):
        if self.layer_dims[-1] != 2 * self.layer_dims[0]:
            raise InvalidArgument("output width must be twice the state length")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[i], self.layer_dims[i + 1]) or b.shape != (self.layer_dims[i + 1],):
                raise InvalidArgument(f"layer {i} shape mismatch")

    @property
    def n_actions(self) -> int:
        return self.layer_dims[0]

    def params(self) -> List[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "PolicyNetwork":
        return PolicyNetwork(list(self.layer_dims), [w.copy() for w in self.weights],
                             [b.copy() for b in self.biases], float(self.log_z), self.activation)


def init_network(n_actions: int, hidden: Sequence[int], rng: np.random.Generator) -> PolicyNetwork:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, log_z = 0."""
    dims = [int(n_actions), *[int(h) for h in hidden], 2 * int(n_actions)]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, fan_out))
    return PolicyNetwork(dims, weights, biases, 0.0)


def _forward(net: PolicyNetwork, x: np.ndarray):
    """Outputs and the per-layer (input, pre-activation) cache for backprop."""
    cache = []
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        cache.append((h, z))
        h = z if i == last else np.where(z > 0, z, LEAKY_SLOPE * z)
    return h, cache


def _backward(net: PolicyNetwork, cache, grad_out: np.ndarray):
    gw, gb = [None] * len(net.weights), [None] * len(net.weights)
    g = grad_out
    for i in range(len(net.weights) - 1, -1, -1):
        h, z = cache[i]
        if i != len(net.weights) - 1:
            g = g * np.where(z > 0, 1.0, LEAKY_SLOPE)
        gw[i] = h.T @ g
        gb[i] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return gw, gb


def net_forward(net: PolicyNetwork, state) -> np.ndarray:
    bits = state.bits if isinstance(state, StateVector) else np.asarray(state)
    out, _ = _forward(net, np.asarray(bits, dtype=float)[None, :])
    return out[0]


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log-softmax over entries where ``mask`` is true; -inf elsewhere."""
    z = np.where(mask, logits, -np.inf)
    zmax = np.max(z, axis=-1, keepdims=True)
    zmax = np.where(np.isfinite(zmax), zmax, 0.0)
    lse = zmax + np.log(np.sum(np.exp(z - zmax), axis=-1, keepdims=True))
    return z - lse


def forward_policy(net: PolicyNetwork, state: StateVector, temperature: float = 1.0) -> np.ndarray:
    """Masked softmax of forward logits divided by ``temperature``."""
    if not temperature > 0:
        raise InvalidArgument("temperature must be positive")
    mask = state.layout.valid_mask(state.bits)
    if not mask.any():
        raise NoValidActions("terminal state has no forward actions")
    logits = net_forward(net, state)[: net.n_actions]
    return np.exp(masked_log_softmax(logits / temperature, mask))


def backward_policy(net: PolicyNetwork, state: StateVector) -> np.ndarray:
    """Backward probabilities indexed by flat action; nonzero only on set bits.

    Entry ``a`` is the probability of the parent obtained by clearing bit ``a``.
    """
    mask = state.bits.astype(bool)
    if not mask.any():
        raise NoValidActions("the root state has no parents")
    logits = net_forward(net, state)[net.n_actions:]
    return np.exp(masked_log_softmax(logits, mask))


@dataclass
class Trajectory:
    """Root-to-terminal path: ``states[t]`` --``actions[t]``--> ``states[t+1]``.

    ``log_pf`` and ``log_pb`` are the untempered log-probabilities under the
    network snapshot that generated the path.
    """

    states: np.ndarray  # (n + 1, size) int8
    actions: np.ndarray  # (n,)
    reward: float
    log_pf: Optional[np.ndarray] = None
    log_pb: Optional[np.ndarray] = None
    temperature: float = 1.0

    @property
    def length(self) -> int:
        return len(self.actions)


def check_trajectory(traj: Trajectory, layout: Layout) -> None:
    states = np.asarray(traj.states)
    n = len(traj.actions)
    if states.shape != (n + 1, layout.size):
        raise InvalidTrajectory("state array shape does not match actions")
    if states[0].any():
        raise InvalidTrajectory("trajectory must start at the root")
    if not np.all(layout.filled(states[-1]) == 1):
        raise InvalidTrajectory("trajectory does not end in a terminal state")
    prev = states[:-1]
    valid = layout.valid_mask(prev)
    rows = np.arange(n)
    if not np.all(valid[rows, traj.actions]):
        raise InvalidTrajectory("trajectory contains an illegal action")
    expected = prev.copy()
    expected[rows, traj.actions] = 1
    if not np.array_equal(expected, states[1:]):
        raise InvalidTrajectory("consecutive states are not related by the actions")
    if not traj.reward > 0:
        raise InvalidTrajectory("reward must be positive")


def _trajectory_terms(net: PolicyNetwork, trajs: Sequence[Trajectory], layout: Layout):
    """Stack all trajectories' states into one forward pass."""
    n_act = net.n_actions
    states = np.concatenate([np.asarray(t.states) for t in trajs]).astype(float)
    out, cache = _forward(net, states)
    rows_f, rows_b, acts, owner = [], [], [], []
    base = 0
    for k, t in enumerate(trajs):
        n = len(t.actions)
        rows_f.append(base + np.arange(n))
        rows_b.append(base + 1 + np.arange(n))
        acts.append(np.asarray(t.actions))
        owner.append(np.full(n, k))
        base += n + 1
    rows_f, rows_b = np.concatenate(rows_f), np.concatenate(rows_b)
    acts, owner = np.concatenate(acts), np.concatenate(owner)
    mask_f = layout.valid_mask(states[rows_f])
    mask_b = states[rows_b].astype(bool)
    lsm_f = masked_log_softmax(out[rows_f, :n_act], mask_f)
    lsm_b = masked_log_softmax(out[rows_b, n_act:], mask_b)
    idx = np.arange(acts.size)
    log_pf = lsm_f[idx, acts]
    log_pb = lsm_b[idx, acts]
    sum_f = np.bincount(owner, log_pf, minlength=len(trajs))
    sum_b = np.bincount(owner, log_pb, minlength=len(trajs))
    log_r = np.log([t.reward for t in trajs])
    residual = net.log_z + sum_f - log_r - sum_b
    return dict(out=out, cache=cache, rows_f=rows_f, rows_b=rows_b, acts=acts, owner=owner,
                lsm_f=lsm_f, lsm_b=lsm_b, residual=residual, n_states=states.shape[0])


def tb_residuals(net: PolicyNetwork, trajs: Sequence[Trajectory], layout: Layout) -> np.ndarray:
    return _trajectory_terms(net, trajs, layout)["residual"]


def tb_loss(net: PolicyNetwork, trajectory: Trajectory, layout: Layout) -> float:
    """Squared log-ratio of forward and backward path flows."""
    check_trajectory(trajectory, layout)
    r = tb_residuals(net, [trajectory], layout)[0]
    return float(r * r)


@dataclass
class Gradients:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    log_z: float
    loss: float = 0.0

    def flat(self) -> List[np.ndarray]:
        return [*self.weights, *self.biases]


def tb_gradients(net: PolicyNetwork, trajs: Sequence[Trajectory], layout: Layout,
                 validate: bool = False) -> Gradients:
    """Exact gradient of the batch-mean trajectory-balance loss."""
    if not trajs:
        raise InvalidArgument("empty batch")
    if validate:
        for t in trajs:
            check_trajectory(t, layout)
    terms = _trajectory_terms(net, trajs, layout)
    n_act = net.n_actions
    residual = terms["residual"]
    coef = 2.0 * residual / len(trajs)  # d(mean loss)/d residual
    c = coef[terms["owner"]][:, None]
    idx = np.arange(terms["acts"].size)

    d_f = -np.exp(terms["lsm_f"])
    d_f[idx, terms["acts"]] += 1.0  # d log pf / d logits
    d_b = -np.exp(terms["lsm_b"])
    d_b[idx, terms["acts"]] += 1.0

    grad_out = np.zeros((terms["n_states"], 2 * n_act))
    # each state row appears at most once in each role
    grad_out[terms["rows_f"], :n_act] += c * d_f
    grad_out[terms["rows_b"], n_act:] -= c * d_b
    gw, gb = _backward(net, terms["cache"], grad_out)
    return Gradients(gw, gb, float(coef.sum()), float(np.mean(residual ** 2)))


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    m_z: float = 0.0
    v_z: float = 0.0
    step_count: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def zeros_like(cls, net: PolicyNetwork) -> "AdamState":
        return cls([np.zeros_like(p) for p in net.params()], [np.zeros_like(p) for p in net.params()])

    def copy(self) -> "AdamState":
        return AdamState([m.copy() for m in self.m], [v.copy() for v in self.v], self.m_z, self.v_z,
                         self.step_count, self.beta1, self.beta2, self.eps)


def adam_step(net: PolicyNetwork, state: AdamState, grads: Gradients, learning_rate: float):
    """Bias-corrected Adam update of every parameter and log_z, in place.

    Returns ``(net, state)`` for convenience.
    """
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    for p, g, m, v in zip(net.params(), grads.flat(), state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    g = grads.log_z
    state.m_z = b1 * state.m_z + (1.0 - b1) * g
    state.v_z = b2 * state.v_z + (1.0 - b2) * g * g
    net.log_z -= learning_rate * (state.m_z / c1) / (math.sqrt(state.v_z / c2) + state.eps)
    return net, state
