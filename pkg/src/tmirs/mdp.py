"""Deterministic MDP over partial TM-IRS assignments.

A state is a binary vector of ``M * Q`` entries: one block per IRS element,
split into sub-blocks for phase (when learned), onset and duration. An
action sets one entry of a still-empty sub-block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import List, Tuple

import numpy as np

from .config import SystemConfig, TmIrsConfig
from .errors import IllegalTransition, IncompleteState, InvalidArgument, InvalidState

PHASE, ONSET, DURATION = "phase", "onset", "duration"


class Layout:
    """Index bookkeeping for the state vector of one system configuration."""

    def __init__(self, cfg: SystemConfig):
        self.n_elements = cfg.n_elements
        self.learn_phase = cfg.learn_phase
        kinds = [(PHASE, cfg.q_phase)] if cfg.learn_phase else []
        kinds += [(ONSET, cfg.q_onset), (DURATION, cfg.q_duration)]
        self.kinds = tuple(k for k, _ in kinds)
        self.levels = tuple(q for _, q in kinds)
        self.q_phase, self.q_onset, self.q_duration = cfg.q_phase, cfg.q_onset, cfg.q_duration
        self.block_size = sum(self.levels)
        self.size = self.n_elements * self.block_size
        self.n_subblocks = self.n_elements * len(kinds)

        starts, sizes = [], []
        for m in range(self.n_elements):
            offset = m * self.block_size
            for q in self.levels:
                starts.append(offset)
                sizes.append(q)
                offset += q
        self.sub_start = np.array(starts)
        self.sub_size = np.array(sizes)
        # subblock id and within-subblock offset of every flat action
        self.subblock_of = np.repeat(np.arange(self.n_subblocks), self.sub_size)
        self.offset_of = np.arange(self.size) - self.sub_start[self.subblock_of]

    def __eq__(self, other):
        return isinstance(other, Layout) and (self.n_elements, self.levels) == (other.n_elements, other.levels)

    def action_id(self, element: int, kind: str, value: int) -> int:
        j = self.kinds.index(kind)
        sub = element * len(self.kinds) + j
        if not 0 <= value < self.sub_size[sub]:
            raise InvalidArgument("value out of range")
        return int(self.sub_start[sub] + value)

    def describe(self, action: int) -> Tuple[int, str, int]:
        """(element, parameter kind, level) of a flat action index."""
        sub = int(self.subblock_of[action])
        return sub // len(self.kinds), self.kinds[sub % len(self.kinds)], int(self.offset_of[action])

    def filled(self, bits: np.ndarray) -> np.ndarray:
        """Per-subblock count of set entries, for (..., size) bit arrays."""
        return np.add.reduceat(np.asarray(bits, dtype=np.int64), self.sub_start, axis=-1)

    def valid_mask(self, bits: np.ndarray) -> np.ndarray:
        return (self.filled(bits) == 0)[..., self.subblock_of]

    @property
    def n_terminal(self) -> int:
        return math.prod(self.levels) ** self.n_elements


@dataclass(frozen=True, eq=False)
class StateVector:
    bits: np.ndarray
    layout: Layout

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.int8).reshape(-1)
        if bits.size != self.layout.size:
            raise InvalidState("state length does not match layout")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @cached_property
    def assigned_count(self) -> int:
        return int(np.count_nonzero(self.layout.filled(self.bits)))

    def __eq__(self, other):
        return isinstance(other, StateVector) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())


def initial_state(cfg: SystemConfig) -> StateVector:
    layout = Layout(cfg)
    return StateVector(np.zeros(layout.size, dtype=np.int8), layout)


def _checked_fill(state: StateVector) -> np.ndarray:
    filled = state.layout.filled(state.bits)
    if np.any(filled > 1) or np.any((state.bits != 0) & (state.bits != 1)):
        raise InvalidState("a sub-block holds more than one set entry")
    return filled


def valid_actions(state: StateVector) -> np.ndarray:
    filled = _checked_fill(state)
    return (filled == 0)[state.layout.subblock_of]


def apply_action(state: StateVector, action: int) -> StateVector:
    layout = state.layout
    if not 0 <= action < layout.size:
        raise IllegalTransition(f"action {action} out of range")
    if not valid_actions(state)[action]:
        raise IllegalTransition(f"action {action} targets an assigned parameter")
    bits = state.bits.copy()
    bits[action] = 1
    return StateVector(bits, layout)


def parent_actions(state: StateVector) -> List[Tuple[StateVector, int]]:
    """Every (parent, action) pair leading to ``state``; one per filled sub-block."""
    _checked_fill(state)
    parents = []
    for action in np.flatnonzero(state.bits):
        bits = state.bits.copy()
        bits[action] = 0
        parents.append((StateVector(bits, state.layout), int(action)))
    return parents


def is_terminal(state: StateVector) -> bool:
    return bool(np.all(_checked_fill(state) == 1))


def trajectory_length(cfg: SystemConfig) -> int:
    return Layout(cfg).n_subblocks


def decode_bits(bits: np.ndarray, layout: Layout) -> TmIrsConfig:
    """Decode a terminal bit vector (no validation beyond shape)."""
    idx = np.asarray(layout.offset_of[np.flatnonzero(bits)]).reshape(layout.n_elements, len(layout.kinds))
    cols = dict(zip(layout.kinds, idx.T))
    return TmIrsConfig(cols[ONSET], cols[DURATION], layout.q_onset, layout.q_duration,
                       phase_index=cols.get(PHASE), q_phase=layout.q_phase)


def decode(state: StateVector, cfg: SystemConfig) -> TmIrsConfig:
    if not is_terminal(state):
        raise IncompleteState("cannot decode a non-terminal state")
    if Layout(cfg) != state.layout:
        raise InvalidArgument("state layout does not match configuration")
    return decode_bits(state.bits, state.layout)


def encode(config: TmIrsConfig, cfg: SystemConfig) -> StateVector:
    """Terminal state for a configuration (inverse of :func:`decode`)."""
    layout = Layout(cfg)
    if config.n_elements != layout.n_elements or config.always_on:
        raise InvalidArgument("configuration is not representable in this MDP")
    if config.phase_learned != layout.learn_phase:
        raise InvalidArgument("phase mode mismatch")
    values = {ONSET: config.onset_index, DURATION: config.duration_index}
    if layout.learn_phase:
        values[PHASE] = config.phase_index % config.q_phase
    bits = np.zeros(layout.size, dtype=np.int8)
    for m in range(layout.n_elements):
        for kind in layout.kinds:
            bits[layout.action_id(m, kind, int(values[kind][m]))] = 1
    return StateVector(bits, layout)


def enumerate_terminal(cfg: SystemConfig) -> List[TmIrsConfig]:
    """All complete configurations; only sensible for tiny problems."""
    layout = Layout(cfg)
    grids = np.meshgrid(*[np.arange(q) for q in layout.levels] * layout.n_elements, indexing="ij")
    flat = np.stack([g.reshape(-1) for g in grids], axis=1)  # (N, n_subblocks)
    out = []
    for row in flat:
        per = row.reshape(layout.n_elements, len(layout.kinds))
        cols = dict(zip(layout.kinds, per.T))
        out.append(TmIrsConfig(cols[ONSET], cols[DURATION], layout.q_onset, layout.q_duration,
                               phase_index=cols.get(PHASE), q_phase=layout.q_phase))
    return out
