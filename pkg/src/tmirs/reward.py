"""Vectorized, cached reward evaluation for batches of configurations."""

from __future__ import annotations

import math
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .config import Scenario, SystemConfig, TmIrsConfig, eta
from .model import (REWARD_FLOOR, bs_steering_factor, compensation_phases, harmonic_orders,
                    irs_steering_vector, rates_from_profiles, steering_matrix, switching_harmonics)


class RewardModel:
    """Batched version of :func:`tmirs.model.reward` for one scenario.

    ``calls`` counts every configuration submitted (cache hits included), which
    is the budget unit shared by all optimizers.
    """

    def __init__(self, scen: Scenario, cfg: SystemConfig, floor: float = REWARD_FLOOR, cache: bool = True):
        self.scen = scen
        self.cfg = cfg
        self.floor = floor
        self.calls = 0
        self._cache: Optional[Dict[bytes, float]] = {} if cache else None
        self._eta = eta(scen, cfg)
        self._ls = harmonic_orders(cfg)
        a_t = irs_steering_vector(scen.theta_t, scen.phi_t, cfg)
        self._a_t = a_t
        self._fixed_phase = compensation_phases(scen, cfg)
        self._steer_users = steering_matrix(scen.user_angles, cfg)
        self._steer_eve = steering_matrix(scen.psi_irs, cfg)
        a_e = irs_steering_vector(*scen.target_angles, cfg)
        self._g_target = scen.zeta_nlos_target * math.sqrt(cfg.n_tx_antennas) * a_e * a_t
        self._los = scen.zeta_los * bs_steering_factor(scen.theta_r, scen.theta_i, cfg)
        self._xi = np.asarray(scen.xi)

    def _phases(self, phase_index, q_phase, batch):
        if phase_index is None:
            return np.broadcast_to(self._fixed_phase, (batch, self._fixed_phase.size))
        return np.exp(2j * np.pi * (np.asarray(phase_index) % q_phase) / q_phase)

    def details(self, onset_index, duration_index, phase_index=None, always_on=None,
                q_onset=None, q_duration=None, q_phase=None) -> dict:
        """All intermediate quantities for a batch given as (B, M) index arrays."""
        cfg = self.cfg
        q_onset = q_onset or cfg.q_onset
        q_duration = q_duration or cfg.q_duration
        q_phase = q_phase or cfg.q_phase
        onset = np.atleast_2d(onset_index) / q_onset
        duration = np.atleast_2d(duration_index) / q_duration
        batch = onset.shape[0]
        if always_on is None:
            always_on = np.zeros(batch, dtype=bool)
        always_on = np.asarray(always_on, dtype=bool)
        duration = np.where(always_on[:, None], 1.0, duration)
        c = self._phases(phase_index, q_phase, batch)
        w = self._a_t * c  # (B, M)
        coef = switching_harmonics(onset, duration, self._ls, always_on)  # (B, L, M)

        prof_u = np.einsum("um,bm,blm->bul", self._steer_users, w, coef)
        prof_e = np.einsum("pm,bm,blm->bpl", self._steer_eve, w, coef)
        rate_u = rates_from_profiles(prof_u, self._eta, self.scen.noise_var)  # (B, U)
        rate_e = rates_from_profiles(prof_e, self._eta, self.scen.noise_var)  # (B, P)
        secrecy = rate_u - rate_e.max(axis=1, keepdims=True)

        v0 = prof_u[:, :, cfg.n_subcarriers - 1]
        phase = np.where(v0 == 0, np.pi, np.abs(np.angle(v0)))

        off = np.mod(onset + duration, 1.0)
        edges = np.sort(np.concatenate([onset, off, np.zeros((batch, 1)), np.ones((batch, 1))], axis=1), axis=1)
        lengths = np.diff(edges, axis=1)
        mids = 0.5 * (edges[:, :-1] + edges[:, 1:])
        on = np.mod(mids[:, :, None] - onset[:, None, :], 1.0) < duration[:, None, :]
        on |= always_on[:, None, None]
        field = np.einsum("bsm,bm->bs", on, self._g_target * c) + self._los
        gamma = np.sum(lengths * np.abs(field) ** 2, axis=1)

        feasible = (gamma >= self.scen.gamma_th) & np.all(phase <= self._xi[None, :], axis=1)
        total = secrecy.sum(axis=1)
        reward = np.where(feasible, np.maximum(total, self.floor), self.floor)
        return dict(reward=reward, secrecy=secrecy, total_secrecy=total, user_rate=rate_u,
                    eaves_rate=rate_e, phase_offset=phase, gamma=gamma, feasible=feasible)

    def batch(self, configs: Sequence[TmIrsConfig]) -> np.ndarray:
        """Rewards for a list of configurations (cached by configuration key)."""
        self.calls += len(configs)
        out = np.empty(len(configs))
        todo: List[int] = []
        for i, c in enumerate(configs):
            if self._cache is not None and (hit := self._cache.get(c.key())) is not None:
                out[i] = hit
            else:
                todo.append(i)
        if todo:
            # group by phase mode so each group is homogeneous
            groups: Dict[tuple, List[int]] = {}
            for i in todo:
                c = configs[i]
                groups.setdefault((c.phase_learned, c.q_onset, c.q_duration, c.q_phase), []).append(i)
            for (learned, qo, qd, qp), idx in groups.items():
                cs = [configs[i] for i in idx]
                det = self.details(
                    np.stack([c.onset_index for c in cs]),
                    np.stack([c.duration_index for c in cs]),
                    np.stack([c.phase_index for c in cs]) if learned else None,
                    np.array([c.always_on for c in cs]),
                    qo, qd, qp)
                for i, r in zip(idx, det["reward"]):
                    out[i] = r
                    if self._cache is not None:
                        self._cache[configs[i].key()] = float(r)
        return out

    def __call__(self, config: TmIrsConfig) -> float:
        return float(self.batch([config])[0])


class TableReward:
    """Wraps a plain ``config -> reward`` function (toy problems, tests)."""

    def __init__(self, fn: Callable[[TmIrsConfig], float]):
        self.fn = fn
        self.calls = 0

    def batch(self, configs: Sequence[TmIrsConfig]) -> np.ndarray:
        self.calls += len(configs)
        return np.array([float(self.fn(c)) for c in configs])

    def __call__(self, config: TmIrsConfig) -> float:
        return float(self.batch([config])[0])
