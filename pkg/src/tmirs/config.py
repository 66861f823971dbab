"""System, scenario and TM-IRS configuration containers."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .errors import InvalidArgument

Angle2 = Tuple[float, float]


@dataclass(frozen=True)
class SystemConfig:
    """Array sizes, OFDM numerology, discretization levels and path loss.

    Defaults follow the full-size setup (8-antenna ULA, 6x6 IRS, 16
    subcarriers, QPSK, 20 dB). ``learn_phase`` selects whether the element
    phases are part of the decision variable or fixed by compensation.
    """

    n_tx_antennas: int = 8
    irs_cols: int = 6  # M_x
    irs_rows: int = 6  # M_z
    n_subcarriers: int = 16
    subcarrier_spacing: float = 15e3
    symbol_duration: Optional[float] = None
    modulation_order: int = 4
    snr_db: float = 20.0
    q_phase: int = 16
    q_onset: int = 8
    q_duration: int = 8
    learn_phase: bool = True
    pathloss_ref_db: float = -30.0
    pathloss_ref_distance: float = 1.0
    pathloss_exp_bs_irs: float = 2.2
    pathloss_exp_irs_user: float = 2.2
    pathloss_exp_irs_target: float = 2.0
    pathloss_exp_bs_target: float = 2.0

    def __post_init__(self):
        if self.symbol_duration is None:
            object.__setattr__(self, "symbol_duration", 1.0 / self.subcarrier_spacing)
        for name in ("n_tx_antennas", "irs_cols", "irs_rows", "n_subcarriers",
                     "modulation_order", "q_phase", "q_onset", "q_duration"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidArgument(f"{name} must be a positive integer, got {value!r}")
        if not (self.subcarrier_spacing > 0 and math.isfinite(self.subcarrier_spacing)):
            raise InvalidArgument("subcarrier_spacing must be positive")
        if abs(self.symbol_duration * self.subcarrier_spacing - 1.0) > 1e-12:
            raise InvalidArgument("symbol_duration * subcarrier_spacing must equal 1")
        m = self.modulation_order
        if m & (m - 1):
            raise InvalidArgument("modulation_order must be a power of 2")
        if self.q_onset < 2 or self.q_duration < 2:
            raise InvalidArgument("q_onset and q_duration must be >= 2")
        if self.learn_phase and self.q_phase < 2:
            raise InvalidArgument("q_phase must be >= 2 when phases are learned")
        if not math.isfinite(self.snr_db):
            raise InvalidArgument("snr_db must be finite")

    @property
    def n_elements(self) -> int:
        return self.irs_cols * self.irs_rows

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    def pathloss(self, distance: float, exponent: float) -> float:
        """Large-scale power gain c0 * (d/d0)^-alpha."""
        if distance <= 0:
            raise InvalidArgument("link distance must be positive")
        c0 = 10.0 ** (self.pathloss_ref_db / 10.0)
        return c0 * (distance / self.pathloss_ref_distance) ** (-exponent)

    def with_(self, **changes) -> "SystemConfig":
        if "subcarrier_spacing" in changes and "symbol_duration" not in changes:
            changes["symbol_duration"] = None
        return replace(self, **changes)


def desk_config(**overrides) -> SystemConfig:
    """Reduced problem used for laptop-scale runs: 3x3 IRS, K=8, fixed phases."""
    base = dict(irs_cols=3, irs_rows=3, n_subcarriers=8, q_onset=4, q_duration=4,
                learn_phase=False)
    base.update(overrides)
    return SystemConfig(**base)


@dataclass(frozen=True)
class Scenario:
    """Geometry-derived angles (degrees), suspected region and link budget.

    ``psi_irs`` lists the candidate eavesdropper directions seen from the IRS
    and ``psi_bs`` the matching candidate angles seen from the BS; the
    suspected region is their cross product.
    """

    theta_t: float
    phi_t: float
    theta_i: float
    user_angles: Tuple[Angle2, ...]
    theta_v: Tuple[float, ...]
    target_angles: Angle2
    theta_r: float
    psi_irs: Tuple[Angle2, ...]
    psi_bs: Tuple[float, ...]
    gamma_th: float
    xi: Tuple[float, ...]
    zeta_nlos: float
    zeta_nlos_target: float
    zeta_los: float
    noise_var: float
    compensate_user: int = 0
    bs_position: Optional[Tuple[float, float, float]] = None
    irs_position: Optional[Tuple[float, float, float]] = None
    user_positions: Optional[Tuple[Tuple[float, float, float], ...]] = None
    target_position: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        to_t = lambda seq: tuple(tuple(float(v) for v in p) for p in seq)
        object.__setattr__(self, "user_angles", to_t(self.user_angles))
        object.__setattr__(self, "psi_irs", to_t(self.psi_irs))
        object.__setattr__(self, "theta_v", tuple(float(v) for v in self.theta_v))
        object.__setattr__(self, "psi_bs", tuple(float(v) for v in self.psi_bs))
        object.__setattr__(self, "xi", tuple(float(v) for v in self.xi))
        object.__setattr__(self, "target_angles", tuple(float(v) for v in self.target_angles))
        if self.user_positions is not None:
            object.__setattr__(self, "user_positions", to_t(self.user_positions))
        angles = [self.theta_t, self.phi_t, self.theta_i, self.theta_r,
                  *self.target_angles, *self.theta_v, *self.psi_bs]
        angles += [a for p in self.user_angles for a in p]
        angles += [a for p in self.psi_irs for a in p]
        if not all(math.isfinite(a) for a in angles):
            raise InvalidArgument("all angles must be finite")
        if len(self.theta_v) != len(self.user_angles) or len(self.xi) != len(self.user_angles):
            raise InvalidArgument("theta_v and xi need one entry per user")
        if not 0 <= self.compensate_user < max(len(self.user_angles), 1):
            raise InvalidArgument("compensate_user out of range")
        for name in ("zeta_nlos", "noise_var"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        for name in ("zeta_nlos_target", "zeta_los"):
            if not getattr(self, name) >= 0:
                raise InvalidArgument(f"{name} must be nonnegative")
        if self.gamma_th < 0:
            raise InvalidArgument("gamma_th must be nonnegative")

    @property
    def n_users(self) -> int:
        return len(self.user_angles)

    def check_phase_thresholds(self, cfg: SystemConfig) -> None:
        limit = math.pi / cfg.modulation_order
        if any(x >= limit for x in self.xi):
            raise InvalidArgument("xi must be smaller than pi / modulation_order")

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


def eta(scen: Scenario, cfg: SystemConfig) -> float:
    """Effective NLOS power scale zeta^2 * N_t / K."""
    return scen.zeta_nlos ** 2 * cfg.n_tx_antennas / cfg.n_subcarriers


def calibrated_noise_var(zeta_nlos: float, cfg: SystemConfig, snr_db: Optional[float] = None) -> float:
    """Noise power such that the ideal all-on reflection reaches ``snr_db``."""
    snr_db = cfg.snr_db if snr_db is None else snr_db
    e = zeta_nlos ** 2 * cfg.n_tx_antennas / cfg.n_subcarriers
    return e * cfg.n_elements ** 2 / 10.0 ** (snr_db / 10.0)


def with_snr(scen: Scenario, cfg: SystemConfig, snr_db: float) -> Tuple[Scenario, SystemConfig]:
    """Return copies recalibrated to a new SNR (noise power rescaled)."""
    cfg2 = cfg.with_(snr_db=float(snr_db))
    return scen.with_(noise_var=calibrated_noise_var(scen.zeta_nlos, cfg2)), cfg2


@dataclass(frozen=True)
class TmIrsConfig:
    """Discrete per-element TM-IRS parameters.

    Index arrays have one entry per element in row-major (m, n) order, m over
    M_x. ``phase_index`` is None when phases are fixed by compensation.
    ``always_on`` switches every element on for the whole period (the
    duration-1 limit, which is not on the learnable grid).
    """

    onset_index: np.ndarray
    duration_index: np.ndarray
    q_onset: int
    q_duration: int
    phase_index: Optional[np.ndarray] = None
    q_phase: int = 1
    always_on: bool = False

    def __post_init__(self):
        onset = np.asarray(self.onset_index, dtype=np.int64).reshape(-1)
        duration = np.asarray(self.duration_index, dtype=np.int64).reshape(-1)
        if onset.shape != duration.shape:
            raise InvalidArgument("onset and duration grids differ in size")
        if np.any(onset < 0) or np.any(onset >= self.q_onset):
            raise InvalidArgument("onset index out of range")
        if np.any(duration < 0) or np.any(duration >= self.q_duration):
            raise InvalidArgument("duration index out of range")
        onset.flags.writeable = False
        duration.flags.writeable = False
        object.__setattr__(self, "onset_index", onset)
        object.__setattr__(self, "duration_index", duration)
        if self.phase_index is not None:
            phase = np.asarray(self.phase_index, dtype=np.int64).reshape(-1)
            if phase.shape != onset.shape:
                raise InvalidArgument("phase grid differs in size")
            phase.flags.writeable = False
            object.__setattr__(self, "phase_index", phase)

    @property
    def phase_learned(self) -> bool:
        return self.phase_index is not None

    @property
    def n_elements(self) -> int:
        return self.onset_index.size

    @property
    def onset(self) -> np.ndarray:
        return self.onset_index / self.q_onset

    @property
    def duration(self) -> np.ndarray:
        if self.always_on:
            return np.ones(self.n_elements)
        return self.duration_index / self.q_duration

    def key(self) -> bytes:
        """Hashable identity used for deduplication and caching."""
        parts = [self.onset_index.tobytes(), self.duration_index.tobytes(),
                 bytes([self.always_on])]
        if self.phase_index is not None:
            parts.append((self.phase_index % self.q_phase).tobytes())
        return b"|".join(parts)

    def __eq__(self, other):
        if not isinstance(other, TmIrsConfig):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def to_dict(self) -> dict:
        out = {
            "onset_index": self.onset_index.tolist(),
            "duration_index": self.duration_index.tolist(),
            "q_onset": self.q_onset,
            "q_duration": self.q_duration,
            "always_on": self.always_on,
        }
        if self.phase_index is not None:
            out["phase_index"] = self.phase_index.tolist()
            out["q_phase"] = self.q_phase
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TmIrsConfig":
        return cls(onset_index=d["onset_index"], duration_index=d["duration_index"],
                   q_onset=d["q_onset"], q_duration=d["q_duration"],
                   phase_index=d.get("phase_index"), q_phase=d.get("q_phase", 1),
                   always_on=d.get("always_on", False))


def random_config(cfg: SystemConfig, rng: np.random.Generator,
                  learn_phase: Optional[bool] = None) -> TmIrsConfig:
    """Uniformly random configuration on the discrete grid."""
    learn_phase = cfg.learn_phase if learn_phase is None else learn_phase
    m = cfg.n_elements
    phase = rng.integers(0, cfg.q_phase, m) if learn_phase else None
    onset = rng.integers(0, cfg.q_onset, m)
    duration = rng.integers(0, cfg.q_duration, m)
    return TmIrsConfig(onset, duration, cfg.q_onset, cfg.q_duration,
                       phase_index=phase, q_phase=cfg.q_phase)
