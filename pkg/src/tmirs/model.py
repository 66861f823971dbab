"""Physical-layer model of the time-modulated IRS link.

Angles are in degrees at every public entry point. Time inside one OFDM
symbol is handled in normalized units (t / T_s) internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.integrate import simpson

from .config import Scenario, SystemConfig, TmIrsConfig, eta as _eta
from .errors import InvalidArgument

REWARD_FLOOR = 1e-6


def _check_angles(*angles):
    for a in angles:
        if not np.all(np.isfinite(a)):
            raise InvalidArgument("angles must be finite")


def irs_steering_vector(theta: float, phi: float, cfg: SystemConfig) -> np.ndarray:
    """IRS steering vector, element (m, n) at flat index m * M_z + n."""
    _check_angles(theta, phi)
    return steering_matrix(np.array([[theta, phi]], dtype=float), cfg)[0]


def steering_matrix(directions, cfg: SystemConfig) -> np.ndarray:
    """Stack of steering vectors for an (D, 2) array of (theta, phi) pairs."""
    d = np.asarray(directions, dtype=float).reshape(-1, 2)
    _check_angles(d)
    th, ph = np.deg2rad(d[:, 0]), np.deg2rad(d[:, 1])
    ux = np.sin(th) * np.cos(ph)
    uz = np.sin(th) * np.sin(ph)
    m = np.arange(cfg.irs_cols)
    n = np.arange(cfg.irs_rows)
    phase = m[None, :, None] * ux[:, None, None] + n[None, None, :] * uz[:, None, None]
    return np.exp(-1j * np.pi * phase).reshape(d.shape[0], -1)


def bs_steering_factor(theta: float, steer_to: float, cfg: SystemConfig) -> complex:
    """ULA array factor toward ``theta`` with weights steered to ``steer_to``."""
    _check_angles(theta, steer_to)
    n = np.arange(cfg.n_tx_antennas)
    diff = math.cos(math.radians(theta)) - math.cos(math.radians(steer_to))
    return complex(np.exp(1j * np.pi * n * diff).sum() / math.sqrt(cfg.n_tx_antennas))


def compensation_phases(scen: Scenario, cfg: SystemConfig, user: int | None = None) -> np.ndarray:
    """Phases c_mn = [a_mn(theta_T, phi_T) a_mn(theta_u, phi_u)]^-1 for one user."""
    user = scen.compensate_user if user is None else user
    a_t = irs_steering_vector(scen.theta_t, scen.phi_t, cfg)
    a_u = irs_steering_vector(*scen.user_angles[user], cfg)
    return np.conj(a_t * a_u)


def element_phases(config: TmIrsConfig, scen: Scenario, cfg: SystemConfig) -> np.ndarray:
    if config.phase_learned:
        idx = config.phase_index % config.q_phase
        return np.exp(2j * np.pi * idx / config.q_phase)
    return compensation_phases(scen, cfg)


def switching_harmonics(onset, duration, harmonics, always_on=False) -> np.ndarray:
    """Fourier coefficients of the periodic on/off windows.

    ``onset`` and ``duration`` have shape (..., M); returns (..., L, M) for the
    harmonic orders in ``harmonics``. With ``always_on`` the duration-1 limit
    is used: 1 for the DC term and exactly 0 elsewhere.
    """
    onset = np.asarray(onset, dtype=float)[..., None, :]
    duration = np.asarray(duration, dtype=float)[..., None, :]
    ls = np.asarray(harmonics, dtype=float).reshape(-1, 1)
    # np.sinc(x) = sin(pi x)/(pi x), so np.sinc(l*dt) == sinc(l*pi*dt)
    coef = duration * np.sinc(ls * duration) * np.exp(-1j * np.pi * ls * (2 * onset + duration))
    always_on = np.asarray(always_on, dtype=bool)
    if always_on.any():
        dc = (ls == 0).astype(float) * np.ones_like(duration)
        coef = np.where(always_on[..., None, None], dc, coef)
    return coef


def harmonic_orders(cfg: SystemConfig) -> np.ndarray:
    k = cfg.n_subcarriers
    return np.arange(-(k - 1), k)


def _element_weights(config: TmIrsConfig, scen: Scenario, cfg: SystemConfig) -> np.ndarray:
    a_t = irs_steering_vector(scen.theta_t, scen.phi_t, cfg)
    return a_t * element_phases(config, scen, cfg)


def harmonic_coefficient(config: TmIrsConfig, l: int, theta: float, phi: float,
                         scen: Scenario, cfg: SystemConfig) -> complex:
    """Weight V(l) coupling subcarrier k into subcarrier k + l at (theta, phi)."""
    w = _element_weights(config, scen, cfg) * irs_steering_vector(theta, phi, cfg)
    coef = switching_harmonics(config.onset, config.duration, [l], config.always_on)[0]
    return complex(np.sum(w * coef))


@dataclass(frozen=True)
class HarmonicProfile:
    """V_l for l = -(K-1) .. K-1 at one direction; ``values[K-1]`` is V_0."""

    direction: Tuple[float, float]
    values: np.ndarray

    @property
    def n_subcarriers(self) -> int:
        return (self.values.size + 1) // 2

    @property
    def v0(self) -> complex:
        return complex(self.values[self.n_subcarriers - 1])

    def at(self, l: int) -> complex:
        return complex(self.values[l + self.n_subcarriers - 1])


def harmonic_profiles(config: TmIrsConfig, directions, scen: Scenario, cfg: SystemConfig) -> np.ndarray:
    """Profiles for many directions at once, shape (D, 2K-1)."""
    steer = steering_matrix(directions, cfg)
    coef = switching_harmonics(config.onset, config.duration, harmonic_orders(cfg), config.always_on)
    w = _element_weights(config, scen, cfg)
    return (steer * w) @ coef.T


def harmonic_profile(config: TmIrsConfig, theta: float, phi: float,
                     scen: Scenario, cfg: SystemConfig) -> HarmonicProfile:
    values = harmonic_profiles(config, [[theta, phi]], scen, cfg)[0]
    return HarmonicProfile((float(theta), float(phi)), values)


def sinr_from_profiles(values, eta: float, noise_var: float) -> np.ndarray:
    """Per-subcarrier SINR for profile arrays of shape (..., 2K-1) -> (..., K)."""
    values = np.asarray(values)
    k = (values.shape[-1] + 1) // 2
    power = np.abs(values) ** 2
    csum = np.concatenate([np.zeros(power.shape[:-1] + (1,)), np.cumsum(power, axis=-1)], axis=-1)
    i = np.arange(k)
    window = csum[..., i + k] - csum[..., i]  # sum_{j=i-(K-1)}^{i} |V_j|^2
    p0 = power[..., k - 1:k]
    interference = np.maximum(window - p0, 0.0)
    return eta * p0 / (eta * interference + noise_var)


def rates_from_profiles(values, eta: float, noise_var: float) -> np.ndarray:
    return np.log2(1.0 + sinr_from_profiles(values, eta, noise_var)).sum(axis=-1)


def subcarrier_sinr(profile: HarmonicProfile, eta: float, noise_var: float, i: int) -> float:
    k = profile.n_subcarriers
    if not 0 <= i < k:
        raise InvalidArgument(f"subcarrier index {i} outside [0, {k})")
    return float(sinr_from_profiles(profile.values, eta, noise_var)[i])


def user_rate(profile: HarmonicProfile, eta: float, noise_var: float, cfg: SystemConfig | None = None) -> float:
    """Achievable rate summed over subcarriers, bits per OFDM symbol."""
    return float(rates_from_profiles(profile.values, eta, noise_var))


def total_rate(config: TmIrsConfig, scen: Scenario, cfg: SystemConfig) -> float:
    if scen.n_users == 0:
        raise InvalidArgument("scenario has no users")
    e = _eta(scen, cfg)
    total = 0.0
    for theta, phi in scen.user_angles:
        total += user_rate(harmonic_profile(config, theta, phi, scen, cfg), e, scen.noise_var)
    return total


def eaves_rate(config: TmIrsConfig, theta_e: float, phi_e: float, theta_r: float,
               scen: Scenario, cfg: SystemConfig) -> float:
    """Eavesdropper rate; the BS-side angle does not enter (LOS treated as noise)."""
    _check_angles(theta_r)
    prof = harmonic_profile(config, theta_e, phi_e, scen, cfg)
    return user_rate(prof, _eta(scen, cfg), scen.noise_var)


def region_points(scen: Scenario):
    return [(tp, pp, tr) for tp, pp in scen.psi_irs for tr in scen.psi_bs]


def secrecy_rate(config: TmIrsConfig, user_index: int, scen: Scenario, cfg: SystemConfig) -> float:
    """Worst-case secrecy rate of one user over the suspected region."""
    points = region_points(scen)
    if not points:
        raise InvalidArgument("suspected region is empty")
    theta, phi = scen.user_angles[user_index]
    c_u = user_rate(harmonic_profile(config, theta, phi, scen, cfg), _eta(scen, cfg), scen.noise_var)
    c_e = max(eaves_rate(config, tp, pp, tr, scen, cfg) for tp, pp, tr in points)
    return c_u - c_e


def phase_offset(config: TmIrsConfig, user_index: int, scen: Scenario, cfg: SystemConfig) -> float:
    """|arg V_0| at a user's direction; pi when V_0 vanishes."""
    v0 = harmonic_coefficient(config, 0, *scen.user_angles[user_index], scen, cfg)
    if v0 == 0:
        return math.pi
    return abs(math.atan2(v0.imag, v0.real))


# --- radar beampattern -------------------------------------------------------

def switch_state(onset, duration, t_norm, always_on=False) -> np.ndarray:
    """On/off indicator of each element at normalized time(s) ``t_norm``.

    The on window is [onset, onset + duration) taken modulo one period.
    Returns shape (..., T, M) for onset/duration of shape (..., M).
    """
    onset = np.asarray(onset, dtype=float)[..., None, :]
    duration = np.asarray(duration, dtype=float)[..., None, :]
    t = np.asarray(t_norm, dtype=float).reshape(-1, 1)
    on = np.mod(t - onset, 1.0) < duration
    always_on = np.asarray(always_on, dtype=bool)
    if always_on.any():
        on = on | always_on[..., None, None]
    return on


def _beampattern_terms(config: TmIrsConfig, scen: Scenario, cfg: SystemConfig):
    """Per-element NLOS field gains and the LOS field at the target."""
    a_e = irs_steering_vector(*scen.target_angles, cfg)
    g = scen.zeta_nlos_target * math.sqrt(cfg.n_tx_antennas) * a_e * _element_weights(config, scen, cfg)
    los = scen.zeta_los * bs_steering_factor(scen.theta_r, scen.theta_i, cfg)
    return g, los


def instantaneous_beampattern_gain(config: TmIrsConfig, t: float, scen: Scenario, cfg: SystemConfig) -> float:
    if not 0.0 <= t < cfg.symbol_duration:
        raise InvalidArgument("t must lie in [0, T_s)")
    g, los = _beampattern_terms(config, scen, cfg)
    on = switch_state(config.onset, config.duration, t / cfg.symbol_duration, config.always_on)[0]
    return float(abs(np.sum(g * on) + los) ** 2)


def average_beampattern_gain_sampled(config: TmIrsConfig, n_samples: int,
                                     scen: Scenario, cfg: SystemConfig) -> float:
    if n_samples < 1:
        raise InvalidArgument("n_samples must be >= 1")
    g, los = _beampattern_terms(config, scen, cfg)
    t = np.arange(n_samples) / n_samples
    on = switch_state(config.onset, config.duration, t, config.always_on)
    return float(np.mean(np.abs(on @ g + los) ** 2))


def _breakpoints(onset, duration) -> np.ndarray:
    """Sorted switching instants in [0, 1], padded with both period ends."""
    onset = np.asarray(onset, dtype=float)
    off = np.mod(onset + np.asarray(duration, dtype=float), 1.0)
    ends = np.broadcast_to([0.0, 1.0], onset.shape[:-1] + (2,))
    return np.sort(np.concatenate([onset, off, ends], axis=-1), axis=-1)


def average_beampattern_gain_exact(config: TmIrsConfig, scen: Scenario, cfg: SystemConfig) -> float:
    """Exact period average of the beampattern gain.

    The gain is constant between consecutive switching instants, so the
    integral reduces to a length-weighted sum over that partition.
    """
    g, los = _beampattern_terms(config, scen, cfg)
    edges = _breakpoints(config.onset, config.duration)
    lengths = np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    on = switch_state(config.onset, config.duration, mids, config.always_on)
    return float(np.sum(lengths * np.abs(on @ g + los) ** 2))


# --- reward -------------------------------------------------------------------

def reward(config: TmIrsConfig, scen: Scenario, cfg: SystemConfig, floor: float = REWARD_FLOOR) -> float:
    """Secrecy-rate reward gated by the sensing and phase constraints.

    Returns exactly ``floor`` when any gate fails or the total secrecy rate
    does not exceed it, so that its logarithm stays finite.
    """
    if not floor > 0:
        raise InvalidArgument("floor must be positive")
    if average_beampattern_gain_exact(config, scen, cfg) < scen.gamma_th:
        return floor
    for u in range(scen.n_users):
        if phase_offset(config, u, scen, cfg) > scen.xi[u]:
            return floor
    total = sum(secrecy_rate(config, u, scen, cfg) for u in range(scen.n_users))
    return max(total, floor)


# --- time-domain check --------------------------------------------------------

def mixing_output(config: TmIrsConfig, symbols, theta: float, phi: float,
                  scen: Scenario, cfg: SystemConfig) -> np.ndarray:
    """Noise-free demodulated symbols zeta * sqrt(N_t/K) * sum_k d(k) V(i - k)."""
    d = np.asarray(symbols, dtype=complex)
    k = cfg.n_subcarriers
    v = harmonic_profile(config, theta, phi, scen, cfg).values
    idx = np.arange(k)[:, None] - np.arange(k)[None, :] + (k - 1)
    scale = scen.zeta_nlos * math.sqrt(cfg.n_tx_antennas / k)
    return scale * (v[idx] @ d)


def demodulate_oracle(config: TmIrsConfig, symbols, theta: float, phi: float, oversample: int,
                      scen: Scenario, cfg: SystemConfig) -> np.ndarray:
    """Demodulate the reflected baseband signal by direct time integration.

    The signal is synthesized in the time domain from the switching windows
    themselves (no Fourier series) and correlated against each subcarrier.
    Integration runs piecewise between switching instants, each piece on its
    own Simpson grid with spacing close to T_s / (oversample * K).
    """
    if oversample < 8:
        raise InvalidArgument("oversample must be >= 8")
    d = np.asarray(symbols, dtype=complex)
    k = cfg.n_subcarriers
    if d.shape != (k,):
        raise InvalidArgument(f"expected {k} symbols")
    weights = _element_weights(config, scen, cfg) * irs_steering_vector(theta, phi, cfg)
    scale = scen.zeta_nlos * math.sqrt(cfg.n_tx_antennas / k)
    edges = np.unique(_breakpoints(config.onset, config.duration))
    density = oversample * k
    subcarriers = np.arange(k)
    out = np.zeros(k, dtype=complex)
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 0:
            continue
        on = switch_state(config.onset, config.duration, [0.5 * (a + b)], config.always_on)[0]
        gain = np.sum(weights[on])
        if gain == 0:
            continue
        n_int = max(2, int(math.ceil((b - a) * density)))
        n_int += n_int % 2
        t = np.linspace(a, b, n_int + 1)
        carriers = np.exp(2j * np.pi * np.outer(t, subcarriers))  # (T, K)
        signal = scale * gain * (carriers @ d)
        out += simpson(signal[:, None] * np.conj(carriers), x=t, axis=0)
    return out
