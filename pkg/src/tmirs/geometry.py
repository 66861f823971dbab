"""Scenario construction from Cartesian positions.

Frame conventions (all overridable through :class:`Frame`):

* IRS local frame: ``row_axis`` is the M_x (index m) direction, ``col_axis``
  the M_z (index n) direction and ``normal`` the broadside. A unit direction
  u seen from the IRS has elevation theta = arccos(u . normal) measured from
  broadside and azimuth phi = atan2(u . col_axis, u . row_axis) in the
  surface plane, which makes the steering exponent
  m sin(theta) cos(phi) + n sin(theta) sin(phi) equal to m (u . row) + n (u . col).
* BS angles are measured from the ULA axis: theta = arccos(u . ula_axis).

The defaults place the IRS in the x-z plane facing +y and the ULA along +y,
so an IRS at (20, 0, 2.5) is broadside (90 deg) to a BS at (0, 0, 2.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import Scenario, SystemConfig, calibrated_noise_var
from .errors import InvalidArgument

DEFAULT_XI_FRACTION = 0.5  # xi = pi / (2 * modulation order), i.e. pi/8 for QPSK
DEFAULT_GAMMA_RATIO = 0.1


@dataclass(frozen=True)
class Frame:
    row_axis: tuple = (1.0, 0.0, 0.0)
    col_axis: tuple = (0.0, 0.0, 1.0)
    normal: tuple = (0.0, 1.0, 0.0)
    ula_axis: tuple = (0.0, 1.0, 0.0)


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise InvalidArgument("coincident positions")
    return v / n


def irs_angles(irs_position, point, frame: Frame = Frame()):
    """(theta, phi) in degrees of ``point`` seen from the IRS."""
    u = _unit(np.subtract(point, irs_position))
    c = float(np.clip(np.dot(u, frame.normal), -1.0, 1.0))
    theta = math.degrees(math.acos(c))
    phi = math.degrees(math.atan2(np.dot(u, frame.col_axis), np.dot(u, frame.row_axis)))
    if abs(math.sin(math.radians(theta))) < 1e-12:
        phi = 0.0
    return theta, phi


def bs_angle(bs_position, point, frame: Frame = Frame()) -> float:
    u = _unit(np.subtract(point, bs_position))
    return math.degrees(math.acos(float(np.clip(np.dot(u, frame.ula_axis), -1.0, 1.0))))


def position_from_angles(irs_position, theta: float, phi: float, distance: float,
                         frame: Frame = Frame()) -> tuple:
    """Inverse of :func:`irs_angles` at a given range."""
    th, ph = math.radians(theta), math.radians(phi)
    u = (math.sin(th) * math.cos(ph) * np.asarray(frame.row_axis)
         + math.sin(th) * math.sin(ph) * np.asarray(frame.col_axis)
         + math.cos(th) * np.asarray(frame.normal))
    return tuple(float(x) for x in np.asarray(irs_position, dtype=float) + distance * u)


def default_region(theta_e: float, phi_e: float, theta_r: float, spacing: float = 2.0):
    """3x3 grid around (theta_e, phi_e) crossed with 3 BS angles around theta_r."""
    offs = (-spacing, 0.0, spacing)
    psi_irs = tuple((theta_e + a, phi_e + b) for a in offs for b in offs)
    psi_bs = tuple(theta_r + a for a in offs)
    return psi_irs, psi_bs


def build_scenario(bs_position, irs_position, user_positions: Sequence, target_position,
                   cfg: SystemConfig, frame: Frame = Frame(), **overrides) -> Scenario:
    """Derive angles, path losses and calibrated noise from positions.

    Any :class:`Scenario` field may be supplied in ``overrides`` to bypass the
    derived value. When user angles are overridden the geometry is still used
    for distances. Path-loss amplitudes: NLOS = sqrt(L(BS-IRS) L(IRS-rx)),
    LOS = sqrt(L(BS-target)); the communication NLOS gain uses the first user.
    """
    if not user_positions:
        raise InvalidArgument("at least one user position is required")
    bs, irs, tgt = (np.asarray(p, dtype=float) for p in (bs_position, irs_position, target_position))
    users = [np.asarray(p, dtype=float) for p in user_positions]

    theta_t, phi_t = irs_angles(irs, bs, frame)
    theta_i = bs_angle(bs, irs, frame)
    user_angles = tuple(irs_angles(irs, p, frame) for p in users)
    theta_v = tuple(bs_angle(bs, p, frame) for p in users)
    target_angles = irs_angles(irs, tgt, frame)
    theta_r = bs_angle(bs, tgt, frame)

    d_bs_irs = float(np.linalg.norm(irs - bs))
    l_bs_irs = cfg.pathloss(d_bs_irs, cfg.pathloss_exp_bs_irs)
    l_irs_user = cfg.pathloss(float(np.linalg.norm(users[0] - irs)), cfg.pathloss_exp_irs_user)
    l_irs_tgt = cfg.pathloss(float(np.linalg.norm(tgt - irs)), cfg.pathloss_exp_irs_target)
    l_bs_tgt = cfg.pathloss(float(np.linalg.norm(tgt - bs)), cfg.pathloss_exp_bs_target)
    zeta_nlos = overrides.pop("zeta_nlos", math.sqrt(l_bs_irs * l_irs_user))
    zeta_nlos_target = overrides.pop("zeta_nlos_target", math.sqrt(l_bs_irs * l_irs_tgt))

    fields = dict(
        theta_t=theta_t, phi_t=phi_t, theta_i=theta_i,
        user_angles=user_angles, theta_v=theta_v,
        target_angles=target_angles, theta_r=theta_r,
        zeta_nlos=zeta_nlos, zeta_nlos_target=zeta_nlos_target,
        zeta_los=math.sqrt(l_bs_tgt),
        noise_var=calibrated_noise_var(zeta_nlos, cfg),
        gamma_th=DEFAULT_GAMMA_RATIO * zeta_nlos_target ** 2 * cfg.n_tx_antennas * cfg.n_elements ** 2,
        bs_position=tuple(bs), irs_position=tuple(irs),
        user_positions=tuple(tuple(p) for p in users), target_position=tuple(tgt),
    )
    fields.update(overrides)
    n_users = len(fields["user_angles"])
    fields.setdefault("xi", (DEFAULT_XI_FRACTION * math.pi / cfg.modulation_order,) * n_users)
    if "psi_irs" not in fields or "psi_bs" not in fields:
        psi_irs, psi_bs = default_region(*fields["target_angles"], fields["theta_r"])
        fields.setdefault("psi_irs", psi_irs)
        fields.setdefault("psi_bs", psi_bs)
    scen = Scenario(**fields)
    scen.check_phase_thresholds(cfg)
    return scen


def reference_scenario(cfg: SystemConfig, user_angles=((40.0, 30.0),), user_distance: float = 10.0,
                   target_angles=(0.0, 0.0), target_distance: float = 10.0,
                   frame: Frame = Frame(), **overrides) -> Scenario:
    """BS at (0, 0, 2.5), IRS at (20, 0, 2.5), users and target placed by angle."""
    bs = (0.0, 0.0, 2.5)
    irs = (20.0, 0.0, 2.5)
    users = [position_from_angles(irs, th, ph, user_distance, frame) for th, ph in user_angles]
    target = position_from_angles(irs, *target_angles, target_distance, frame)
    overrides.setdefault("user_angles", tuple(tuple(a) for a in user_angles))
    overrides.setdefault("target_angles", tuple(target_angles))
    return build_scenario(bs, irs, users, target, cfg, frame=frame, **overrides)
