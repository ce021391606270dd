"""Stance/flight state machine with phase-dependent virtual leg stiffness.

One hop cycle runs Flight -> Compression -> Extension -> Flight.  The
software spring between body and foot is compliant while the leg shortens
and switches to a stiffer setting at the end of compression so the stored
energy plus the stiffness step produce liftoff.  In flight the spring
pulls the leg back to its compression neutral length under heavy damping.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .constants import JACOBIAN_EPSILON
from .errors import SingularityError
from .linkage import LinkageParams, leg_jacobian


class PhaseName(enum.IntEnum):
    FLIGHT = 0
    COMPRESSION = 1
    EXTENSION = 2


@dataclass(frozen=True)
class Phase:
    """Controller phase plus the time it was entered [s]."""

    name: PhaseName
    t_entry: float = 0.0


@dataclass(frozen=True)
class ControllerConfig:
    """Virtual spring gains (SI: N/m, N*s/m, m, N)."""

    k_compress: float = 375.0
    k_extend: float = 500.0
    l0_compress: float = 0.42
    l0_extend: float = 0.42
    b_stance: float = 3.0
    b_flight: float = 20.0
    contact_force_threshold: float = 3.0

    def __post_init__(self):
        if not (self.k_extend >= self.k_compress > 0.0):
            raise ValueError("stiffnesses must satisfy k_extend >= k_compress > 0")
        if self.b_stance < 0.0 or self.b_flight < 0.0:
            raise ValueError("damping must be nonnegative")
        if self.contact_force_threshold <= 0.0:
            raise ValueError("contact_force_threshold must be positive")

    def validate_workspace(self, linkage: LinkageParams) -> None:
        """Neutral lengths must be reachable by the leg."""
        from .linkage import leg_length

        l_min = leg_length(linkage.theta_max, linkage)
        l_max = leg_length(linkage.theta_min, linkage)
        for name, l0 in (("l0_compress", self.l0_compress), ("l0_extend", self.l0_extend)):
            if not (l_min < l0 < l_max):
                raise ValueError(
                    f"{name}={l0:.4g} outside leg workspace ({l_min:.4g}, {l_max:.4g})"
                )


def next_phase(
    phase: Phase,
    leg_len: float,
    leg_rate: float,
    x_f: float,
    v_f: float,
    contact_force: float,
    t: float,
    config: ControllerConfig,
    surface_height: float = 0.0,
) -> Phase:
    """Advance the state machine by one sample; total (never raises).

    Touchdown fires on either detector: contact force above threshold, or
    geometric penetration while the foot still moves downward (the motion
    gate stops retriggering right after liftoff, when the foot is still
    below the original surface).
    """
    if phase.name == PhaseName.FLIGHT:
        contact = contact_force > config.contact_force_threshold or (
            x_f < surface_height and v_f < 0.0
        )
        if contact:
            return Phase(PhaseName.COMPRESSION, t)
    elif phase.name == PhaseName.COMPRESSION:
        if leg_rate >= 0.0:
            return Phase(PhaseName.EXTENSION, t)
    elif phase.name == PhaseName.EXTENSION:
        if contact_force < config.contact_force_threshold and v_f > 0.0:
            return Phase(PhaseName.FLIGHT, t)
    return phase


def virtual_leg_force(phase: Phase, leg_len: float, leg_rate: float, config: ControllerConfig) -> float:
    """Axial spring-damper force [N]; positive pushes body and foot apart."""
    if phase.name == PhaseName.COMPRESSION:
        return config.k_compress * (config.l0_compress - leg_len) - config.b_stance * leg_rate
    if phase.name == PhaseName.EXTENSION:
        return config.k_extend * (config.l0_extend - leg_len) - config.b_stance * leg_rate
    return config.k_compress * (config.l0_compress - leg_len) - config.b_flight * leg_rate


def motor_torque(f_leg: float, theta: float, linkage: LinkageParams) -> float:
    """Per-motor torque realizing an axial leg force; inverse of the quasi-static map."""
    jac = leg_jacobian(theta, linkage)
    if abs(jac) < JACOBIAN_EPSILON:
        raise SingularityError(
            f"|dL/dtheta|={abs(jac):.3g} below {JACOBIAN_EPSILON:g} at theta={theta:.6g}"
        )
    return 0.5 * f_leg * abs(jac)
