"""Reduced kinematics and dynamics of a symmetric parallel five-bar leg.

The two actuated upper links share a single joint angle theta under
symmetric drive, so the leg is fully described by theta and its axial
length

    L(theta) = l_upper * cos(theta) + sqrt(l_lower^2 - l_upper^2 * sin(theta)^2),

which is strictly decreasing on (0, pi/2) and singular (dL/dtheta = 0)
at full extension theta = 0.

The vertical plant has two degrees of freedom, foot height x_f and joint
angle theta, with the body riding on the closure x_b = x_f + L(theta) +
mount_offset.  Eliminating the joint coordinate from the two-coordinate
equations of motion (Schur complement of the 2x2 mass matrix) collapses
the plant onto a single foot channel

    M_f(theta) * xdd_f + M_f(theta) * g = F_c - beta(theta) * tau - C(theta) * thetadot^2

whose coefficients this module computes numerically per call.  `tau` is
the per-motor torque, positive when driving the foot toward the ground
(leg extension); `F_c` is the vertical terrain contact force on the foot,
positive upward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import GRAVITY, JACOBIAN_EPSILON
from .errors import WorkspaceError, SingularityError


@dataclass(frozen=True)
class LinkageParams:
    """Geometry, inertia and motor constants of the symmetric leg.

    Lengths in m, angles in rad, masses in kg, rotor_inertia in kg*m^2
    (reflected, per motor), torque_constant in N*m/A.
    """

    l_upper: float = 0.15
    l_lower: float = 0.30
    theta_min: float = 0.15
    theta_max: float = 1.50
    rotor_inertia: float = 5e-4
    torque_constant: float = 0.14
    m_body: float = 1.0
    m_foot: float = 0.3
    mount_offset: float = 0.0  # body height above the hip joint

    def __post_init__(self):
        if not (self.l_lower > self.l_upper > 0.0):
            raise ValueError("linkage requires l_lower > l_upper > 0")
        if not (0.0 < self.theta_min < self.theta_max < math.pi / 2):
            raise ValueError("joint bounds must satisfy 0 < theta_min < theta_max < pi/2")
        if self.rotor_inertia <= 0.0 or self.m_body <= 0.0 or self.m_foot <= 0.0:
            raise ValueError("masses and rotor inertia must be positive")
        if self.torque_constant <= 0.0:
            raise ValueError("torque_constant must be positive")


@dataclass(frozen=True)
class DynamicsCoeffs:
    """Coefficients of the single-channel foot dynamics at one joint angle.

    M_f: effective foot-channel mass [kg]
    dMf_dtheta: its angle derivative [kg/rad]
    beta: torque-to-force coefficient [1/m]
    C_coef: centrifugal coefficient [kg*m/rad^2]
    """

    M_f: float
    dMf_dtheta: float
    beta: float
    C_coef: float


def _check_theta(theta: float, params: LinkageParams) -> None:
    if not (params.theta_min <= theta <= params.theta_max):
        raise WorkspaceError(
            f"theta={theta:.6g} outside workspace [{params.theta_min:.6g}, {params.theta_max:.6g}]"
        )


def _geometry(theta: float, l1: float, l2_sq: float) -> tuple[float, float, float]:
    """Leg length, Jacobian dL/dtheta and its derivative d2L/dtheta2.

    No bounds check; callers guarantee theta is inside the workspace
    (the square root stays real for l_lower > l_upper).
    """
    s = math.sin(theta)
    c = math.cos(theta)
    l1_sq = l1 * l1
    root = math.sqrt(l2_sq - l1_sq * s * s)
    length = l1 * c + root
    jac = -l1 * s - l1_sq * s * c / root
    curv = -l1 * c - l1_sq * ((c * c - s * s) / root + l1_sq * s * s * c * c / root**3)
    return length, jac, curv


def leg_length(theta: float, params: LinkageParams) -> float:
    """Axial leg length L(theta) [m]."""
    _check_theta(theta, params)
    return _geometry(theta, params.l_upper, params.l_lower**2)[0]


def leg_jacobian(theta: float, params: LinkageParams) -> float:
    """dL/dtheta [m/rad]; negative throughout the workspace."""
    _check_theta(theta, params)
    return _geometry(theta, params.l_upper, params.l_lower**2)[1]


def leg_curvature(theta: float, params: LinkageParams) -> float:
    """d2L/dtheta2 [m/rad^2]."""
    _check_theta(theta, params)
    return _geometry(theta, params.l_upper, params.l_lower**2)[2]


def _mass_matrix_entries(jac: float, params: LinkageParams) -> tuple[float, float, float]:
    """Entries of the symmetric 2x2 mass matrix in (x_f, theta) coordinates."""
    mb = params.m_body
    m00 = mb + params.m_foot
    m01 = mb * jac
    m11 = mb * jac * jac + 2.0 * params.rotor_inertia
    return m00, m01, m11


def reduced_dynamics_coeffs(theta: float, params: LinkageParams) -> DynamicsCoeffs:
    """Foot-channel coefficients at one joint angle.

    Obtained by eliminating the joint equation from the two-coordinate
    dynamics, so they satisfy
    M_f*xdd_f + M_f*g + beta*tau + C*thetadot^2 = F_c exactly for any
    trajectory of the simulated plant.
    """
    _check_theta(theta, params)
    _, jac, curv = _geometry(theta, params.l_upper, params.l_lower**2)
    m00, m01, m11 = _mass_matrix_entries(jac, params)
    # m11 >= 2*rotor_inertia > 0 by construction; guard anyway.
    assert m11 > 0.0, "singular joint-channel inertia"
    mb = params.m_body
    m_f = m00 - m01 * m01 / m11
    beta = -2.0 * m01 / m11
    c_coef = mb * curv * (1.0 - mb * jac * jac / m11)
    # d/dtheta of m01^2/m11 via the entry derivatives.
    d_m01 = mb * curv
    d_m11 = 2.0 * mb * jac * curv
    d_mf = -(2.0 * m01 * d_m01 * m11 - m01 * m01 * d_m11) / (m11 * m11)
    return DynamicsCoeffs(M_f=m_f, dMf_dtheta=d_mf, beta=beta, C_coef=c_coef)


def quasi_static_force(tau_per_motor: float, theta: float, params: LinkageParams) -> float:
    """Jacobian-transpose map from per-motor torque to vertical foot force.

    F = 2*tau/|dL/dtheta|; positive pushes the foot into the ground.
    Valid only when inertial and centrifugal terms are negligible.
    """
    jac = leg_jacobian(theta, params)
    if abs(jac) < JACOBIAN_EPSILON:
        raise SingularityError(
            f"|dL/dtheta|={abs(jac):.3g} below {JACOBIAN_EPSILON:g} at theta={theta:.6g}"
        )
    return 2.0 * tau_per_motor / abs(jac)


def solve_theta_for_length(length: float, params: LinkageParams) -> float:
    """Invert L(theta) = length by bisection; L is monotone on the workspace."""
    lo, hi = params.theta_min, params.theta_max
    l_lo = leg_length(lo, params)
    l_hi = leg_length(hi, params)
    if not (l_hi <= length <= l_lo):
        raise WorkspaceError(
            f"leg length {length:.6g} outside reachable range [{l_hi:.6g}, {l_lo:.6g}]"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if leg_length(mid, params) > length:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def weight_holding_torque(theta: float, params: LinkageParams) -> float:
    """Per-motor torque that statically supports the body weight at theta."""
    return 0.5 * params.m_body * GRAVITY * abs(leg_jacobian(theta, params))
