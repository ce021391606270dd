"""Onboard-style state and contact-force estimation.

A discrete-time Kalman filter fuses the ToF height, the encoder-derived
body-foot displacement and rate, and the two IMU accelerations into the
four-state estimate (x_b, v_b, x_f, v_f).  A momentum observer on the
reduced foot channel then reconstructs the terrain contact force as the
residual of an internal momentum estimate, compensating inertia, gravity
and centrifugal effects without ever differentiating the velocity
estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import GRAVITY, JACOBIAN_EPSILON
from .errors import ConfigError
from .linkage import LinkageParams, leg_length, leg_jacobian, reduced_dynamics_coeffs
from .signals import smoothed_backward_difference
from .simulator import Frames, NoiseConfig

_H = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [1.0, 0.0, -1.0, 0.0],
        [0.0, 1.0, 0.0, -1.0],
    ]
)


@dataclass
class KalmanConfig:
    """Process/measurement covariances for the four-state kinematic filter."""

    Q: np.ndarray
    R: np.ndarray
    P0: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.P0 = np.asarray(self.P0, dtype=float)
        self.x0 = np.asarray(self.x0, dtype=float)
        for name, mat, dim in (("Q", self.Q, 4), ("R", self.R, 3), ("P0", self.P0, 4)):
            if mat.shape != (dim, dim):
                raise ValueError(f"{name} must be {dim}x{dim}")
            if not np.allclose(mat, mat.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(mat)) < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(self.R)) <= 0.0:
            raise ValueError("R must be positive definite")
        if self.x0.shape != (4,):
            raise ValueError("x0 must have 4 states")

    @classmethod
    def from_noise(
        cls,
        noise: NoiseConfig,
        linkage: LinkageParams,
        dt: float = 1e-3,
        x0: np.ndarray | None = None,
        p0_scale: float = 1e-2,
    ) -> "KalmanConfig":
        """Defaults: white-acceleration discretization of the IMU noise for Q,
        per-channel sensor variances for R."""
        sig_a = max(noise.imu_sigma, 1e-4)
        q_block = sig_a**2 * np.array(
            [[dt**4 / 4.0, dt**3 / 2.0], [dt**3 / 2.0, dt**2]]
        )
        Q = np.zeros((4, 4))
        Q[:2, :2] = q_block
        Q[2:, 2:] = q_block
        # Encoder noise maps through the Jacobian magnitude at mid-workspace.
        theta_mid = 0.5 * (linkage.theta_min + linkage.theta_max)
        jac_mid = abs(leg_jacobian(theta_mid, linkage))
        quant = noise.encoder_resolution / math.sqrt(12.0)
        sig_theta = math.sqrt(noise.encoder_sigma**2 + quant**2)
        sig_disp = max(jac_mid * sig_theta, 1e-6)
        sig_rate = max(math.sqrt(2.0) * sig_disp / (5.0 * dt), 1e-5)
        R = np.diag([max(noise.tof_sigma, 1e-5) ** 2, sig_disp**2, sig_rate**2])
        if x0 is None:
            x0 = np.zeros(4)
        return cls(Q=Q, R=R, P0=np.eye(4) * p0_scale, x0=np.asarray(x0, dtype=float))


@dataclass
class KalmanState:
    x_hat: np.ndarray
    P: np.ndarray
    t: float


@dataclass(frozen=True)
class ObserverState:
    """Momentum-observer internal state: momentum estimate and force residual."""

    p_hat: float
    r: float
    k_obs: float

    def __post_init__(self):
        if self.k_obs <= 0.0:
            raise ValueError("observer gain must be positive")


def kf_step(state: KalmanState, u_k, z_k, dt: float, config: KalmanConfig) -> KalmanState:
    """One predict/update cycle of the kinematic Kalman filter.

    u_k = (body, foot) IMU accelerations; z_k = (ToF body height,
    body-foot displacement, body-foot rate).  Covariance is propagated
    in Joseph form and symmetrized, so it stays PSD.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    u = np.asarray(u_k, dtype=float).reshape(2)
    z = np.asarray(z_k, dtype=float).reshape(3)
    A = np.array(
        [
            [1.0, dt, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, dt],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    B = np.array(
        [
            [0.5 * dt * dt, 0.0],
            [dt, 0.0],
            [0.0, 0.5 * dt * dt],
            [0.0, dt],
        ]
    )
    x_pred = A @ state.x_hat + B @ u
    P_pred = A @ state.P @ A.T + config.Q

    S = _H @ P_pred @ _H.T + config.R
    K = np.linalg.solve(S.T, (_H @ P_pred.T)).T  # P_pred H^T S^-1
    x_new = x_pred + K @ (z - _H @ x_pred)
    ikh = np.eye(4) - K @ _H
    P_new = ikh @ P_pred @ ikh.T + K @ config.R @ K.T
    P_new = 0.5 * (P_new + P_new.T)
    return KalmanState(x_hat=x_new, P=P_new, t=state.t + dt)


def psi(theta: float, theta_dot: float, v_f: float, tau: float, linkage_params: LinkageParams) -> float:
    """Drift term of the foot-momentum dynamics (everything except contact force).

    d(M_f * v_f)/dt = F_c + psi, so psi collects the inertia-gradient,
    gravity, torque and centrifugal contributions.
    """
    co = reduced_dynamics_coeffs(theta, linkage_params)
    return (
        co.dMf_dtheta * theta_dot * v_f
        - co.M_f * GRAVITY
        - co.beta * tau
        - co.C_coef * theta_dot * theta_dot
    )


def mo_step(
    obs: ObserverState,
    theta: float,
    theta_dot: float,
    v_f: float,
    tau: float,
    dt: float,
    linkage_params: LinkageParams,
) -> ObserverState:
    """Advance the momentum observer by one sample.

    The internal momentum integrates the drift plus the residual; the
    residual is the momentum mismatch scaled by the discrete gain
    (1 - exp(-k_obs*dt))/dt, which makes the sampled step response match
    the continuous first-order filter 1 - exp(-k_obs*t) exactly.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if dt * obs.k_obs >= 1.0:
        raise ConfigError(f"unstable observer discretization: dt*k_obs = {dt * obs.k_obs:.3g} >= 1")
    p_hat = obs.p_hat + dt * (psi(theta, theta_dot, v_f, tau, linkage_params) + obs.r)
    gain = (1.0 - math.exp(-obs.k_obs * dt)) / dt
    co = reduced_dynamics_coeffs(theta, linkage_params)
    r = gain * (co.M_f * v_f - p_hat)
    return ObserverState(p_hat=p_hat, r=r, k_obs=obs.k_obs)


def run_momentum_observer(
    t: np.ndarray,
    theta: np.ndarray,
    theta_dot: np.ndarray,
    v_f: np.ndarray,
    tau: np.ndarray,
    linkage_params: LinkageParams,
    k_obs: float = 800.0,
) -> np.ndarray:
    """Run the observer over aligned signal arrays; returns the force residual [N]."""
    n = len(t)
    r_series = np.zeros(n)
    co0 = reduced_dynamics_coeffs(float(theta[0]), linkage_params)
    obs = ObserverState(p_hat=co0.M_f * float(v_f[0]), r=0.0, k_obs=k_obs)
    for k in range(1, n):
        dt = float(t[k] - t[k - 1])
        obs = mo_step(
            obs, float(theta[k]), float(theta_dot[k]), float(v_f[k]), float(tau[k]), dt, linkage_params
        )
        r_series[k] = obs.r
    return r_series


def quasi_static_series(frames: Frames, linkage_params: LinkageParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame Jacobian-transpose force estimate from motor current.

    Returns (force [N], singular_mask); frames whose encoder angle sits at
    the extension singularity get NaN force and a raised mask bit.
    """
    if len(frames) == 0:
        raise ValueError("frames must be nonempty")
    theta = np.clip(frames.encoder_theta, linkage_params.theta_min, linkage_params.theta_max)
    tau = linkage_params.torque_constant * frames.motor_current
    force = np.empty(len(frames))
    singular = np.zeros(len(frames), dtype=bool)
    for i, (th, tq) in enumerate(zip(theta, tau)):
        jac = leg_jacobian(float(th), linkage_params)
        if abs(jac) < JACOBIAN_EPSILON:
            force[i] = np.nan
            singular[i] = True
        else:
            force[i] = 2.0 * tq / abs(jac)
    return force, singular


@dataclass
class EstimationSeries:
    """Time-aligned estimator outputs at the sensor rate."""

    t: np.ndarray
    x_b_hat: np.ndarray
    v_b_hat: np.ndarray
    x_f_hat: np.ndarray
    v_f_hat: np.ndarray
    f_qs: np.ndarray
    f_mo: np.ndarray
    qs_singular: np.ndarray

    def __len__(self) -> int:
        return self.t.size


def run_estimation(
    frames: Frames,
    linkage_params: LinkageParams,
    noise: NoiseConfig | None = None,
    kalman_config: KalmanConfig | None = None,
    k_obs: float = 800.0,
) -> EstimationSeries:
    """Full onboard pipeline over one trial's frames.

    The encoder rate is a 5-sample smoothed backward difference of the
    encoder angle; the Kalman filter runs at the frame rate; the momentum
    observer consumes raw encoder kinematics plus the filtered foot
    velocity.
    """
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    dt = float(frames.t[1] - frames.t[0])
    theta = np.clip(frames.encoder_theta, linkage_params.theta_min, linkage_params.theta_max)
    theta_dot = smoothed_backward_difference(theta, dt, window=5)

    lengths = np.array([leg_length(float(th), linkage_params) for th in theta])
    jacs = np.array([leg_jacobian(float(th), linkage_params) for th in theta])
    disp = lengths + linkage_params.mount_offset
    rate = jacs * theta_dot

    if kalman_config is None:
        x0 = np.array([frames.tof_height[0], 0.0, frames.tof_height[0] - disp[0], 0.0])
        kalman_config = KalmanConfig.from_noise(
            noise if noise is not None else NoiseConfig(), linkage_params, dt=dt, x0=x0
        )
    state = KalmanState(x_hat=kalman_config.x0.copy(), P=kalman_config.P0.copy(), t=float(frames.t[0]))

    n = len(frames)
    x_hat = np.zeros((n, 4))
    x_hat[0] = state.x_hat
    for k in range(1, n):
        u = (frames.imu_body_acc[k], frames.imu_foot_acc[k])
        z = (frames.tof_height[k], disp[k], rate[k])
        state = kf_step(state, u, z, dt, kalman_config)
        x_hat[k] = state.x_hat

    tau = linkage_params.torque_constant * frames.motor_current
    f_mo = run_momentum_observer(frames.t, theta, theta_dot, x_hat[:, 3], tau, linkage_params, k_obs)
    f_qs, singular = quasi_static_series(frames, linkage_params)
    return EstimationSeries(
        t=frames.t.copy(),
        x_b_hat=x_hat[:, 0],
        v_b_hat=x_hat[:, 1],
        x_f_hat=x_hat[:, 2],
        v_f_hat=x_hat[:, 3],
        f_qs=f_qs,
        f_mo=f_mo,
        qs_singular=singular,
    )
