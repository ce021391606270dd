"""Coupled body-foot-terrain dynamics, the intrusion rig, and the sensor model.

The truth plant integrates the two-coordinate (foot height, joint angle)
dynamics with fixed-step RK4 at 10 kHz.  While the foot penetrates, the
entrained grain mass is folded into the foot-channel inertia so the
acceleration-proportional part of the reaction never appears as a force
of unknown acceleration; the logged contact force is then algebraically
identical to the reaction law evaluated at the logged (z, zd, zdd).
Sensors are synthesized at 1 kHz by decimating the truth trajectory and
applying quantization, bias and white noise per channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .constants import GRAVITY
from .controller import ControllerConfig, Phase, PhaseName, next_phase
from .errors import SimulationError, TrialMalformedError, ConfigError
from .linkage import LinkageParams, _geometry, solve_theta_for_length
from .signals import OnlineSmoothedDiff
from .terrain import TerrainParams, ForceDecomposition, added_mass_profile


@dataclass(frozen=True)
class SimConfig:
    """Truth-integration and trial protocol settings."""

    dt_truth: float = 1e-4          # RK4 step [s]
    sensor_rate_hz: float = 1000.0  # proprioceptive sampling rate
    t_max: float = 2.0              # hard stop [s]
    post_liftoff_time: float = 0.1  # keep integrating this long after liftoff [s]
    drop_speed: float = 0.8         # target touchdown speed [m/s]
    seed: int = 0

    def __post_init__(self):
        if self.dt_truth <= 0.0 or self.sensor_rate_hz <= 0.0:
            raise ValueError("dt_truth and sensor_rate_hz must be positive")
        ratio = 1.0 / (self.sensor_rate_hz * self.dt_truth)
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError(
                f"sensor period must be an integer multiple of dt_truth (ratio {ratio:.6g})"
            )
        if self.t_max <= 0.0 or self.post_liftoff_time < 0.0:
            raise ValueError("t_max must be positive and post_liftoff_time nonnegative")
        if self.drop_speed < 0.0:
            raise ValueError("drop_speed must be nonnegative")

    @property
    def decimation(self) -> int:
        return round(1.0 / (self.sensor_rate_hz * self.dt_truth))

    @property
    def sensor_period(self) -> float:
        return 1.0 / self.sensor_rate_hz


@dataclass(frozen=True)
class NoiseConfig:
    """Sensor corruption levels; `enabled=False` gives ideal sensors."""

    enabled: bool = True
    encoder_resolution: float = 2.0 * math.pi / 4096.0  # [rad]
    encoder_sigma: float = 1e-3    # [rad]
    imu_sigma: float = 0.2         # [m/s^2]
    imu_bias_max: float = 0.05     # [m/s^2], per-trial uniform bias
    tof_sigma: float = 5e-3        # [m]
    current_sigma: float = 0.05    # [A]
    loadcell_sigma: float = 0.5    # [N]

    @classmethod
    def noiseless(cls) -> "NoiseConfig":
        return cls(
            enabled=False,
            encoder_resolution=0.0,
            encoder_sigma=0.0,
            imu_sigma=0.0,
            imu_bias_max=0.0,
            tof_sigma=0.0,
            current_sigma=0.0,
            loadcell_sigma=0.0,
        )


@dataclass(frozen=True)
class HopperState:
    """Truth state at one instant; body coordinates follow the closure."""

    x_b: float
    v_b: float
    x_f: float
    v_f: float
    theta: float
    theta_dot: float
    phase: Phase
    t: float


@dataclass(frozen=True)
class SensorFrame:
    """One 1 kHz proprioceptive sample."""

    t: float
    encoder_theta: float
    encoder_theta_dot: float
    imu_body_acc: float
    imu_foot_acc: float
    tof_height: float
    motor_current: float
    loadcell_force: float


@dataclass(frozen=True)
class Derivative:
    """Time derivative of the truth state plus contact diagnostics."""

    a_b: float
    a_f: float
    theta_ddot: float
    force: ForceDecomposition


@dataclass
class TruthSeries:
    """Columnar truth log at the integration rate."""

    t: np.ndarray
    x_b: np.ndarray
    v_b: np.ndarray
    x_f: np.ndarray
    v_f: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    acc_b: np.ndarray
    acc_f: np.ndarray
    f_static: np.ndarray
    f_drag: np.ndarray
    f_added: np.ndarray
    f_total: np.ndarray
    tau: np.ndarray
    f_leg: np.ndarray
    phase_id: np.ndarray

    def __len__(self) -> int:
        return self.t.size


@dataclass(frozen=True)
class TrialEvents:
    """Touchdown, compression-extension transition and liftoff timestamps [s]."""

    t_td: float
    t_ce: float
    t_lo: float
    v_td: float  # touchdown speed, positive downward [m/s]


@dataclass
class TrialLog:
    frames: list[SensorFrame]
    truth: TruthSeries
    events: TrialEvents
    config: dict
    seed: object
    clamp_events: int = 0  # steps where the no-tension clamp changed the dynamics


@dataclass
class Frames:
    """Columnar view of a frame sequence (what the estimators consume)."""

    t: np.ndarray
    encoder_theta: np.ndarray
    encoder_theta_dot: np.ndarray
    imu_body_acc: np.ndarray
    imu_foot_acc: np.ndarray
    tof_height: np.ndarray
    motor_current: np.ndarray
    loadcell_force: np.ndarray

    @classmethod
    def from_list(cls, frames: list[SensorFrame]) -> "Frames":
        cols = {
            name: np.array([getattr(f, name) for f in frames], dtype=float)
            for name in (
                "t",
                "encoder_theta",
                "encoder_theta_dot",
                "imu_body_acc",
                "imu_foot_acc",
                "tof_height",
                "motor_current",
                "loadcell_force",
            )
        }
        return cls(**cols)

    def __len__(self) -> int:
        return self.t.size


@dataclass
class IntrusionLog:
    """Constant-speed penetration record from the kinematic rig."""

    speed: float
    t: np.ndarray
    depth: np.ndarray
    force: np.ndarray
    seed: object = None


def _accelerations(
    x_f: float,
    v_f: float,
    theta: float,
    theta_dot: float,
    tau: float,
    lk: LinkageParams,
    tr: TerrainParams,
) -> tuple[float, float, float, float, float, float, float, bool]:
    """Solve the 2x2 system for (a_f, theta_ddot); returns contact diagnostics.

    Returns (a_f, theta_ddot, a_b, f_static, f_drag, f_added, f_total, clamped).
    """
    _, jac, curv = _geometry(theta, lk.l_upper, lk.l_lower * lk.l_lower)
    mb = lk.m_body
    mf = lk.m_foot
    m00 = mb + mf
    m01 = mb * jac
    m11 = mb * jac * jac + 2.0 * lk.rotor_inertia
    thd_sq = theta_dot * theta_dot
    rhs_f = -(mb + mf) * GRAVITY - mb * curv * thd_sq
    rhs_t = -2.0 * tau - mb * jac * curv * thd_sq - mb * GRAVITY * jac

    z = tr.surface_height - x_f
    z_dot = -v_f
    penetrating = z > 0.0 and z_dot >= 0.0
    withdrawing = z > 0.0 and z_dot < 0.0
    m_a = dm_a = 0.0
    if penetrating:
        m_a, dm_a = added_mass_profile(z, tr)
        m00 += m_a
        rhs_f += tr.k_stiff * z + dm_a * z_dot * z_dot
    elif withdrawing:
        rhs_f += tr.k_stiff * z

    det = m00 * m11 - m01 * m01
    a_f = (rhs_f * m11 - m01 * rhs_t) / det
    theta_ddot = (m00 * rhs_t - m01 * rhs_f) / det

    clamped = False
    if penetrating:
        f_static = tr.k_stiff * z
        f_drag = dm_a * z_dot * z_dot
        f_added = m_a * (-a_f)
        f_total = f_static + f_drag + f_added
        if f_total < 0.0:
            # Grains cannot pull the foot down: drop all terrain coupling
            # and re-solve as if detached (rare complementarity corner).
            clamped = True
            m00 = mb + mf
            rhs_f = -(mb + mf) * GRAVITY - mb * curv * thd_sq
            det = m00 * m11 - m01 * m01
            a_f = (rhs_f * m11 - m01 * rhs_t) / det
            theta_ddot = (m00 * rhs_t - m01 * rhs_f) / det
            f_static = f_drag = f_added = f_total = 0.0
    elif withdrawing:
        f_static = tr.k_stiff * z
        f_drag = f_added = 0.0
        f_total = f_static
    else:
        f_static = f_drag = f_added = f_total = 0.0

    a_b = a_f + jac * theta_ddot + curv * thd_sq
    return a_f, theta_ddot, a_b, f_static, f_drag, f_added, f_total, clamped


def dynamics_derivative(
    state: HopperState,
    tau: float,
    terrain_params: TerrainParams,
    linkage_params: LinkageParams,
) -> Derivative:
    """Exact state derivative at one instant for a given per-motor torque."""
    a_f, thdd, a_b, fs, fd, fa, ft, _ = _accelerations(
        state.x_f, state.v_f, state.theta, state.theta_dot, tau, linkage_params, terrain_params
    )
    return Derivative(
        a_b=a_b,
        a_f=a_f,
        theta_ddot=thdd,
        force=ForceDecomposition(fs, fd, fa, ft),
    )


def state_from_foot_channel(
    x_f: float,
    v_f: float,
    theta: float,
    theta_dot: float,
    phase: Phase,
    t: float,
    linkage: LinkageParams,
) -> HopperState:
    """Build a full state honoring the kinematic closure."""
    length, jac, _ = _geometry(theta, linkage.l_upper, linkage.l_lower**2)
    return HopperState(
        x_b=x_f + length + linkage.mount_offset,
        v_b=v_f + jac * theta_dot,
        x_f=x_f,
        v_f=v_f,
        theta=theta,
        theta_dot=theta_dot,
        phase=phase,
        t=t,
    )


def mechanical_energy(state: HopperState, linkage: LinkageParams) -> float:
    """Kinetic plus gravitational energy of the body-foot-rotor system [J]."""
    _, jac, _ = _geometry(state.theta, linkage.l_upper, linkage.l_lower**2)
    mb, mf = linkage.m_body, linkage.m_foot
    v_b = state.v_f + jac * state.theta_dot
    kinetic = (
        0.5 * mb * v_b * v_b
        + 0.5 * mf * state.v_f * state.v_f
        + linkage.rotor_inertia * state.theta_dot * state.theta_dot
    )
    potential = mb * GRAVITY * state.x_b + mf * GRAVITY * state.x_f
    return kinetic + potential


class SensorSampler:
    """Stateful 1 kHz sensor model: quantization, per-trial bias, white noise.

    With `enabled=False` every channel reports truth exactly (ideal
    sensors); otherwise the encoder rate is a 5-sample smoothed backward
    difference of the quantized angle, matching what a motor driver
    reports.
    """

    def __init__(self, noise: NoiseConfig, linkage: LinkageParams, rng: np.random.Generator, dt: float):
        self.noise = noise
        self.linkage = linkage
        self.rng = rng
        if noise.enabled:
            self.bias_body = rng.uniform(-noise.imu_bias_max, noise.imu_bias_max)
            self.bias_foot = rng.uniform(-noise.imu_bias_max, noise.imu_bias_max)
        else:
            self.bias_body = 0.0
            self.bias_foot = 0.0
        self._rate = OnlineSmoothedDiff(dt=dt, window=5)

    def sample(
        self,
        t: float,
        theta: float,
        theta_dot: float,
        acc_body: float,
        acc_foot: float,
        x_b: float,
        tau: float,
        contact_force: float,
    ) -> SensorFrame:
        n = self.noise
        if not n.enabled:
            return SensorFrame(
                t=t,
                encoder_theta=theta,
                encoder_theta_dot=theta_dot,
                imu_body_acc=acc_body,
                imu_foot_acc=acc_foot,
                tof_height=x_b,
                motor_current=tau / self.linkage.torque_constant,
                loadcell_force=contact_force,
            )
        rng = self.rng
        if n.encoder_resolution > 0.0:
            enc = round(theta / n.encoder_resolution) * n.encoder_resolution
        else:
            enc = theta
        enc += rng.normal(0.0, n.encoder_sigma) if n.encoder_sigma > 0.0 else 0.0
        enc_rate = self._rate.update(enc)
        return SensorFrame(
            t=t,
            encoder_theta=enc,
            encoder_theta_dot=enc_rate,
            imu_body_acc=acc_body + self.bias_body + rng.normal(0.0, n.imu_sigma),
            imu_foot_acc=acc_foot + self.bias_foot + rng.normal(0.0, n.imu_sigma),
            tof_height=x_b + rng.normal(0.0, n.tof_sigma),
            motor_current=tau / self.linkage.torque_constant + rng.normal(0.0, n.current_sigma),
            loadcell_force=contact_force + rng.normal(0.0, n.loadcell_sigma),
        )


def sample_sensors(
    state: HopperState,
    acc_body: float,
    acc_foot: float,
    contact_force: float,
    tau: float,
    noise_config: NoiseConfig,
    rng: np.random.Generator,
    linkage: LinkageParams,
    dt: float = 1e-3,
) -> SensorFrame:
    """One-shot sensor sample (fresh sampler; no rate/bias history)."""
    sampler = SensorSampler(noise_config, linkage, rng, dt)
    return sampler.sample(
        state.t, state.theta, state.theta_dot, acc_body, acc_foot, state.x_b, tau, contact_force
    )


def detect_events(truth: TruthSeries, surface_height: float = 0.0) -> TrialEvents:
    """Locate touchdown, compression-extension transition and liftoff.

    TD is the first sample with positive penetration; CE the controller's
    compression-to-extension switch; LO the last sample with positive
    contact force before the controller returns to flight.
    """
    z = surface_height - truth.x_f
    contact_idx = np.flatnonzero(z > 0.0)
    if contact_idx.size == 0:
        raise TrialMalformedError("no touchdown: foot never penetrated the surface")
    i_td = int(contact_idx[0])

    phase = truth.phase_id
    ce_idx = np.flatnonzero(
        (phase[:-1] == int(PhaseName.COMPRESSION)) & (phase[1:] == int(PhaseName.EXTENSION))
    )
    if ce_idx.size == 0:
        raise TrialMalformedError("no compression-extension transition found")
    i_ce = int(ce_idx[0]) + 1

    flight_after = np.flatnonzero((np.arange(phase.size) > i_ce) & (phase == int(PhaseName.FLIGHT)))
    if flight_after.size == 0:
        raise TrialMalformedError("no liftoff: controller never returned to flight")
    i_flight = int(flight_after[0])
    loaded = np.flatnonzero(truth.f_total[:i_flight] > 0.0)
    if loaded.size == 0:
        raise TrialMalformedError("no liftoff: no loaded samples before flight")
    i_lo = int(loaded[-1])

    t_td, t_ce, t_lo = truth.t[i_td], truth.t[i_ce], truth.t[i_lo]
    if not (t_td < t_ce < t_lo):
        raise TrialMalformedError(
            f"events out of order: td={t_td:.4f} ce={t_ce:.4f} lo={t_lo:.4f}"
        )
    return TrialEvents(t_td=float(t_td), t_ce=float(t_ce), t_lo=float(t_lo), v_td=float(-truth.v_f[i_td]))


def run_hop_trial(
    sim_config: SimConfig,
    controller_config: ControllerConfig,
    terrain_params: TerrainParams,
    linkage_params: LinkageParams,
    seed=None,
    noise_config: NoiseConfig | None = None,
) -> TrialLog:
    """Integrate one drop-release hop and synthesize its sensor frames.

    The hopper is released from rest with the leg at its compression
    neutral length, at the height that yields the configured touchdown
    speed.  Deterministic for a fixed seed.
    """
    noise = noise_config if noise_config is not None else NoiseConfig()
    if seed is None:
        seed = sim_config.seed
    rng = np.random.default_rng(seed)

    lk = linkage_params
    tr = terrain_params
    cc = controller_config
    dt = sim_config.dt_truth
    decim = sim_config.decimation
    n_max = int(round(sim_config.t_max / dt))

    theta0 = solve_theta_for_length(cc.l0_compress, lk)
    drop_h = sim_config.drop_speed**2 / (2.0 * GRAVITY)
    x_f = tr.surface_height + drop_h
    v_f = 0.0
    theta = theta0
    theta_dot = 0.0
    phase = Phase(PhaseName.FLIGHT, 0.0)

    sampler = SensorSampler(noise, lk, rng, sim_config.sensor_period)
    l1 = lk.l_upper
    l2_sq = lk.l_lower * lk.l_lower
    th_lo, th_hi = lk.theta_min, lk.theta_max

    # spring selection per phase: (k, l0, damping)
    spring = {
        int(PhaseName.FLIGHT): (cc.k_compress, cc.l0_compress, cc.b_flight),
        int(PhaseName.COMPRESSION): (cc.k_compress, cc.l0_compress, cc.b_stance),
        int(PhaseName.EXTENSION): (cc.k_extend, cc.l0_extend, cc.b_stance),
    }

    cols: dict[str, list[float]] = {
        name: []
        for name in (
            "t", "x_b", "v_b", "x_f", "v_f", "theta", "theta_dot", "acc_b", "acc_f",
            "f_static", "f_drag", "f_added", "f_total", "tau", "f_leg", "phase_id",
        )
    }
    frames: list[SensorFrame] = []
    clamp_events = 0
    f_prev = 0.0
    t = 0.0
    t_stop = sim_config.t_max

    def stage(xf, vf, th, thd, k_spr, l0_spr, b_spr):
        length, jac, _ = _geometry(th, l1, l2_sq)
        l_rate = jac * thd
        f_leg = k_spr * (l0_spr - length) - b_spr * l_rate
        tau = 0.5 * f_leg * abs(jac)
        out = _accelerations(xf, vf, th, thd, tau, lk, tr)
        return out, tau, f_leg, length, l_rate

    for step in range(n_max):
        length, jac, _ = _geometry(theta, l1, l2_sq)
        l_rate = jac * theta_dot
        new_phase = next_phase(
            phase, length, l_rate, x_f, v_f, f_prev, t, cc, tr.surface_height
        )
        if new_phase.name != phase.name:
            phase = new_phase
            if phase.name == PhaseName.FLIGHT:
                t_stop = min(t_stop, t + sim_config.post_liftoff_time)
        k_spr, l0_spr, b_spr = spring[int(phase.name)]

        (a_f, thdd, a_b, fs, fd, fa, ft, clamped), tau, f_leg, length, l_rate = stage(
            x_f, v_f, theta, theta_dot, k_spr, l0_spr, b_spr
        )
        if clamped:
            clamp_events += 1
        f_prev = ft

        v_b = v_f + jac * theta_dot
        x_b = x_f + length + lk.mount_offset
        for name, val in (
            ("t", t), ("x_b", x_b), ("v_b", v_b), ("x_f", x_f), ("v_f", v_f),
            ("theta", theta), ("theta_dot", theta_dot), ("acc_b", a_b), ("acc_f", a_f),
            ("f_static", fs), ("f_drag", fd), ("f_added", fa), ("f_total", ft),
            ("tau", tau), ("f_leg", f_leg), ("phase_id", float(int(phase.name))),
        ):
            cols[name].append(val)

        if step % decim == 0:
            frames.append(
                sampler.sample(
                    (step // decim) * sim_config.sensor_period,
                    theta, theta_dot, a_b, a_f, x_b, tau, ft,
                )
            )

        # RK4 with the phase (and spring law) frozen across the step
        k1 = (v_f, a_f, theta_dot, thdd)
        (a2, tdd2, *_), _, _, _, _ = stage(
            x_f + 0.5 * dt * k1[0], v_f + 0.5 * dt * k1[1],
            theta + 0.5 * dt * k1[2], theta_dot + 0.5 * dt * k1[3],
            k_spr, l0_spr, b_spr,
        )
        k2 = (v_f + 0.5 * dt * k1[1], a2, theta_dot + 0.5 * dt * k1[3], tdd2)
        (a3, tdd3, *_), _, _, _, _ = stage(
            x_f + 0.5 * dt * k2[0], v_f + 0.5 * dt * k2[1],
            theta + 0.5 * dt * k2[2], theta_dot + 0.5 * dt * k2[3],
            k_spr, l0_spr, b_spr,
        )
        k3 = (v_f + 0.5 * dt * k2[1], a3, theta_dot + 0.5 * dt * k2[3], tdd3)
        (a4, tdd4, *_), _, _, _, _ = stage(
            x_f + dt * k3[0], v_f + dt * k3[1],
            theta + dt * k3[2], theta_dot + dt * k3[3],
            k_spr, l0_spr, b_spr,
        )
        k4 = (v_f + dt * k3[1], a4, theta_dot + dt * k3[3], tdd4)

        x_f += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        v_f += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        theta += dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        theta_dot += dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        t = (step + 1) * dt

        if not (math.isfinite(x_f) and math.isfinite(v_f) and math.isfinite(theta) and math.isfinite(theta_dot)):
            raise SimulationError(f"state became non-finite at t={t:.6f} s")
        if not (th_lo <= theta <= th_hi):
            raise SimulationError(
                f"joint angle {theta:.4f} left workspace [{th_lo}, {th_hi}] at t={t:.6f} s"
            )
        if t >= t_stop:
            break

    truth = TruthSeries(**{name: np.asarray(vals, dtype=float) for name, vals in cols.items()})
    truth.phase_id = truth.phase_id.astype(int)
    events = detect_events(truth, tr.surface_height)
    return TrialLog(
        frames=frames,
        truth=truth,
        events=events,
        config={
            "sim": asdict(sim_config),
            "controller": asdict(cc),
            "terrain": asdict(tr),
            "linkage": asdict(lk),
            "noise": asdict(noise),
        },
        seed=seed,
        clamp_events=clamp_events,
    )


def run_constant_speed_intrusion(
    speed: float,
    z_max: float,
    terrain_params: TerrainParams,
    noise_config: NoiseConfig | None = None,
    seed=0,
    sample_rate_hz: float = 1000.0,
) -> IntrusionLog:
    """Drive the foot kinematically at constant speed down to z_max.

    The recorded force is the reaction law at (z, v, 0) plus load-cell
    noise when enabled; deterministic for a fixed seed.
    """
    if speed <= 0.0:
        raise ValueError("speed must be positive")
    if z_max <= 0.0:
        raise ValueError("z_max must be positive")
    noise = noise_config if noise_config is not None else NoiseConfig.noiseless()
    rng = np.random.default_rng(seed)
    dt = 1.0 / sample_rate_hz
    n = int(math.floor(z_max / (speed * dt))) + 1
    t = np.arange(n) * dt
    depth = np.minimum(speed * t, z_max)
    grad = terrain_params.m_a_inf / terrain_params.z_c * np.exp(-depth / terrain_params.z_c)
    force = np.where(depth > 0.0, terrain_params.k_stiff * depth + grad * speed * speed, 0.0)
    if noise.enabled and noise.loadcell_sigma > 0.0:
        force = force + rng.normal(0.0, noise.loadcell_sigma, size=n)
    return IntrusionLog(speed=float(speed), t=t, depth=depth, force=force, seed=seed)
