import math

import numpy as np
import pytest

from hopperlab.constants import GRAVITY
from hopperlab.errors import ConfigError
from hopperlab.estimation import (
    EstimationSeries,
    KalmanConfig,
    KalmanState,
    ObserverState,
    kf_step,
    mo_step,
    psi,
    quasi_static_series,
    run_estimation,
    run_momentum_observer,
)
from hopperlab.linkage import LinkageParams, reduced_dynamics_coeffs
from hopperlab.simulator import Frames, NoiseConfig

from conftest import decimate_truth


def _default_kconfig(linkage, x0):
    return KalmanConfig.from_noise(NoiseConfig(), linkage, dt=1e-3, x0=np.asarray(x0, dtype=float))


# ---------------------------------------------------------------- Kalman


def test_kf_tracks_constant_velocity_exactly(linkage):
    cfg = _default_kconfig(linkage, [0.55, 0.0, 0.10, 0.0])
    state = KalmanState(x_hat=cfg.x0.copy(), P=cfg.P0.copy(), t=0.0)
    xb0, vb, xf0, vf = 0.60, 0.30, 0.15, 0.30
    for k in range(1, 4001):
        t = k * 1e-3
        xb, xf = xb0 + vb * t, xf0 + vf * t
        state = kf_step(state, (0.0, 0.0), (xb, xb - xf, vb - vf), 1e-3, cfg)
    err = np.abs(state.x_hat - np.array([xb, vb, xf, vf]))
    assert err.max() < 1e-9


def test_kf_tracks_free_fall_parabola_exactly(linkage):
    # B encodes constant-acceleration kinematics, so with exact inputs and
    # exact initial state the prediction is exact at every step.
    cfg = _default_kconfig(linkage, [1.0, 0.0, 0.55, 0.0])
    state = KalmanState(x_hat=cfg.x0.copy(), P=cfg.P0.copy(), t=0.0)
    for k in range(1, 1001):
        t = k * 1e-3
        xb = 1.0 - 0.5 * GRAVITY * t * t
        xf = 0.55 - 0.5 * GRAVITY * t * t
        vb = vf = -GRAVITY * t
        state = kf_step(state, (-GRAVITY, -GRAVITY), (xb, xb - xf, vb - vf), 1e-3, cfg)
    t = 1.0
    expected = np.array([1.0 - 0.5 * GRAVITY * t * t, -GRAVITY * t, 0.55 - 0.5 * GRAVITY * t * t, -GRAVITY * t])
    assert np.abs(state.x_hat - expected).max() < 1e-9


def test_kf_covariance_stays_psd_100k_random_steps(linkage):
    cfg = _default_kconfig(linkage, np.zeros(4))
    state = KalmanState(x_hat=np.zeros(4), P=cfg.P0.copy(), t=0.0)
    rng = np.random.default_rng(11)
    min_eig = np.inf
    for k in range(100_000):
        state = kf_step(state, rng.normal(size=2), rng.normal(size=3), 1e-3, cfg)
        if k % 200 == 0:
            assert np.allclose(state.P, state.P.T, atol=1e-14)
            min_eig = min(min_eig, np.linalg.eigvalsh(state.P).min())
    assert min_eig >= -1e-10


def test_kf_noisy_hop_accuracy(linkage, terrain, controller):
    # pooled over the default seeds: body-height RMSE well under the raw
    # ToF sigma, velocity far better than differencing the ToF
    from hopperlab import SimConfig, run_hop_trial

    sq_err_pos, sq_err_vel, sq_err_fd = [], [], []
    noise = NoiseConfig()
    for seed in range(3):
        log = run_hop_trial(SimConfig(drop_speed=0.8), controller, terrain, linkage, seed=seed)
        frames = Frames.from_list(log.frames)
        est = run_estimation(frames, linkage, noise=noise)
        truth = decimate_truth(log, n=len(est))
        skip = 100
        sq_err_pos.append((est.x_b_hat[skip:] - truth["x_b"][skip:]) ** 2)
        sq_err_vel.append((est.v_b_hat[skip:] - truth["v_b"][skip:]) ** 2)
        fd = np.diff(frames.tof_height) / np.diff(frames.t)
        sq_err_fd.append((fd[skip:] - truth["v_b"][skip + 1:]) ** 2)
    rmse_pos = math.sqrt(np.concatenate(sq_err_pos).mean())
    rmse_vel = math.sqrt(np.concatenate(sq_err_vel).mean())
    rmse_fd = math.sqrt(np.concatenate(sq_err_fd).mean())
    assert rmse_pos <= 0.2 * noise.tof_sigma
    assert rmse_vel <= rmse_fd


def test_kf_config_validation():
    with pytest.raises(ValueError):
        KalmanConfig(Q=np.eye(3), R=np.eye(3), P0=np.eye(4), x0=np.zeros(4))
    with pytest.raises(ValueError):
        KalmanConfig(Q=np.eye(4), R=np.zeros((3, 3)), P0=np.eye(4), x0=np.zeros(4))
    bad_q = np.eye(4)
    bad_q[0, 1] = 0.5  # asymmetric
    with pytest.raises(ValueError):
        KalmanConfig(Q=bad_q, R=np.eye(3), P0=np.eye(4), x0=np.zeros(4))


# ------------------------------------------------------- momentum observer


def test_psi_gravity_only(linkage):
    theta = 0.8
    co = reduced_dynamics_coeffs(theta, linkage)
    assert psi(theta, 0.0, 0.0, 0.0, linkage) == pytest.approx(-co.M_f * GRAVITY, rel=1e-12)


def test_psi_linear_in_torque(linkage):
    theta, theta_dot, v_f = 0.9, 2.0, -0.4
    co = reduced_dynamics_coeffs(theta, linkage)
    p0 = psi(theta, theta_dot, v_f, 0.0, linkage)
    p1 = psi(theta, theta_dot, v_f, 1.0, linkage)
    p2 = psi(theta, theta_dot, v_f, 2.0, linkage)
    assert p1 - p0 == pytest.approx(-co.beta, rel=1e-12)
    assert p2 - p1 == pytest.approx(p1 - p0, rel=1e-12)


def test_psi_recovers_contact_force_on_trajectory(noiseless_trial, linkage):
    # d(M_f v_f)/dt - psi equals the logged contact force
    truth = noiseless_trial.truth
    dt = truth.t[1] - truth.t[0]
    m_f = np.array([reduced_dynamics_coeffs(th, linkage).M_f for th in truth.theta])
    p_f = m_f * truth.v_f
    p_dot = np.gradient(p_f, dt)
    ids = truth.phase_id
    switch = np.flatnonzero(np.diff(ids) != 0)
    exclude = set()
    for s in switch:
        exclude.update(range(s - 2, s + 3))
    worst = 0.0
    z = -truth.x_f
    for i in range(2, len(truth.t) - 2, 13):
        if i in exclude or z[i] <= 1e-4 or abs(truth.v_f[i]) < 1e-3:
            continue
        value = p_dot[i] - psi(truth.theta[i], truth.theta_dot[i], truth.v_f[i], truth.tau[i], linkage)
        worst = max(worst, abs(value - truth.f_total[i]))
    assert worst < 1e-2


def test_mo_step_response_exact_at_dtk_02(linkage):
    # discrete step response equals 1 - exp(-k_obs t) sampled
    k_obs, dt, f0 = 200.0, 1e-3, 10.0
    theta = 0.8
    co = reduced_dynamics_coeffs(theta, linkage)
    obs = ObserverState(p_hat=0.0, r=0.0, k_obs=k_obs)
    v = 0.0
    worst = 0.0
    for k in range(1, 80):
        v += dt * (f0 / co.M_f - GRAVITY)
        obs = mo_step(obs, theta, 0.0, v, 0.0, dt, linkage)
        exact = f0 * (1.0 - math.exp(-k_obs * k * dt))
        worst = max(worst, abs(obs.r - exact) / f0)
    assert worst < 0.01


def test_mo_zero_input_decay(linkage):
    # ballistic flight (zero contact force): the residual decays below 0.1 N
    k_obs, dt = 800.0, 1e-3
    theta = 0.8
    obs = ObserverState(p_hat=0.05, r=40.0, k_obs=k_obs)
    v = 0.0
    for _ in range(200):
        v -= dt * GRAVITY
        obs = mo_step(obs, theta, 0.0, v, 0.0, dt, linkage)
    assert abs(obs.r) < 0.1


def test_mo_unstable_discretization_rejected(linkage):
    obs = ObserverState(p_hat=0.0, r=0.0, k_obs=1200.0)
    with pytest.raises(ConfigError):
        mo_step(obs, 0.8, 0.0, 0.0, 0.0, 1e-3, linkage)
    with pytest.raises(ValueError):
        ObserverState(p_hat=0.0, r=0.0, k_obs=-5.0)


def test_mo_truth_kinematics_stance_rmse(noiseless_trial, linkage):
    truth = decimate_truth(noiseless_trial)
    r = run_momentum_observer(
        truth["t"], truth["theta"], truth["theta_dot"], truth["v_f"], truth["tau"], linkage, k_obs=800.0
    )
    ev = noiseless_trial.events
    stance = (truth["t"] >= ev.t_td) & (truth["t"] <= ev.t_lo)
    rmse = math.sqrt(np.mean((r[stance] - truth["f_total"][stance]) ** 2))
    assert rmse <= 0.02 * truth["f_total"].max()


def test_mo_with_kf_inputs_degrades_gracefully(noisy_trial, noisy_frames, linkage):
    # estimated inputs cost at most 2x the truth-input RMSE
    truth = decimate_truth(noisy_trial, n=len(noisy_frames))
    ev = noisy_trial.events
    stance = (truth["t"] >= ev.t_td) & (truth["t"] <= ev.t_lo)
    r_truth = run_momentum_observer(
        truth["t"], truth["theta"], truth["theta_dot"], truth["v_f"], truth["tau"], linkage, k_obs=800.0
    )
    rmse_truth = math.sqrt(np.mean((r_truth[stance] - truth["f_total"][stance]) ** 2))
    est = run_estimation(noisy_frames, linkage)
    rmse_kf = math.sqrt(np.mean((est.f_mo[: len(truth["t"])][stance] - truth["f_total"][stance]) ** 2))
    assert rmse_kf <= 2.0 * rmse_truth


# ------------------------------------------------------------ QS baseline


def test_qs_series_zero_current(noiseless_frames, linkage):
    frames = Frames(
        t=noiseless_frames.t,
        encoder_theta=noiseless_frames.encoder_theta,
        encoder_theta_dot=noiseless_frames.encoder_theta_dot,
        imu_body_acc=noiseless_frames.imu_body_acc,
        imu_foot_acc=noiseless_frames.imu_foot_acc,
        tof_height=noiseless_frames.tof_height,
        motor_current=np.zeros_like(noiseless_frames.motor_current),
        loadcell_force=noiseless_frames.loadcell_force,
    )
    f_qs, singular = quasi_static_series(frames, linkage)
    assert np.all(f_qs[~singular] == 0.0)


def test_qs_matches_loadcell_in_statics(linkage):
    # a held, loaded pose: the QS estimate differs from the measured
    # contact force by exactly the foot weight (which the torque channel
    # cannot see), far from its dynamic-regime errors
    theta = 0.8
    from hopperlab.linkage import weight_holding_torque

    tau = weight_holding_torque(theta, linkage)
    n = 50
    frames = Frames(
        t=np.arange(n) * 1e-3,
        encoder_theta=np.full(n, theta),
        encoder_theta_dot=np.zeros(n),
        imu_body_acc=np.zeros(n),
        imu_foot_acc=np.zeros(n),
        tof_height=np.full(n, 0.5),
        motor_current=np.full(n, tau / linkage.torque_constant),
        loadcell_force=np.full(n, (linkage.m_body + linkage.m_foot) * GRAVITY),
    )
    f_qs, _ = quasi_static_series(frames, linkage)
    foot_weight = linkage.m_foot * GRAVITY
    assert np.allclose(f_qs, linkage.m_body * GRAVITY, rtol=1e-9)
    assert np.abs(f_qs - frames.loadcell_force).max() == pytest.approx(foot_weight, rel=1e-9)


def test_qs_worse_than_mo_at_touchdown(linkage, terrain, controller):
    # the ordering the whole pipeline exists to demonstrate
    from hopperlab import SimConfig, run_hop_trial

    log = run_hop_trial(
        SimConfig(drop_speed=1.2), controller, terrain, linkage, seed=0, noise_config=NoiseConfig.noiseless()
    )
    truth = decimate_truth(log)
    ev = log.events
    frames = Frames.from_list(log.frames)
    n = len(frames.t)
    stance = (truth["t"][:n] >= ev.t_td) & (truth["t"][:n] <= ev.t_lo)
    f_qs, _ = quasi_static_series(frames, linkage)
    r = run_momentum_observer(
        truth["t"][:n], truth["theta"][:n], truth["theta_dot"][:n], truth["v_f"][:n], truth["tau"][:n], linkage, 800.0
    )
    f_true = truth["f_total"][:n]
    rmse_qs = math.sqrt(np.mean((f_qs[stance] - f_true[stance]) ** 2))
    rmse_mo = math.sqrt(np.mean((r[stance] - f_true[stance]) ** 2))
    assert rmse_mo < rmse_qs
    # touchdown window specifically
    td_win = (truth["t"][:n] >= ev.t_td) & (truth["t"][:n] <= ev.t_td + 0.05)
    err_qs = np.abs(f_qs[td_win] - f_true[td_win]).mean()
    err_mo = np.abs(r[td_win] - f_true[td_win]).mean()
    assert err_mo < err_qs


def test_mo_beats_qs_on_every_noiseless_sweep_speed(linkage, terrain, controller):
    from hopperlab import SimConfig, run_hop_trial

    for speed in (0.2, 0.5, 0.8, 1.0, 1.2):
        log = run_hop_trial(
            SimConfig(drop_speed=speed), controller, terrain, linkage, seed=0, noise_config=NoiseConfig.noiseless()
        )
        truth = decimate_truth(log)
        frames = Frames.from_list(log.frames)
        n = len(frames.t)
        ev = log.events
        stance = (truth["t"][:n] >= ev.t_td) & (truth["t"][:n] <= ev.t_lo)
        f_qs, _ = quasi_static_series(frames, linkage)
        r = run_momentum_observer(
            truth["t"][:n], truth["theta"][:n], truth["theta_dot"][:n], truth["v_f"][:n], truth["tau"][:n], linkage, 800.0
        )
        f_true = truth["f_total"][:n]
        rmse_qs = math.sqrt(np.mean((f_qs[stance] - f_true[stance]) ** 2))
        rmse_mo = math.sqrt(np.mean((r[stance] - f_true[stance]) ** 2))
        assert rmse_mo < rmse_qs


def test_pipeline_noiseless_tracks_truth(noiseless_frames, noiseless_trial, linkage):
    est = run_estimation(noiseless_frames, linkage, noise=NoiseConfig.noiseless())
    truth = decimate_truth(noiseless_trial, n=len(est))
    assert np.abs(est.x_b_hat - truth["x_b"]).max() < 2e-3
    assert np.abs(est.v_f_hat[50:] - truth["v_f"][50:]).max() < 0.05


def test_pipeline_requires_two_frames(noiseless_frames, linkage):
    short = Frames(**{k: getattr(noiseless_frames, k)[:1] for k in (
        "t", "encoder_theta", "encoder_theta_dot", "imu_body_acc", "imu_foot_acc",
        "tof_height", "motor_current", "loadcell_force")})
    with pytest.raises(ValueError):
        run_estimation(short, linkage)
