"""Trajectory integration, reference solution, and ensemble statistics."""

import numpy as np
import pytest

from photonfilters import (
    EnsembleResult,
    FilterState,
    MeasurementConfig,
    PulseShape,
    SCHEME_HP,
    SCHEME_ME,
    SCHEME_PP,
    SCHEME_QP,
    SCHEME_QQ,
    SCHEME_SH,
    SimulationConfig,
    SystemModel,
    beam_splitter,
    duality_scan,
    exceedance_fraction,
    oracle_compare,
    pe,
    run_ensemble,
    run_trajectory,
    solve_master,
    step_pp,
    step_qp,
    wilson_interval,
)

ME_PEAK = 0.8005563473200761  # Gaussian drive, Omega = 1.5, t0 = 3, kappa = 1


def _config(scheme=SCHEME_QP, r=0.25, n_traj=8, T=10.0, dt=1e-3, seed=7,
            pulse=None, model=None):
    return SimulationConfig(
        model=model if model is not None else SystemModel(),
        pulse=pulse if pulse is not None else PulseShape.gaussian(1.5, 3.0),
        measurement=MeasurementConfig(scheme, beam_splitter(r)),
        dt=dt, T=T, master_seed=seed, n_traj=n_traj)


# ---------------------------------------------------------------------------
# unconditional reference


def test_master_solution_peak_matches_frozen_value():
    sol = solve_master(_config())
    assert abs(sol.max_pe - ME_PEAK) < 1e-4
    assert abs(sol.t[int(np.argmax(sol.pe))] - 3.987) < 0.05
    tr = np.real(np.trace(sol.blocks[:, 0], axis1=1, axis2=2))
    assert np.max(np.abs(tr - 1.0)) < 1e-10


def test_master_solution_rising_pulse_reaches_full_excitation():
    # the time-reversed decay profile with gamma matched to kappa^2 excites
    # the atom completely at the pulse edge
    cfg = _config(pulse=PulseShape.exponential(1.0, 8.0, rising=True))
    sol = solve_master(cfg)
    assert sol.max_pe > 0.99
    assert sol.t[int(np.argmax(sol.pe))] <= 8.01


def test_master_solution_is_flat_without_drive():
    # a decaying pulse that only starts after the horizon never drives
    cfg = _config(T=5.0, pulse=PulseShape.exponential(1.0, 12.0))
    sol = solve_master(cfg)
    assert np.max(sol.pe) == 0.0
    assert np.max(np.abs(sol.blocks[-1] - sol.blocks[0])) == 0.0


def test_master_solver_rejects_scattering_models():
    model = SystemModel(S=np.array([[0, 1], [1, 0]], dtype=complex))
    with pytest.raises(ValueError, match="S = I"):
        solve_master(_config(model=model))


# ---------------------------------------------------------------------------
# boundary equivalences between schemes


def test_full_transmission_reduces_every_scheme_to_single_homodyne():
    # at r = 0 the second output carries nothing: the Q-P pair loses its P
    # channel and the mixed scheme's counter can never click
    sh = run_trajectory(_config(SCHEME_SH, r=0.0, T=3.0), 3)
    qp = run_trajectory(_config(SCHEME_QP, r=0.0, T=3.0), 3)
    hp = run_trajectory(_config(SCHEME_HP, r=0.0, T=3.0), 3)
    assert np.array_equal(sh.pe, qp.pe)
    assert np.array_equal(sh.pe, hp.pe)
    assert hp.jump2_times.size == 0
    assert np.array_equal(sh.trace_rho11, hp.trace_rho11)


# ---------------------------------------------------------------------------
# determinism and replay


def test_trajectory_reruns_bitwise_identical():
    a = run_trajectory(_config(T=2.0), 5)
    b = run_trajectory(_config(T=2.0), 5)
    assert np.array_equal(a.pe, b.pe)
    assert np.array_equal(a.increments.dW, b.increments.dW)
    assert np.array_equal(a.increments.uniforms, b.increments.uniforms)


def test_trajectory_record_replays_through_the_public_steppers():
    cfg = _config(SCHEME_QP, r=0.25, T=3.0)
    rec = run_trajectory(cfg, 2)
    xi = cfg.pulse.xi(rec.t)
    st = FilterState.initial()
    sb = cfg.measurement.splitter
    for k in range(cfg.n_steps):
        st = step_qp(cfg.model, st, complex(xi[k]), rec.increments.dW[k, 0],
                     rec.increments.dW[k, 1], cfg.dt, sb)
    assert abs(pe(st) - rec.pe[-1]) < 1e-15

    cfg = _config(SCHEME_PP, r=0.5, T=3.0)
    rec = run_trajectory(cfg, 2)
    xi = cfg.pulse.xi(rec.t)
    st = FilterState.initial()
    sb = cfg.measurement.splitter
    for k in range(cfg.n_steps):
        st = step_pp(cfg.model, st, complex(xi[k]), bool(rec.jump1[k + 1]),
                     bool(rec.jump2[k + 1]), cfg.dt, sb)
    assert abs(pe(st) - rec.pe[-1]) < 1e-15


def test_click_times_live_on_the_grid():
    cfg = _config(SCHEME_PP, r=0.5, T=6.0, n_traj=1)
    rec = run_trajectory(cfg, 11)
    for times, flags in ((rec.jump1_times, rec.jump1),
                         (rec.jump2_times, rec.jump2)):
        assert times.size == int(np.sum(flags))
        assert np.all(np.diff(times) > 0)
        assert np.all(np.isin(times, rec.t))


def test_ensemble_reruns_and_worker_counts_are_equivalent():
    # three chunks plus a remainder; threads must not change any bit
    cfg = _config(n_traj=300, T=1.0)
    a = run_ensemble(cfg)
    b = run_ensemble(cfg)
    c = run_ensemble(cfg, workers=4)
    assert np.array_equal(a.mean_pe, b.mean_pe)
    assert np.array_equal(a.mean_pe, c.mean_pe)
    assert np.array_equal(a.member_max_pe, c.member_max_pe)
    assert all(np.array_equal(x, y)
               for x, y in zip(a.jump1_flags, c.jump1_flags))


def test_ensemble_members_are_index_stable():
    # trajectory i is the same alone, in a small ensemble, or in a larger one
    big = run_ensemble(_config(n_traj=8, T=2.0), keep_members=3)
    small = run_ensemble(_config(n_traj=3, T=2.0), keep_members=3)
    assert np.array_equal(big.member_max_pe[:3], small.member_max_pe)
    assert np.array_equal(big.members_pe, small.members_pe)
    solo = run_trajectory(_config(T=2.0), 1)
    assert np.array_equal(big.members_pe[1], solo.pe)
    assert big.members_pe.shape == (3, big.t.size)
    assert small.n_traj == 3


def test_master_equation_scheme_tiles_the_reference():
    cfg = _config(SCHEME_ME, T=4.0, n_traj=5)
    res = run_ensemble(cfg, keep_members=2)
    assert np.allclose(res.mean_pe, np.clip(res.me_pe, 0.0, 1.0), atol=1e-15)
    assert np.array_equal(res.members_pe[0], res.members_pe[1])
    assert all(idx.size == 0 for idx in res.jump1_flags)


# ---------------------------------------------------------------------------
# statistics helpers


def _stats_result(member_max):
    member_max = np.asarray(member_max, dtype=float)
    t = np.arange(3) * 1.0
    return EnsembleResult(t=t, mean_pe=np.zeros(3), me_pe=np.zeros(3),
                          member_max_pe=member_max, n_traj=member_max.size,
                          members_pe=None, jump1_flags=[], jump2_flags=[],
                          diagnostics=[])


def test_exceedance_fraction_counts_peaks():
    res = _stats_result([0.95, 0.80, 0.99, 0.50])
    stats = exceedance_fraction(res, 0.9)
    assert stats.n_exceed == 2 and stats.n == 4
    assert stats.fraction == 0.5
    assert 0.0 < stats.ci_low <= stats.fraction <= stats.ci_high < 1.0
    # the threshold is inclusive
    assert exceedance_fraction(_stats_result([0.9]), 0.9).n_exceed == 1
    with pytest.raises(ValueError, match="threshold"):
        exceedance_fraction(res, 1.0)


def test_wilson_interval_limits():
    lo0, hi0 = wilson_interval(0, 20)
    assert lo0 == 0.0 and 0.0 < hi0 < 0.25
    lo1, hi1 = wilson_interval(20, 20)
    assert 0.75 < lo1 < 1.0 and hi1 == 1.0
    lo_mid, hi_mid = wilson_interval(10, 20)
    assert hi0 < lo_mid < 0.5 < hi_mid < lo1
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


# ---------------------------------------------------------------------------
# extended-system cross-check


def test_oracle_compare_tracks_the_reduced_filter():
    cfg = _config(SCHEME_QP, r=0.25, T=10.0, dt=2e-3, n_traj=1)
    out = oracle_compare(cfg)
    assert out["dt"] == 2e-3
    assert out["sup_deviation"] < 5e-3
    assert out["pe_reduced"].shape == out["pe_extended"].shape
    # the pulse has passed well before the horizon
    assert out["final_weight"] < 1e-6


def test_oracle_compare_rejects_counting_schemes():
    for scheme in (SCHEME_SH, SCHEME_HP, SCHEME_PP):
        with pytest.raises(ValueError, match="two-homodyne"):
            oracle_compare(_config(scheme, r=0.5, T=1.0))


def test_duality_scan_validates_draw_count():
    with pytest.raises(ValueError, match="n_draws"):
        duality_scan(n_draws=0)


# ---------------------------------------------------------------------------
# diagnostics and guard rails


def test_euler_negativity_is_flagged_not_silent():
    # full transmission keeps the conditional state nearly pure, where the
    # explicit scheme is known to push an eigenvalue slightly negative
    cfg = _config(SCHEME_QP, r=0.0, n_traj=8)
    with pytest.warns(UserWarning, match="diagnostic flags"):
        res = run_ensemble(cfg)
    flagged = [d for d in res.diagnostics if d["flags"]]
    assert flagged
    assert {d["index"] for d in res.diagnostics} == set(range(8))
    for d in res.diagnostics:
        assert set(d) >= {"index", "max_trace_drift", "min_eigenvalue", "flags"}


def test_thinning_bound_aborts_on_coarse_steps():
    # a unit-norm rectangular pulse over a short window gives K_p ~ 1/T at
    # t = 0, which a coarse dt pushes past the first-order thinning bound
    tab = PulseShape.tabulated(np.array([0.0, 0.1]), np.array([1.0, 1.0]))
    cfg = _config(SCHEME_PP, r=0.7071067811865476, T=0.05, dt=0.025,
                  pulse=tab, n_traj=1)
    with pytest.raises(ValueError, match="thinning bound"):
        run_trajectory(cfg, 0)


def test_simulation_config_validation():
    good = _config()
    assert good.n_steps == 10000
    assert good.grid().shape == (10001,)
    with pytest.raises(ValueError, match="dt"):
        _config(dt=0.0)
    with pytest.raises(ValueError, match="T"):
        _config(T=-1.0)
    with pytest.raises(ValueError, match="trajectories"):
        _config(n_traj=0)
    with pytest.raises(ValueError, match="seed"):
        _config(seed=-1)
    with pytest.raises(ValueError, match="thresholds"):
        SimulationConfig(model=SystemModel(), pulse=PulseShape.gaussian(1.5, 3.0),
                         measurement=MeasurementConfig(SCHEME_QP, beam_splitter(0.25)),
                         thresholds=(1.0,))
    scattering = SystemModel(S=np.array([[0, 1], [1, 0]], dtype=complex))
    with pytest.raises(ValueError, match="S = I"):
        _config(SCHEME_PP, r=0.5, model=scattering)
    with pytest.raises(ValueError, match="index"):
        run_trajectory(good, -1)
