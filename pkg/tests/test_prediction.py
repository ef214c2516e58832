import numpy as np
import pytest
from hypothesis import given, strategies as st

from geomgait import se2
from geomgait.prediction import (PipelineConfig, baseline_predict, cross_validate, cycle_slices,
                                 evaluate_cycles, gamma_metric, predict)
from geomgait.waveforms import synth_waveform

DT = 1 / 128


def _amplitude(r):
    return np.sqrt(np.mean(np.sum((r - r.mean(axis=0)) ** 2, axis=1)))


# ---------------------------------------------------------------------------
# predict / baseline

def test_nominal_tracks_limit_cycle(nominal_model, box):
    u = synth_waveform(box.make(box.center), DT, 3)
    pr = predict(nominal_model, u.u, DT, cycle_starts=u.cycle_starts)
    theta = nominal_model.limit_cycle.r(pr.phi)
    err = np.sqrt(np.mean(np.sum((pr.r_hat - theta) ** 2, axis=1)))
    assert err < 0.02 * _amplitude(theta)


def test_unperturbed_fit_is_degenerate(nominal_model):
    assert nominal_model.body.degenerate.all()
    assert nominal_model.actuator.degenerate.all()


def test_zero_input_perturbation_stays_on_cycle(nominal_model, box):
    p = box.make(box.center)
    u = synth_waveform(p, DT, 3)
    phi = nominal_model.phase_map(np.interp(u.t, u.cycle_starts, 2 * np.pi * np.arange(4)))
    u_on = nominal_model.limit_cycle.u(phi)
    pr = predict(nominal_model, u_on, DT, cycle_starts=u.cycle_starts)
    theta = nominal_model.limit_cycle.r(pr.phi)
    assert np.max(np.linalg.norm(pr.r_hat - theta, axis=1)) < 0.02 * _amplitude(theta)


def test_nominal_baseline_matches_predict(nominal_model, box):
    u = synth_waveform(box.make(box.center), DT, 2)
    pr = predict(nominal_model, u.u, DT, cycle_starts=u.cycle_starts)
    bl = baseline_predict(nominal_model, u.u, DT, cycle_starts=u.cycle_starts)
    np.testing.assert_allclose(pr.xi_hat, bl.xi_hat, atol=1e-12)
    np.testing.assert_allclose(pr.g_hat, bl.g_hat, atol=1e-12)


def test_euler_first_order(model, box):
    finals = []
    for dt in (1 / 64, 1 / 128, 1 / 256, 1 / 512):
        u = synth_waveform(box.make(box.center), dt, 2)
        finals.append(predict(model, u.u, dt, cycle_starts=u.cycle_starts).g_hat[-1])
    d = np.linalg.norm(np.diff(finals, axis=0), axis=1)
    np.testing.assert_allclose(d[:-1] / d[1:], 2.0, rtol=0.1)


def test_prediction_lengths_and_pose_consistency(model, centre_input):
    u = centre_input
    pr = predict(model, u.u, DT, cycle_starts=u.cycle_starts)
    n = len(u.u)
    for name in ("t", "u", "phi", "r_hat", "r_dot_hat", "xi_hat", "g_hat"):
        assert len(getattr(pr, name)) == n
    np.testing.assert_allclose(se2.integrate_poses(pr.xi_hat[:-1], DT), pr.g_hat, atol=1e-12)


def test_prediction_needs_schedule(model):
    with pytest.raises(ValueError):
        predict(model, np.zeros(100), DT)


def test_baseline_input_independent(model, centre_input):
    u = centre_input
    a = baseline_predict(model, u.u, DT, cycle_starts=u.cycle_starts)
    b = baseline_predict(model, -0.3 * u.u + 0.1, DT, cycle_starts=u.cycle_starts)
    np.testing.assert_array_equal(a.xi_hat, b.xi_hat)
    np.testing.assert_array_equal(a.r_hat, b.r_hat)


def test_first_order_beats_baseline_on_shapes(model, prep):
    rng = np.random.default_rng(0)
    cycles = sorted(rng.choice(prep.traj.n_cycles, 20, replace=False).tolist())
    slices = cycle_slices(prep)
    err_m, err_b = [], []
    for k in cycles:
        i0, i1 = slices[k]
        pc, u = prep.phi_clock[i0:i1], prep.meas.u[i0:i1]
        truth = prep.meas.r[i0:i1]
        pm = predict(model, u, DT, phi_clock=pc)
        pb = baseline_predict(model, u, DT, phi_clock=pc)
        err_m.append(np.sqrt(np.mean(np.sum((pm.r_hat - truth) ** 2, axis=1))))
        err_b.append(np.sqrt(np.mean(np.sum((pb.r_hat - truth) ** 2, axis=1))))
    assert np.mean(err_b) >= np.mean(err_m)


def test_g0_equivariance(model, centre_input):
    u = centre_input
    h = np.array([1.5, -0.7, 2.0])
    a = predict(model, u.u, DT, cycle_starts=u.cycle_starts)
    b = predict(model, u.u, DT, cycle_starts=u.cycle_starts, g0=h)
    np.testing.assert_array_equal(a.xi_hat, b.xi_hat)
    np.testing.assert_allclose(se2.compose(h, a.g_hat), b.g_hat, atol=1e-10)


def test_exp_integrator_flag(model, centre_input):
    u = centre_input
    pe = predict(model, u.u, DT, cycle_starts=u.cycle_starts, integrator="exp")
    np.testing.assert_allclose(se2.integrate_poses(pe.xi_hat[:-1], DT, method="exp"), pe.g_hat,
                               atol=1e-12)


# ---------------------------------------------------------------------------
# gamma

def test_gamma_trivial_cases():
    rng = np.random.default_rng(0)
    truth = rng.normal(size=(50, 3))
    base = truth + rng.normal(size=(50, 3))
    assert gamma_metric(truth, base, truth) == 1.0
    assert gamma_metric(base, base, truth) == 0.0
    pred = truth + 2 * (base - truth)
    assert gamma_metric(pred, base, truth) == pytest.approx(-1.0)
    assert gamma_metric(base, truth, truth) == float("-inf")


@given(st.floats(1e-3, 1e3))
def test_gamma_scale_invariant(s):
    rng = np.random.default_rng(1)
    a, b, c = rng.normal(size=(3, 40, 2))
    assert gamma_metric(s * a, s * b, s * c) == pytest.approx(gamma_metric(a, b, c), rel=1e-9)


def test_gamma_rejects_mismatch():
    with pytest.raises(ValueError):
        gamma_metric(np.zeros((3, 2)), np.zeros((4, 2)), np.zeros((3, 2)))


# ---------------------------------------------------------------------------
# cross-validation

def test_folds_hold_out_ten_cycles(cv_report):
    assert len(cv_report.folds) == 10
    held = []
    for f in cv_report.folds:
        assert len(f.test_cycles) == 10
        held.extend(f.test_cycles)
    assert sorted(held) == list(range(100))


def test_fold_assignment_deterministic(prep):
    cfg = PipelineConfig()
    small = cross_validate(prep, PipelineConfig(folds=5), seed=3)
    again = cross_validate(prep, PipelineConfig(folds=5), seed=3)
    assert [f.test_cycles for f in small.folds] == [f.test_cycles for f in again.folds]
    np.testing.assert_array_equal(small.gamma_xi, again.gamma_xi)
    assert cfg.folds == 10


def test_cv_gamma_positive(cv_report):
    s = cv_report.summary()
    assert s["gamma_rdot"]["mean"] > 0
    assert s["gamma_xi"]["mean"] > 0


def test_cv_too_few_cycles(prep):
    with pytest.raises(ValueError):
        cross_validate(prep, PipelineConfig(), folds=101)


def test_phase_error_rows(cv_report, prep):
    rows = cv_report.phase_error
    assert rows.shape == (len(prep.traj.t), 6)
    assert np.all((rows[:, 1] >= 0) & (rows[:, 1] < 2 * np.pi))


def test_error_propagates_from_shape_velocity(model, prep):
    """Body velocity from true shapes is closer to the truth than from predicted shapes."""
    rng = np.random.default_rng(2)
    cycles = sorted(rng.choice(prep.traj.n_cycles, 20, replace=False).tolist())
    cat, _ = evaluate_cycles(model, prep, cycles)
    slices = cycle_slices(prep)
    idx = np.concatenate([np.arange(*slices[k]) for k in cycles])
    phi = prep.phi[idx]
    lc = model.limit_cycle
    q = model.query(phi)
    dr = prep.meas.r[idx] - lc.r(phi)
    ddr = prep.meas.r_dot[idx] - lc.r_dot(phi)
    xi_true_shapes = (q["C"] + np.einsum("nki,ni->nk", q["B"], dr)
                      + np.einsum("nki,ni->nk", q["A"], ddr)
                      + np.einsum("nkij,ni,nj->nk", q["dA"], dr, ddr))
    truth = cat["xi_t"]
    e_true = np.sum(np.linalg.norm(xi_true_shapes - truth, axis=1))
    e_pred = np.sum(np.linalg.norm(cat["xi_m"] - truth, axis=1))
    assert e_true <= e_pred
