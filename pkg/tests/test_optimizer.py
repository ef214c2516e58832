import numpy as np
import pytest

from geomgait.optimizer import (Objective, fd_gradient, iterate_refine, model_displacement,
                                objective_eval, optimize_box, plant_displacement)
from geomgait.waveforms import ParamBox, params_to_array


def _quad(Q, b):
    return lambda x: float(x @ Q @ x + b @ x)


# ---------------------------------------------------------------------------
# objective

def test_lambda_zero_is_displacement(model, box):
    p = box.make(box.center)
    assert objective_eval(model, p, 0.0) == model_displacement(model, p)


def test_lambda_shift_is_linear(model, box):
    p = box.make(box.center)
    F0 = objective_eval(model, p, 0.1)
    F1 = objective_eval(model, p, 0.35)
    assert F0 - F1 == pytest.approx(0.25 * p.t_cycle, rel=1e-12)


def test_objective_identity():
    obj = Objective(lambda p: 0.0, 0.3)
    assert obj.value(1.25, 4.0) == 1.25 - 0.3 * 4.0


def test_negative_lambda_rejected():
    with pytest.raises(ValueError):
        Objective(lambda p: 0.0, -1.0)


@pytest.mark.parametrize("z", [[0.5, 0.5, 0.5, 0.5], [0, 1, 1, 0], [1, 0, 0, 1], [0.2, 0.8, 0.3, 0.9]])
def test_model_vs_plant_displacement(model, plant, box, cv_report, z):
    # relative budget: the held-out body-velocity error left over by the fit
    budget = 1.0 - cv_report.summary()["gamma_xi"]["mean"]
    p = box.make(box.from_unit(z))
    dm = model_displacement(model, p)
    dp = plant_displacement(plant, p)
    assert abs(dm - dp) <= budget * abs(dp) + 1e-4


# ---------------------------------------------------------------------------
# finite differences

def test_fd_quadratic_oracle():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(4, 4))
    Q, b = M + M.T, rng.normal(size=4)
    x = rng.normal(size=4)
    g = fd_gradient(_quad(Q, b), x, h=1e-3)
    np.testing.assert_allclose(g, 2 * Q @ x + b, atol=1e-9)


def test_fd_constant():
    assert np.all(fd_gradient(lambda x: 3.0, np.ones(3)) == 0)


def test_fd_richardson():
    f = lambda x: float(np.sin(x[0]) * np.exp(x[1]))
    x = np.array([0.4, 0.3])
    exact = np.array([np.cos(0.4) * np.exp(0.3), np.sin(0.4) * np.exp(0.3)])
    e1 = np.linalg.norm(fd_gradient(f, x, h=4e-2) - exact)
    e2 = np.linalg.norm(fd_gradient(f, x, h=1e-2) - exact)
    assert e1 / e2 == pytest.approx(16, rel=0.05)


def test_fd_one_sided_at_bound():
    seen = []

    def f(x):
        seen.append(x.copy())
        return float(x[0] ** 2)
    g = fd_gradient(f, np.array([1.0]), h=1e-3, lo=0.0, hi=1.0)
    assert all(s[0] <= 1.0 for s in seen)
    assert g[0] == pytest.approx(2.0, abs=2e-3)


def test_fd_nonfinite_raises():
    with pytest.raises(FloatingPointError):
        fd_gradient(lambda x: np.nan, np.zeros(2))


# ---------------------------------------------------------------------------
# box search (synthetic objectives on the swimmer parameter box)

def _on_params(g):
    return lambda p: g(params_to_array(p))


def test_concave_interior_optimum(box):
    z_star = np.array([0.3, 0.6, 0.45, 0.7])
    W = np.diag([1.0, 2.0, 0.5, 1.5])
    f = lambda x: -float((box.to_unit(x) - z_star) @ W @ (box.to_unit(x) - z_star))
    res = optimize_box(_on_params(f), box)
    assert np.max(np.abs(box.to_unit(res.x) - z_star)) < 1e-4
    assert res.F >= res.F0


def test_monotone_coordinate_at_upper_bound(box):
    f = lambda x: float(box.to_unit(x)[2]) - float(np.sum((box.to_unit(x)[[0, 1, 3]] - 0.5) ** 2))
    res = optimize_box(_on_params(f), box)
    assert res.x[2] == box.hi[2]


def test_optimal_start_returned(box):
    x0 = box.from_unit([0.2, 0.4, 0.6, 0.8])
    f = lambda x: -float(np.sum((box.to_unit(x) - box.to_unit(x0)) ** 2))
    res = optimize_box(_on_params(f), box, x0)
    np.testing.assert_allclose(res.x, x0, rtol=0, atol=1e-9 * np.max(box.width))
    assert res.n_iter <= 1


def test_start_outside_box_rejected(box):
    with pytest.raises(ValueError):
        optimize_box(lambda p: 0.0, box, box.hi + 1)


def test_affine_rescale_invariance(box):
    z_star = np.array([0.25, 0.8, 0.5, 0.4])
    f = lambda z: -float(np.sum((z - z_star) ** 2) + 0.3 * (z[0] - z_star[0]) * (z[2] - z_star[2]))
    a = optimize_box(lambda p: f(box.to_unit(params_to_array(p))), box)
    # t_cycle measured in different units: the box and the objective rescale together
    s = 3.0
    lo, hi = box.lo.copy(), box.hi.copy()
    lo[2] *= s
    hi[2] *= s
    scaled = ParamBox(box.family, lo, hi)
    b = optimize_box(lambda p: f(scaled.to_unit(params_to_array(p))), scaled)
    xb = b.x.copy()
    xb[2] /= s
    np.testing.assert_allclose(xb, a.x, atol=1e-6)


def test_all_evaluations_feasible(box):
    seen = []

    def f(p):
        x = params_to_array(p)
        seen.append(x)
        return -float(np.sum((box.to_unit(x) - 1.3) ** 2))
    res = optimize_box(f, box)
    assert all(box.contains(x) for x in seen)
    assert np.all(res.x >= box.lo) and np.all(res.x <= box.hi)
    np.testing.assert_array_equal(res.x, box.hi)


def test_cycle_time_pins_without_penalty(model, box):
    res = optimize_box(Objective(lambda p: model_displacement(model, p), 0.0), box)
    assert res.x[2] == box.hi[2]
    res = optimize_box(Objective(lambda p: model_displacement(model, p), 0.05), box)
    assert res.x[2] < box.hi[2]


# ---------------------------------------------------------------------------
# iterative refinement

@pytest.fixture(scope="module")
def short_history(plant, box):
    return iterate_refine(plant, box, n_iters=2, n_samples=30, lam=0.0, seed=4, cross_val=False)


def test_history_length_and_nesting(short_history, box):
    h = short_history
    assert len(h) == 2
    boxes = [ParamBox.from_dict(it.box) for it in h.iterations]
    assert boxes[0].to_dict() == box.to_dict()
    for outer, inner in zip(boxes, boxes[1:]):
        assert np.all(inner.lo >= outer.lo - 1e-12) and np.all(inner.hi <= outer.hi + 1e-12)
        np.testing.assert_allclose(inner.width, 0.65 * outer.width)


def test_history_feasible_and_consistent(short_history):
    for it in short_history.iterations:
        b = ParamBox.from_dict(it.box)
        assert b.contains(it.x_star)
        assert all(b.contains(x) for x in it.sampled)
        assert it.F_plant == it.dx_plant - it.lam * it.t_cycle
        assert it.F_pred == it.dx_pred - it.lam * it.t_cycle
        assert len(it.sampled) == 30


def test_iterate_refine_seeded(plant, box, short_history):
    again = iterate_refine(plant, box, n_iters=1, n_samples=30, lam=0.0, seed=4, cross_val=False)
    assert again.iterations[0].sampled == short_history.iterations[0].sampled
    assert again.iterations[0].x_star == short_history.iterations[0].x_star
