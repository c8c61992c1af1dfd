import numpy as np
import pytest

from pdpmf.data import SparseRatings
from pdpmf.dp import (
    PerturbedObjective,
    draw_noise,
    perturbed_grad_v,
    perturbed_objective_value,
    run_dp_pmf,
    run_plain_pmf,
    train_dp_v,
)
from pdpmf.exceptions import PreconditionError
from pdpmf.metrics import rmse
from pdpmf.noise import resolve_sensitivity
from pdpmf.pmf import FactorModel, TrainConfig, objective, train_pmf

from conftest import brute_objective, central_difference, random_instance


def _unit_ball(U):
    return U / np.maximum(np.linalg.norm(U, axis=0), 1.0)


def _po(rng, data, model, noise_scale=1.0, lam=(0.1, 0.2)):
    noise = noise_scale * rng.standard_normal(model.V.shape)
    return PerturbedObjective(data, _unit_ball(model.U), noise, *lam)


def test_zero_noise_equals_plain_objective(rng):
    data, model = random_instance(rng)
    po = _po(rng, data, model, noise_scale=0.0)
    cfg = TrainConfig(lambda_u=0.1, lambda_v=0.2)
    expected = objective(data, FactorModel(po.U, model.V), cfg)
    assert perturbed_objective_value(po, model.V) == pytest.approx(expected, rel=1e-12)


def test_zero_items(rng):
    data, model = random_instance(rng)
    po = _po(rng, data, model)
    V0 = np.zeros_like(model.V)
    expected = 0.5 * np.sum(data.ratings**2) + 0.05 * np.sum(po.U**2)
    assert perturbed_objective_value(po, V0) == pytest.approx(expected, rel=1e-12)


def test_matches_double_loop(rng):
    for _ in range(10):
        data, model = random_instance(rng)
        po = _po(rng, data, model)
        expected = brute_objective(data, po.U, model.V, 0.1, 0.2, noise=po.noise)
        assert abs(perturbed_objective_value(po, model.V) - expected) <= 1e-9 * max(1, abs(expected))


def test_perturbed_gradient_finite_differences(rng):
    data, model = random_instance(rng, n_users=10, n_items=8)
    po = _po(rng, data, model)
    for j in range(data.num_items):
        def f(x, j=j):
            V = model.V.copy()
            V[:, j] = x
            return perturbed_objective_value(po, V)
        fd = central_difference(f, model.V[:, j])
        an = perturbed_grad_v(po, model.V, j)
        assert np.linalg.norm(an - fd) / max(np.linalg.norm(fd), 1.0) < 1e-5


def test_user_norm_precondition(rng):
    data, model = random_instance(rng, n_users=4, n_items=3, d=2)
    U = model.U.copy()
    U[:, 0] = [3.0, 0.0]
    with pytest.raises(PreconditionError):
        train_dp_v(data, U, model.V, 1.0, TrainConfig(d=2))


def test_scalar_closed_form():
    """One item, d=1: the minimizer is (sum u_i r_i - eta) / (sum u_i^2 + lambda_v)."""
    data = SparseRatings(3, 1, [0, 1, 2], [0, 0, 0], [4.0, 2.0, 5.0])
    U = np.array([[0.9, -0.4, 0.7]])
    eta = np.array([[0.8]])
    cfg = TrainConfig(d=1, gamma=0.5, lambda_v=0.1, k2=200, grad_normalization=False)
    V = train_dp_v(data, U, np.zeros((1, 1)), 1.0, cfg, noise=eta)
    expected = (U[0] @ data.ratings - 0.8) / (U[0] @ U[0] + 0.1)
    assert V[0, 0] == pytest.approx(expected, abs=1e-6)


def test_stationarity_at_convergence(rng):
    data, model = random_instance(rng, n_users=12, n_items=6, d=2)
    cfg = TrainConfig(d=2, gamma=0.05, lambda_v=0.5, k2=3000, grad_normalization=False)
    U = _unit_ball(model.U)
    noise = draw_noise(data, 1.0, cfg)
    V = train_dp_v(data, U, model.V, 1.0, cfg, noise=noise)
    po = PerturbedObjective(data, U, noise, cfg.lambda_u, cfg.lambda_v)
    worst = max(np.linalg.norm(perturbed_grad_v(po, V, j)) for j in range(6))
    assert worst <= 1e-6


def test_zero_noise_reduction_is_bitwise(rng):
    data, model = random_instance(rng)
    cfg = TrainConfig(d=model.d, gamma=0.01, grad_normalization=False)
    U = _unit_ball(model.U)
    a = train_dp_v(data, U, model.V, None, cfg)
    b = train_dp_v(data, U, model.V, 1.0, cfg, noise=np.zeros_like(model.V))
    assert a.tobytes() == b.tobytes()


def test_vanishing_noise_matches_nonprivate_phase2(rng):
    data, _ = random_instance(rng, n_users=20, n_items=15)
    cfg = TrainConfig(d=3, gamma=0.01, k1=50, grad_normalization=False)
    p1 = train_pmf(data, cfg)
    a = train_dp_v(data, p1.U, p1.V, None, cfg)
    b = train_dp_v(data, p1.U, p1.V, 1e9, cfg)
    assert np.abs(a - b).max() <= 1e-3


def test_deterministic_and_noise_keyed_by_item(rng):
    data, model = random_instance(rng)
    cfg = TrainConfig(d=model.d, seed=5)
    a, b = draw_noise(data, 0.5, cfg), draw_noise(data, 0.5, cfg)
    assert a.tobytes() == b.tobytes()
    # dropping an item leaves the other items' noise untouched
    keep = data.items != 0
    sub = SparseRatings(data.num_users, data.num_items - 1, data.users[keep],
                        data.items[keep] - 1, data.ratings[keep],
                        item_ids=data.item_ids[1:])
    np.testing.assert_array_equal(draw_noise(sub, 0.5, cfg), a[:, 1:])


def test_per_iteration_mode_redraws(rng):
    data, model = random_instance(rng, n_users=10, n_items=5, d=2)
    U = _unit_ball(model.U)
    fixed = TrainConfig(d=2, k2=5, gamma=0.01, grad_normalization=False)
    per = fixed.replace(noise_mode="per_iteration")
    a = train_dp_v(data, U, model.V, 1.0, fixed)
    b = train_dp_v(data, U, model.V, 1.0, per)
    c = train_dp_v(data, U, model.V, 1.0, per)
    assert not np.allclose(a, b)
    assert b.tobytes() == c.tobytes()


def test_run_dp_pmf_metadata(rng):
    data, _ = random_instance(rng, n_users=15, n_items=12)
    model = run_dp_pmf(data, 0.5, TrainConfig(d=3, k1=5, k2=5))
    assert model.publishable == ("V",) and model.is_private
    assert model.config["delta"] == 5.0 and model.config["epsilon"] == 0.5
    assert resolve_sensitivity("add_remove", data.rating_min, data.rating_max) == 5.0


def test_dp_degrades_utility_on_fold(ml100k):
    from pdpmf.data import split_folds

    tr, te = split_folds(ml100k, 10, seed=0).train_test(0)
    train, test = ml100k.subset(tr), ml100k.subset(te)
    cfg = TrainConfig()
    plain = rmse(run_plain_pmf(train, cfg), test)
    private = rmse(run_dp_pmf(train, 0.1, cfg), test)
    near = rmse(run_dp_pmf(train, 1e9, cfg), test)
    assert private > plain
    assert abs(near - plain) <= 0.05 * plain
