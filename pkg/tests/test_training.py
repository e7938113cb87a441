import json

import numpy as np
import pytest

from gramflow.dataset import Dataset, generate_sphere_dataset
from gramflow.relu_dynamics import (
    ShallowReluNet,
    Trajectory,
    TrainingDiverged,
    check_convergence_bound,
    check_gradient_decay,
    check_lambda_floor,
    gram_infinity,
    init_net,
    lambda0,
    load_trajectory,
    predict,
    train_discrete,
    train_ode,
)


def fitted_dataset(net, base):
    """Labels equal to the net's own predictions: an exact fixed point."""
    u = predict(net, base.X)
    return Dataset(X=base.X, y=u, C=float(np.max(np.abs(u))) * 2 + 1)


# ---------------------------------------------------------------- discrete


def test_fixed_point_trajectory_is_constant():
    base = generate_sphere_dataset(n=6, d=4, seed=1)
    net = init_net(d=4, m=32, seed=2)
    data = fitted_dataset(net, base)
    traj = train_discrete(net, data, steps=50, record_every=10)
    assert np.all(traj.residual_sq == 0.0)
    assert np.all(traj.loss == 0.0)
    assert np.all(traj.max_weight_drift == 0.0)
    assert np.all(traj.max_grad_norm == 0.0)


def test_discrete_loss_strictly_decreases():
    data = generate_sphere_dataset(n=16, d=5, seed=0)
    net = init_net(d=5, m=4096, seed=0)
    traj = train_discrete(net, data, steps=200, record_every=10)
    assert np.all(np.diff(traj.loss) < 0.0)


def test_huge_eta_diverges_with_step_index():
    data = generate_sphere_dataset(n=8, d=4, seed=5)
    net = init_net(d=4, m=64, seed=5)
    with pytest.raises(TrainingDiverged) as exc:
        train_discrete(net, data, eta=1e6, steps=500)
    assert exc.value.step >= 1
    assert str(exc.value.step) in str(exc.value)


def test_eta_validation():
    data = generate_sphere_dataset(n=4, d=3, seed=0)
    net = init_net(d=3, m=8, seed=0)
    with pytest.raises(ValueError):
        train_discrete(net, data, eta=-1.0, steps=10)
    with pytest.raises(ValueError):
        train_discrete(net, data, steps=-1)


def test_zero_steps_gives_single_record():
    data = generate_sphere_dataset(n=4, d=3, seed=0)
    net = init_net(d=3, m=8, seed=0)
    traj = train_discrete(net, data, steps=0)
    assert len(traj) == 1
    assert traj.times[0] == 0.0


def test_record_plan_includes_start_and_end():
    data = generate_sphere_dataset(n=5, d=3, seed=1)
    net = init_net(d=3, m=16, seed=1)
    traj = train_discrete(net, data, eta=0.01, steps=25, record_every=10)
    np.testing.assert_allclose(traj.times, np.array([0, 10, 20, 25]) * 0.01)


def test_discrete_determinism():
    data = generate_sphere_dataset(n=6, d=4, seed=2)
    a = train_discrete(init_net(d=4, m=32, seed=3), data, steps=40)
    b = train_discrete(init_net(d=4, m=32, seed=3), data, steps=40)
    assert a.residual_sq.tobytes() == b.residual_sq.tobytes()
    assert a.final_net.W.tobytes() == b.final_net.W.tobytes()


# ---------------------------------------------------------------- ode


def test_ode_loss_non_increasing():
    data = generate_sphere_dataset(n=8, d=4, seed=4)
    net = init_net(d=4, m=128, seed=4)
    lam0 = lambda0(gram_infinity(data.X))
    traj = train_ode(net, data, T=2.0 / lam0, record_every=5, lambda0_value=lam0)
    assert np.all(np.diff(traj.loss) <= 1e-9)


def test_ode_hits_horizon_exactly():
    data = generate_sphere_dataset(n=4, d=3, seed=1)
    net = init_net(d=3, m=16, seed=1)
    traj = train_ode(net, data, T=0.7, h=0.2, record_every=1)
    assert traj.times[-1] == pytest.approx(0.7, rel=1e-12)


def test_rk4_is_fourth_order_on_kink_free_run():
    # Labels sit 1e-4 from the initial predictions, so the weight drift
    # (~5e-5) never reaches the smallest preactivation margin (~5e-3) and
    # the flow stays inside one activation cell where the field is smooth.
    data0 = generate_sphere_dataset(n=4, d=3, seed=0)
    net = init_net(d=3, m=64, seed=100)
    lam0 = lambda0(gram_infinity(data0.X))
    u0 = predict(net, data0.X)
    delta = 1e-4 * np.random.default_rng(0).choice([-1.0, 1.0], size=4)
    y = u0 + delta
    data = Dataset(X=data0.X, y=y, C=float(np.max(np.abs(y))) * 2 + 1)

    T, h = 2.0 / lam0, 0.2 / lam0
    runs = [train_ode(net, data, T=T, h=hh, record_every=10**9, lambda0_value=lam0)
            for hh in (h, h / 2, h / 4)]
    margin = float(np.min(np.abs(net.W @ data.X)))
    drift = max(float(tr.max_weight_drift[-1]) for tr in runs)
    assert margin > 10.0 * drift  # no activation flip was possible

    r = [tr.residual_sq[-1] for tr in runs]
    order = np.log2(abs((r[0] - r[1]) / (r[1] - r[2])))
    assert 3.5 < order < 4.8


def test_euler_tracks_rk4_at_small_step():
    data = generate_sphere_dataset(n=8, d=5, seed=3)
    lam0 = lambda0(gram_infinity(data.X))
    net = init_net(d=5, m=500, seed=7)
    h = 2e-3 / lam0
    steps = 500
    gd = train_discrete(net, data, eta=h, steps=steps, record_every=25, lambda0_value=lam0)
    ode = train_ode(net, data, T=steps * h, h=h, record_every=25, lambda0_value=lam0)
    np.testing.assert_allclose(gd.times, ode.times, rtol=1e-12)
    rel = np.abs(gd.residual_sq - ode.residual_sq) / ode.residual_sq
    assert np.max(rel) < 0.05


def test_ode_parameter_validation():
    data = generate_sphere_dataset(n=4, d=3, seed=0)
    net = init_net(d=3, m=8, seed=0)
    with pytest.raises(ValueError):
        train_ode(net, data, T=0.0)
    with pytest.raises(ValueError):
        train_ode(net, data, T=1.0, h=-0.1)


# ---------------------------------------------------------------- serialization


def test_trajectory_roundtrip(tmp_path):
    data = generate_sphere_dataset(n=5, d=3, seed=6)
    traj = train_discrete(init_net(d=3, m=16, seed=6), data, steps=30, record_every=10)
    csv_path = tmp_path / "run.csv"
    sidecar = traj.save(csv_path)
    assert sidecar == tmp_path / "run.json"
    meta = json.loads(sidecar.read_text())
    assert meta["integrator"] == "discrete_gd"
    assert meta["n"] == 5 and meta["m"] == 16 and meta["d"] == 3

    back = load_trajectory(csv_path)
    for name in ("times", "loss", "residual_sq", "lambda_min_H",
                 "max_weight_drift", "max_grad_norm"):
        np.testing.assert_array_equal(getattr(back, name), getattr(traj, name))
    assert back.meta == traj.meta

    back.save(tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == csv_path.read_bytes()


def test_load_trajectory_rejects_wrong_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        load_trajectory(p)


def test_trajectory_field_length_mismatch_rejected():
    with pytest.raises(ValueError):
        Trajectory(times=np.array([0.0, 1.0]), loss=np.array([1.0]),
                   residual_sq=np.array([1.0, 0.5]), lambda_min_H=np.array([0.1, 0.1]),
                   max_weight_drift=np.array([0.0, 0.1]), max_grad_norm=np.array([1.0, 0.5]),
                   meta={})


def test_trajectory_times_must_increase():
    ones = np.ones(2)
    with pytest.raises(ValueError):
        Trajectory(times=np.array([1.0, 0.0]), loss=ones, residual_sq=ones,
                   lambda_min_H=ones, max_weight_drift=ones, max_grad_norm=ones, meta={})


# ---------------------------------------------------------------- bound checks


def synthetic_traj(times, residual_sq, lam_min=None, n=4, m=100):
    k = len(times)
    lam = np.full(k, 0.5) if lam_min is None else np.asarray(lam_min, dtype=float)
    return Trajectory(times=np.asarray(times, dtype=float),
                      loss=0.5 * np.asarray(residual_sq, dtype=float),
                      residual_sq=np.asarray(residual_sq, dtype=float),
                      lambda_min_H=lam,
                      max_weight_drift=np.linspace(0, 0.1, k),
                      max_grad_norm=np.zeros(k),
                      meta={"n": n, "m": m, "lambda0": 0.5})


def test_envelope_margin_equals_slack_at_t0():
    lam0 = 0.5
    t = np.array([0.0, 1.0, 2.0])
    rsq = 4.0 * np.exp(-2.0 * lam0 * t)  # decays faster than the envelope
    rep = check_convergence_bound(synthetic_traj(t, rsq), lam0, slack=1.5)
    assert rep.passed
    assert rep.margin == pytest.approx(1.5)
    assert rep.worst_time == 0.0


def test_envelope_violations_with_inflated_rate():
    lam0 = 0.5
    t = np.array([0.0, 1.0, 2.0, 3.0])
    rsq = 4.0 * np.exp(-lam0 * t)  # matches the true envelope exactly
    rep = check_convergence_bound(synthetic_traj(t, rsq), 10.0 * lam0, slack=1.0)
    assert not rep.passed
    assert rep.n_violations == 3
    assert rep.first_violation_time == pytest.approx(1.0)


def test_envelope_holds_on_real_wide_run():
    data = generate_sphere_dataset(n=6, d=4, seed=9)
    lam0 = lambda0(gram_infinity(data.X))
    net = init_net(d=4, m=2000, seed=9)
    traj = train_ode(net, data, T=5.0 / lam0, record_every=10, lambda0_value=lam0)
    rep = check_convergence_bound(traj, lam0, slack=1.0)
    assert rep.passed, str(rep)


def test_lambda_floor_report_on_tiny_net_does_not_abort():
    data = generate_sphere_dataset(n=10, d=4, seed=3)
    lam0 = lambda0(gram_infinity(data.X))
    net = init_net(d=4, m=16, seed=3)
    traj = train_ode(net, data, T=1.0 / lam0, record_every=10, lambda0_value=lam0)
    rep = check_lambda_floor(traj, lam0)
    assert isinstance(rep.passed, bool)
    assert rep.n_points == len(traj)
    assert rep.extras["floor"] == pytest.approx(lam0 / 2)
    if not rep.passed:
        assert rep.first_violation_time is not None


def test_lambda_floor_detects_dips():
    t = np.array([0.0, 1.0, 2.0])
    # floor is 0.5; entries 0.5, 0.2, 0.5 -> only the middle one violates
    rep = check_lambda_floor(
        synthetic_traj(t, np.ones(3), lam_min=np.array([0.5, 0.2, 0.5])), 1.0)
    assert not rep.passed
    assert rep.n_violations == 1
    assert rep.worst_time == pytest.approx(1.0)


def test_gradient_decay_zero_violations_on_real_run():
    data = generate_sphere_dataset(n=8, d=4, seed=11)
    net = init_net(d=4, m=64, seed=11)
    traj = train_discrete(net, data, steps=100, record_every=5)
    rep = check_gradient_decay(traj)
    assert rep.passed, str(rep)
    assert rep.n_violations == 0


def test_gradient_decay_zero_residual_counts_as_infinite_room():
    base = generate_sphere_dataset(n=4, d=3, seed=12)
    net = init_net(d=3, m=8, seed=12)
    data = fitted_dataset(net, base)
    traj = train_discrete(net, data, steps=10, record_every=5)
    rep = check_gradient_decay(traj)
    assert rep.passed
    assert rep.margin == np.inf
