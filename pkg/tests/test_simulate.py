import math
import warnings

import numpy as np
import pytest

from hebbcontract.analysis import MajorantParams, certify, compute_bounds
from hebbcontract.dynamics import Activation, ModelSpec, Signal, Stimulus
from hebbcontract.errors import (
    DegenerateWindow,
    GridMismatch,
    NonFiniteState,
    NonSymmetricH,
    TrajectoryTooShort,
    UnstableStep,
)
from hebbcontract.simulate import (
    check_dale,
    check_delay_contraction,
    check_entrainment,
    check_invariance,
    check_skew_decay,
    composite_distance,
    empirical_rate,
    integrate,
    integrate_delayed,
    integrate_dense,
    integrate_many,
    random_initial_states,
)
from hebbcontract.topology import build_topology

from helpers import feedforward, random_topology, recurrent


def scalar(c_n=1.0, u=None):
    topo = build_topology(1, [], [])
    spec = ModelSpec("HH", c_n, 1.0, Stimulus([u or Signal.zero()]), Stimulus.zeros(0))
    return topo, spec


# --- integration -------------------------------------------------------------


def test_linear_decay_matches_exponential():
    topo, spec = scalar()
    traj = integrate(topo, spec, [1.0], 1.0, 1e-3)
    assert abs(traj.y[-1, 0] - math.exp(-1.0)) < 1e-8
    assert traj.times[-1] == 1.0 and len(traj.times) == 1001


def test_zero_state_is_equilibrium():
    topo = build_topology(3, [], [])
    spec = ModelSpec("HH", 2.0, 1.0, Stimulus.zeros(3), Stimulus.zeros(0))
    traj = integrate(topo, spec, np.zeros(3), 2.0, 1e-2)
    assert np.all(traj.states == 0.0)


def test_step_guard_and_divergence():
    topo, spec = feedforward()
    z0 = np.zeros(12)
    with pytest.raises(UnstableStep):
        integrate(topo, spec, z0, 1.0, 0.2 / 3.6 * 1.01)
    with pytest.raises(UnstableStep):
        integrate(topo, spec, z0, 1.0, -1e-3)
    with pytest.raises(UnstableStep):
        integrate(topo, spec, z0, 1e-4, 1e-3)
    with pytest.raises(NonFiniteState):
        integrate(topo, spec, np.full(12, np.nan), 1.0, 1e-3)
    t1, s1 = scalar(u=Signal.constant(1.7e308))
    with pytest.raises(NonFiniteState):
        integrate(t1, s1, [0.0], 1.0, 1e-2)


def test_fourth_order_convergence():
    topo, spec = feedforward()
    z0 = random_initial_states(topo, spec, 1, np.random.default_rng(0))[0]
    ends = [integrate(topo, spec, z0, 1.0, dt).states[-1] for dt in (0.02, 0.01, 0.005)]
    ref = integrate(topo, spec, z0, 1.0, 0.00125).states[-1]
    e1 = np.max(np.abs(ends[0] - ends[1]))
    e2 = np.max(np.abs(ends[1] - ends[2]))
    assert e1 / e2 >= 8.0
    assert np.max(np.abs(ends[2] - ref)) < 1e-6


def test_determinism_and_batch_agreement():
    topo, spec = feedforward()
    Z0 = random_initial_states(topo, spec, 3, np.random.default_rng(5))
    a = integrate(topo, spec, Z0[1], 2.0, 1e-3)
    b = integrate(topo, spec, Z0[1], 2.0, 1e-3)
    assert np.array_equal(a.states, b.states)
    many = integrate_many(topo, spec, Z0, 2.0, 1e-3)
    np.testing.assert_allclose(many[1].states, a.states, rtol=1e-13, atol=1e-14)


def test_random_initial_states_options():
    topo, spec = feedforward()
    rng = np.random.default_rng(0)
    Z = random_initial_states(topo, spec, 200, rng)
    assert Z.shape == (200, 12)
    assert np.all(np.abs(Z) <= 1.0)
    assert np.all(Z[:, 6:] * np.sign(topo.h) >= 0)
    b = compute_bounds(topo, spec)
    Z = random_initial_states(topo, spec, 200, rng, dale=False, inside_invariant=True)
    assert np.all(np.abs(Z[:, 6:]) <= b.w_max) and np.any(Z[:, 6:] < 0)


def test_csv_export(tmp_path):
    topo, spec = feedforward()
    traj = integrate(topo, spec, np.zeros(12), 0.01, 1e-3)
    path = tmp_path / "out.csv"
    traj.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,y_1,y_2,y_3,y_4,y_5,y_6,w_1,w_2,w_3,w_4,w_5,w_6"
    assert len(lines) == 12
    row = np.array(lines[-1].split(","), dtype=float)
    np.testing.assert_array_equal(row[1:], traj.states[-1])


# --- delayed ------------------------------------------------------------------


def test_zero_delay_is_bitwise_undelayed():
    topo, spec = feedforward()
    z0 = random_initial_states(topo, spec, 1, np.random.default_rng(2))[0]
    a = integrate(topo, spec, z0, 3.0, 1e-3)
    b = integrate_delayed(topo, spec, z0, 3.0, 1e-3, 0.0)
    assert np.array_equal(a.states, b.states)


def test_delay_rounding_warns():
    topo, spec = feedforward()
    with pytest.warns(UserWarning, match="0.003"):
        traj = integrate_delayed(topo, spec, np.zeros(12), 0.1, 1e-3, 0.0034)
    assert traj.tau == pytest.approx(0.003)
    assert traj.warnings and "0.003" in traj.warnings[0]


def test_delayed_matches_constant_history_solution():
    # firing-rate model: while t <= tau every activation argument is read from
    # the initial state, so the system is linear with constant forcing
    topo, spec = feedforward()
    spec = spec.replace(model="FH", u=Stimulus.zeros(6))
    z0 = random_initial_states(topo, spec, 1, np.random.default_rng(3))[0]
    tau = 1.0
    traj = integrate_delayed(topo, spec, z0, 1.0, 1e-3, tau)
    from hebbcontract.dynamics import rhs

    drive = rhs(topo, spec, np.zeros(12), 0.0, z0, -tau)  # forcing at zero current state
    rate = np.concatenate([np.full(6, spec.c_n), np.full(6, spec.c_s)])
    t = traj.times[:, None]
    exact = z0 * np.exp(-rate * t) + drive / rate * (1 - np.exp(-rate * t))
    np.testing.assert_allclose(traj.states, exact, atol=1e-10)


def test_delayed_integration_converges_at_high_order():
    topo, spec = recurrent()
    z0 = random_initial_states(topo, spec, 1, np.random.default_rng(4))[0]
    ends = [integrate_delayed(topo, spec, z0, 4.0, dt, 0.5).states[-1] for dt in (0.02, 0.01, 0.005)]
    e1 = np.max(np.abs(ends[0] - ends[1]))
    e2 = np.max(np.abs(ends[1] - ends[2]))
    assert e1 / e2 >= 8.0


def test_recurrent_delayed_run_still_contracts():
    topo, spec = recurrent()
    rng = np.random.default_rng(21)
    trajs = integrate_delayed(topo, spec, random_initial_states(topo, spec, 6, rng), 20.0, 1e-3, 2.0)
    for a, b in zip(trajs[::2], trajs[1::2]):
        report = check_delay_contraction(a, b)
        assert report.nonincreasing, report.first_increase
        d = composite_distance(a.states, b.states, topo.n)
        assert d[-1] < 1e-6 * d[0]


# --- empirical rate -------------------------------------------------------------


def test_rate_of_linear_decay():
    topo, spec = scalar()
    a = integrate(topo, spec, [0.0], 10.0, 1e-3)
    b = integrate(topo, spec, [1.0], 10.0, 1e-3)
    est = empirical_rate(a, b, eta=(1.0, 1.0))
    assert est.rate == pytest.approx(1.0, abs=1e-3)
    assert est.window[0] == 1.0 and est.residual < 1e-6


def test_rate_saturates_and_validates():
    topo, spec = feedforward()
    a = integrate(topo, spec, np.zeros(12), 2.0, 1e-3)
    b = integrate(topo, spec, np.zeros(12), 2.0, 1e-3)
    assert empirical_rate(a, b).saturated
    c = integrate(topo, spec, np.zeros(12), 2.5, 1e-3)
    with pytest.raises(GridMismatch):
        empirical_rate(a, c)
    d = integrate(topo, spec, np.full(12, 0.1), 2.0, 1e-3)
    with pytest.raises(DegenerateWindow):
        empirical_rate(a, d, window=(3.0, 4.0))


def test_certified_systems_beat_their_lower_bound():
    rng = np.random.default_rng(31)
    checked = 0
    while checked < 4:
        topo = random_topology(rng, 5, 8)
        model = ["HH", "FH", "HO", "FO"][checked]
        c_o = 0.3 if model in ("HO", "FO") else 0.0
        spec = ModelSpec(model, rng.uniform(2.0, 4.0), rng.uniform(2.0, 4.0),
                         Stimulus([Signal.sinusoid(rng.uniform(-3, 3), 2.0) for _ in range(5)]),
                         Stimulus([Signal.constant(rng.uniform(0, 0.5)) for _ in range(8)]), c_o)
        cert = certify(topo, spec)
        if not cert.satisfied:
            continue
        checked += 1
        z0 = random_initial_states(topo, spec, 40, rng, dale=False, inside_invariant=True)
        trajs = integrate_many(topo, spec, z0, 8.0, 2e-3)
        for k in range(20):
            a, b = trajs[2 * k], trajs[2 * k + 1]
            assert empirical_rate(a, b).rate >= cert.rate - 0.05
            d = composite_distance(a.states, b.states, topo.n, cert.eta)
            live = d[:-1] > 1e-12
            assert np.all(np.diff(d)[live] <= 1e-9 * d[:-1][live])


# --- monitors -------------------------------------------------------------------


def test_invariance_inside_and_outside():
    topo, spec = feedforward()
    b = compute_bounds(topo, spec)
    rng = np.random.default_rng(8)
    inside = random_initial_states(topo, spec, 1, rng, inside_invariant=True)[0]
    traj = integrate(topo, spec, inside, 10.0, 1e-3)
    assert check_invariance(traj, b).ok
    assert not traj.monitors["bound_exceeded"].any()

    outside = inside.copy()
    outside[6:] = 2 * b.w_max * np.sign(topo.h)
    outside[:6] = 3 * b.x_max
    traj = integrate(topo, spec, outside, 10.0 / 3.2, 1e-3)
    assert check_invariance(traj, b).ok
    assert np.all(np.abs(traj.y[-1]) <= b.x_max + 1e-3)
    assert np.all(np.abs(traj.w[-1]) <= b.w_max + 1e-3)


def test_dale_verdicts():
    topo, spec = feedforward()
    z0 = random_initial_states(topo, spec, 1, np.random.default_rng(1))[0]
    report = check_dale(integrate(topo, spec, z0, 10.0, 1e-3))
    status = [v.status for v in report.edges]
    assert status == ["not applicable"] * 4 + ["preserved"] * 2
    assert report.ok and report.flips == 0

    z0[10] = -0.1  # e5 is anti-Hebbian
    traj = integrate(topo, spec, z0, 10.0, 1e-3)
    assert np.all(traj.w[:, 4] <= 0)
    assert check_dale(traj).edges[4].status == "preserved"
    assert not traj.monitors["dale_flip"].any()


def test_dale_detects_flip():
    # an inhibitory edge with a positive start is not covered by the sign rule, and a
    # positive synaptic stimulus can push a Hebbian weight negative only when
    # the stimulus is negative, so force a violation through the stimulus
    topo = build_topology(2, [(1, 2)], [1.0])
    spec = ModelSpec("HH", 1.0, 1.0, Stimulus.zeros(2), Stimulus([Signal.constant(-2.0)]))
    traj = integrate(topo, spec, [0.0, 0.0, 0.1], 3.0, 1e-3)
    assert check_dale(traj).edges[0].status == "not applicable"
    unforced = ModelSpec("HH", 1.0, 1.0, Stimulus.zeros(2), Stimulus.zeros(1))
    traj2 = integrate(topo, unforced, [0.0, 0.0, 0.1], 3.0, 1e-3)
    assert check_dale(traj2).edges[0].status == "preserved"
    traj2.states[500:, 2] = -1.0
    v = check_dale(traj2).edges[0]
    assert v.status == "violated" and v.first_violation == pytest.approx(0.5)


def dense_setup(model="HH", c_o=0.0, seed=0):
    rng = np.random.default_rng(seed)
    H = rng.uniform(-1, 1, size=(4, 4))
    H = H + H.T
    spec = ModelSpec(model, 2.0, 1.5, Stimulus([Signal.sinusoid(1.0, 3.0)] * 4), Stimulus.zeros(16), c_o)
    return rng, H, spec


def test_skew_part_vanishes_for_symmetric_start():
    rng, H, spec = dense_setup()
    W0 = rng.normal(size=(4, 4))
    W0 = W0 + W0.T
    traj = integrate_dense(spec, H, rng.normal(size=4), W0, 5.0, 1e-3, ubar=np.zeros((4, 4)))
    rep = check_skew_decay(traj)
    assert rep.status == "zero" and rep.max_abs_skew < 1e-12


def test_skew_part_decays_exponentially():
    rng, H, spec = dense_setup(seed=1)
    traj = integrate_dense(spec, H, rng.normal(size=4), rng.normal(size=(4, 4)), 5.0, 1e-3,
                           ubar=np.zeros((4, 4)))
    rep = check_skew_decay(traj)
    assert rep.status == "decaying" and rep.max_rel_error < 1e-6


def test_skew_check_gates():
    rng, H, spec = dense_setup("HO", c_o=0.5)
    traj = integrate_dense(spec, H, np.zeros(4), rng.normal(size=(4, 4)), 0.5, 1e-3, ubar=np.zeros((4, 4)))
    assert check_skew_decay(traj).status == "not applicable"
    traj.H = traj.H + np.triu(np.ones((4, 4)), 1)
    with pytest.raises(NonSymmetricH):
        check_skew_decay(traj)


def test_feedforward_entrainment():
    topo, spec = feedforward()
    z0 = random_initial_states(topo, spec, 1, np.random.default_rng(4))[0]
    traj = integrate(topo, spec, z0, 20.0, 1e-3)
    rep = check_entrainment(traj, 2 * math.pi / 8)
    assert rep.entrained and rep.residual < 1e-3
    with pytest.raises(TrajectoryTooShort):
        check_entrainment(integrate(topo, spec, z0, 5.0, 1e-3), 2 * math.pi / 8)


def test_constant_input_entrains_for_any_period():
    topo, spec = feedforward()
    spec = spec.replace(u=Stimulus([Signal.constant(2.0)] * 6))
    traj = integrate(topo, spec, np.zeros(12), 20.0, 1e-3)
    for period in (0.3, 1.0, 1.7):
        assert check_entrainment(traj, period).entrained


def test_entrainment_reported_without_certificate():
    topo, spec = feedforward()
    loud = topo.with_h(topo.h * 4.0)
    traj = integrate(loud, spec, np.zeros(12), 20.0, 1e-3)
    rep = check_entrainment(traj, 2 * math.pi / 8)
    assert not rep.certified and math.isfinite(rep.residual)
