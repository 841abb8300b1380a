"""Newton power flow and the perturbed-reactive scenario generator."""

import numpy as np
import pytest

from droopcert.errors import PowerFlowError
from droopcert.grid import build_laplacian, injected_power
from droopcert.powerflow import (PowerFlowSpec, ideal_reactive_power,
                                 perturb_reactive, solve)

from conftest import random_connected_grid


def test_zero_injection_is_flat_start(two_bus):
    spec = PowerFlowSpec(np.zeros(2), np.zeros(2), slack=0)
    res = solve(two_bus, spec)
    assert res.iterations == 0
    assert np.allclose(res.op.V, 1.0)
    assert np.allclose(res.op.phi, 0.0)


def test_two_bus_angle_closed_form(two_bus):
    # q chosen so both magnitudes stay at 1; then the angle gap inverts p = sin
    p_spec = np.array([0.3, -0.3])
    q_ideal, _ = ideal_reactive_power(two_bus, p_spec, np.ones(2), slack=0)
    res = solve(two_bus, PowerFlowSpec(p_spec, q_ideal, slack=0))
    assert np.allclose(res.op.V, 1.0, atol=1e-10)
    assert res.op.phi[0] - res.op.phi[1] == pytest.approx(np.arcsin(0.3), abs=1e-10)


def test_ieee14_base_convergence(ieee14_case):
    case = ieee14_case
    res = solve(case.grid, PowerFlowSpec(case.p_set, case.q_set, case.slack, case.v_set))
    assert res.iterations <= 10
    assert res.iterations == 5  # regression pin for the bundled data
    assert res.residual <= 1e-8
    # solver output re-evaluated through the network reproduces the set points
    sigma = injected_power(case.grid, build_laplacian(case.grid),
                           res.op.V, res.op.phi)
    ns = [n for n in range(14) if n != case.slack]
    assert np.abs(sigma.imag[ns] - case.p_set[ns]).max() <= 1e-10
    assert np.abs(sigma.real[ns] - case.q_set[ns]).max() <= 1e-10
    # slack holds its magnitude and reference angle
    assert res.op.phi[case.slack] == 0.0
    assert res.op.V[case.slack] == case.v_set[case.slack]


def test_flat_start_converges_for_bundled_fixtures(ieee14_case, two_bus):
    for grid, p, q, slack, v in [
        (ieee14_case.grid, ieee14_case.p_set, ieee14_case.q_set,
         ieee14_case.slack, ieee14_case.v_set),
        (two_bus, np.zeros(2), np.zeros(2), 0, np.ones(2)),
    ]:
        res = solve(grid, PowerFlowSpec(p, q, slack, v))
        assert res.residual <= 1e-10


def test_ideal_reactive_holds_setpoint_voltages(ieee14_case):
    case = ieee14_case
    q_ideal, _ = ideal_reactive_power(case.grid, case.p_set, case.v_set, case.slack)
    res = solve(case.grid, PowerFlowSpec(case.p_set, q_ideal, case.slack, case.v_set))
    assert np.abs(res.op.V - case.v_set).max() < 1e-8


def test_nonconvergence_raises_with_residual(two_bus):
    # an active transfer beyond the line's capability has no solution
    spec = PowerFlowSpec(np.array([5.0, -5.0]), np.zeros(2), slack=0)
    with pytest.raises(PowerFlowError) as err:
        solve(two_bus, spec, max_iter=40)
    assert err.value.residual is not None


def test_random_grids_solved_points_are_consistent():
    rng = np.random.default_rng(3)
    for _ in range(10):
        grid = random_connected_grid(rng, int(rng.integers(3, 9)))
        n = grid.n_nodes
        p = rng.uniform(-0.2, 0.2, n)
        p -= p.mean()
        q = rng.uniform(-0.1, 0.1, n)
        res = solve(grid, PowerFlowSpec(p, q, slack=0))
        ns = np.arange(1, n)
        assert np.abs(res.op.p[ns] - p[ns]).max() <= 1e-9
        assert np.abs(res.op.q[ns] - q[ns]).max() <= 1e-9


def test_perturb_reactive_contracts():
    q = np.array([1.0, -2.0, 0.5, 0.0])
    assert np.array_equal(perturb_reactive(q, 0.0, seed=1), q)
    a = perturb_reactive(q, 0.3, seed=10)
    b = perturb_reactive(q, 0.3, seed=10)
    c = perturb_reactive(q, 0.3, seed=11)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    nonzero = q != 0
    ratios = a[nonzero] / q[nonzero]
    assert np.all(ratios >= 0.7) and np.all(ratios <= 1.3)
    assert a[~nonzero] == 0.0
    with pytest.raises(ValueError):
        perturb_reactive(q, 1.0, seed=0)
    with pytest.raises(ValueError):
        perturb_reactive(q, -0.1, seed=0)


def test_spec_validation():
    with pytest.raises(ValueError):
        PowerFlowSpec(np.zeros(2), np.zeros(3), slack=0)
    with pytest.raises(ValueError):
        PowerFlowSpec(np.zeros(2), np.zeros(2), slack=5)
    with pytest.raises(ValueError):
        PowerFlowSpec(np.zeros(2), np.zeros(2), slack=0, v_init=np.array([1.0, 0.0]))
