"""Shared fixtures: bundled cases, the perturbed 14-bus scenario, random helpers."""

import math

import pytest

from droopcert.certificate import alpha_theory_all
from droopcert.grid import (Branch, Grid, build_laplacian, bundled_case_path,
                            load_case, operating_point)
from droopcert.nodes import GeneralizedDroop
from droopcert.powerflow import (PowerFlowSpec, ideal_reactive_power,
                                 perturb_reactive, solve)

SCENARIO_SEED = 42


def random_connected_grid(rng, n, rx_ratio=0.0, b_range=(0.5, 3.0)):
    """Random spanning tree plus a few extra edges; susceptances in b_range."""
    edges = set()
    order = rng.permutation(n)
    for i in range(1, n):
        a, b = int(order[i]), int(order[rng.integers(0, i)])
        edges.add((min(a, b), max(a, b)))
    for _ in range(int(rng.integers(0, n))):
        a, b = (int(v) for v in rng.integers(0, n, 2))
        if a != b:
            edges.add((min(a, b), max(a, b)))
    branches = tuple(Branch(a, b, float(rng.uniform(*b_range))) for a, b in sorted(edges))
    return Grid(n_nodes=n, branches=branches, rx_ratio=rx_ratio)


def random_operating_point(rng, grid, v_spread=0.1, phi_spread=0.3):
    """Self-consistent point with neighbor phase gaps well below pi/2."""
    V = rng.uniform(1.0 - v_spread, 1.0 + v_spread, grid.n_nodes)
    phi = rng.uniform(-phi_spread, phi_spread, grid.n_nodes)
    return operating_point(grid, V, phi)


def random_accretive_droop(rng, alpha):
    """Droop gains satisfying the strict accretivity conditions with margin."""
    c_vq = float(rng.uniform(0.3, 2.0))
    c_wp = float(rng.uniform(0.3, 2.0))
    total = float(rng.uniform(-0.9, 0.9)) * 2.0 * math.sqrt(c_vq * c_wp)
    split = float(rng.uniform(0.0, 1.0))
    return GeneralizedDroop(c_wp=c_wp, c_wq=total * split, c_vp=total * (1.0 - split),
                            c_vq=c_vq, alpha=float(alpha))


@pytest.fixture(scope="session")
def two_bus():
    grid = Grid(2, (Branch(0, 1, 1.0),))
    return grid


@pytest.fixture(scope="session")
def ieee14_case():
    return load_case(bundled_case_path("ieee14_lossless"))


@pytest.fixture(scope="session")
def ieee14_scenario(ieee14_case):
    """The perturbed-reactive 14-bus operating point used by the experiments."""
    case = ieee14_case
    q_ideal, _ = ideal_reactive_power(case.grid, case.p_set, case.v_set, case.slack)
    q_spec = perturb_reactive(q_ideal, 0.3, seed=SCENARIO_SEED)
    result = solve(case.grid, PowerFlowSpec(case.p_set, q_spec, case.slack, case.v_set))
    L = build_laplacian(case.grid)
    theory = alpha_theory_all(L, result.op)
    return {"case": case, "grid": case.grid, "op": result.op, "L": L,
            "theory": theory, "result": result}


def resolved_gain_models(theory, offset=0.0):
    """The cross-coupling-consistent droop gain set used in the 14-bus runs."""
    return [GeneralizedDroop(c_wp=1.0, c_wq=0.5, c_vp=0.5, c_vq=1.0,
                             alpha=float(a) + offset) for a in theory]
