"""Certificate machinery: droop bounds, edge decomposition, network Jacobian,
rotation support, and the end-to-end certify flow."""

import math

import numpy as np
import pytest

from droopcert.certificate import (CERTIFIED, NOT_CERTIFIED, ContourConfig,
                                   alpha_edge_bound, alpha_theory,
                                   alpha_theory_all, build_edge_matrix,
                                   build_network_jacobian, certify, check_edge,
                                   decompose_alpha, required_alpha,
                                   rotate_state_space, rotation_matrix,
                                   scatter_edge_matrices)
from droopcert.errors import InfeasibleAlphaError, PhaseConditionError
from droopcert.grid import (Branch, Grid, build_laplacian, complex_couplings,
                            nodal_power, operating_point)
from droopcert.nodes import (GeneralizedDroop, ThirdOrderInverter, eval_transfer,
                             to_state_space, with_alpha)
from droopcert.oracle import assemble_jacobian, spectral_verdict

from conftest import (random_accretive_droop, random_connected_grid,
                      random_operating_point, resolved_gain_models)


def identity_droop(alpha):
    return GeneralizedDroop(c_wp=1.0, c_wq=0.0, c_vp=0.0, c_vq=1.0, alpha=alpha)


def test_alpha_theory_two_bus(two_bus):
    L = build_laplacian(two_bus)
    flat = operating_point(two_bus, np.ones(2), np.zeros(2))
    assert alpha_theory(L, flat, 0) == pytest.approx(0.0, abs=1e-15)
    assert alpha_theory(L, flat, 1) == pytest.approx(0.0, abs=1e-15)
    uneven = operating_point(two_bus, np.array([1.0, 0.9]), np.zeros(2))
    assert alpha_theory(L, uneven, 0) == pytest.approx(-0.2, abs=1e-14)
    assert alpha_theory(L, uneven, 1) == pytest.approx(0.2, abs=1e-14)


def test_alpha_theory_phase_limit(two_bus):
    L = build_laplacian(two_bus)
    op = operating_point(two_bus, np.ones(2), np.array([math.pi / 2, 0.0]))
    with pytest.raises(PhaseConditionError, match="edge phase condition violated"):
        alpha_theory(L, op, 0)


def test_alpha_edge_bound_examples(two_bus):
    flat = operating_point(two_bus, np.ones(2), np.zeros(2))
    assert alpha_edge_bound(flat, (0, 1)) == pytest.approx((0.0, 0.0), abs=1e-15)
    tilted = operating_point(two_bus, np.ones(2), np.array([math.pi / 3, 0.0]))
    assert alpha_edge_bound(tilted, (0, 1)) == pytest.approx((1.0, 1.0), abs=1e-12)
    mixed = operating_point(two_bus, np.array([1.05, 0.95]), np.array([0.1, 0.0]))
    c = math.cos(0.1)
    expected = (0.95 / (1.05 * c) - 1.0, 1.05 / (0.95 * c) - 1.0)
    assert alpha_edge_bound(mixed, (0, 1)) == pytest.approx(expected, abs=1e-14)
    with pytest.raises(PhaseConditionError):
        alpha_edge_bound(operating_point(two_bus, np.ones(2),
                                         np.array([1.6, 0.0])), (0, 1))


def test_decompose_alpha_at_exact_bound(ieee14_scenario):
    op, L = ieee14_scenario["op"], ieee14_scenario["L"]
    theory = ieee14_scenario["theory"]
    shares = decompose_alpha(L, op, theory)
    for (n, m), (a_nm, a_mn) in shares.items():
        b_nm, b_mn = alpha_edge_bound(op, (n, m))
        assert a_nm == pytest.approx(b_nm, abs=1e-10)
        assert a_mn == pytest.approx(b_mn, abs=1e-10)


def test_decompose_alpha_single_edge_unique(two_bus):
    op = operating_point(two_bus, np.array([1.0, 0.9]), np.zeros(2))
    L = build_laplacian(two_bus)
    shares = decompose_alpha(L, op, np.array([0.3, 0.5]))
    a_nm, a_mn = shares[(0, 1)]
    assert a_nm == pytest.approx(0.3 / (2.0 * 1.0 * 1.0), abs=1e-14)
    assert a_mn == pytest.approx(0.5 / (2.0 * 0.9 * 1.0), abs=1e-14)


@pytest.mark.parametrize("strategy", ["proportional_to_bound", "uniform_excess"])
def test_decompose_alpha_identity(ieee14_scenario, strategy):
    op, L = ieee14_scenario["op"], ieee14_scenario["L"]
    alpha = ieee14_scenario["theory"] + 0.1
    shares = decompose_alpha(L, op, alpha, strategy=strategy)
    for n in range(op.n_nodes):
        total = 0.0
        for (a, b), (a_nm, a_mn) in shares.items():
            if a == n:
                total += 2.0 * op.V[n] * (-L[a, b]) * a_nm
            elif b == n:
                total += 2.0 * op.V[n] * (-L[a, b]) * a_mn
        assert total == pytest.approx(alpha[n], rel=1e-12)


def test_decompose_alpha_infeasible_names_node(ieee14_scenario):
    op, L = ieee14_scenario["op"], ieee14_scenario["L"]
    alpha = ieee14_scenario["theory"].copy()
    alpha[3] -= 0.5
    with pytest.raises(InfeasibleAlphaError) as err:
        decompose_alpha(L, op, alpha)
    assert err.value.nodes == (3,)
    with pytest.raises(ValueError, match="strategy"):
        decompose_alpha(L, op, alpha, strategy="nope")


def test_network_jacobian_flat_two_bus(two_bus):
    op = operating_point(two_bus, np.ones(2), np.zeros(2))
    L = build_laplacian(two_bus)
    K = complex_couplings(L, op)
    jnet = build_network_jacobian(K, nodal_power(K), op.V, np.zeros(2))
    expected = np.block([[K.K, np.zeros((2, 2))], [np.zeros((2, 2)), K.K.conj()]])
    assert np.abs(jnet.J - expected).max() < 1e-15


def test_network_jacobian_structure_random():
    rng = np.random.default_rng(23)
    for _ in range(10):
        grid = random_connected_grid(rng, int(rng.integers(3, 9)))
        op = random_operating_point(rng, grid)
        L = build_laplacian(grid)
        K = complex_couplings(L, op)
        alpha = rng.normal(0.0, 0.5, grid.n_nodes)
        jnet = build_network_jacobian(K, nodal_power(K), op.V, alpha)
        scale = np.abs(jnet.J).max()
        assert np.abs(jnet.J - jnet.J.conj().T).max() <= 1e-12 * scale
        mode = np.concatenate([np.ones(grid.n_nodes), -np.ones(grid.n_nodes)])
        assert np.abs(jnet.J @ mode).max() <= 1e-12 * scale * grid.n_nodes


def test_network_jacobian_psd_at_certified_alpha(ieee14_scenario):
    op, L = ieee14_scenario["op"], ieee14_scenario["L"]
    K = complex_couplings(L, op)
    jnet = build_network_jacobian(K, nodal_power(K), op.V, ieee14_scenario["theory"])
    assert np.linalg.eigvalsh(jnet.J).min() >= -1e-9


def test_edge_matrix_flat_start(two_bus):
    op = operating_point(two_bus, np.ones(2), np.zeros(2))
    L = build_laplacian(two_bus)
    em = build_edge_matrix(L, op, (0, 1), 0.0, 0.0)
    expected = np.array([[1, 0, -1, 0], [0, 1, 0, -1],
                         [-1, 0, 1, 0], [0, -1, 0, 1]], dtype=complex)
    assert np.abs(em.J_e - expected).max() < 1e-15
    assert np.linalg.eigvalsh(em.J_e).min() == pytest.approx(0.0, abs=1e-12)


def test_edge_matrix_boundary_and_monotonicity():
    grid = Grid(2, (Branch(0, 1, 1.3),))
    op = operating_point(grid, np.array([1.04, 0.93]), np.array([0.21, 0.0]))
    L = build_laplacian(grid)
    b_nm, b_mn = alpha_edge_bound(op, (0, 1))
    at_bound = build_edge_matrix(L, op, (0, 1), b_nm, b_mn)
    assert np.linalg.eigvalsh(at_bound.J_e).min() == pytest.approx(0.0, abs=1e-10)
    below = build_edge_matrix(L, op, (0, 1), b_nm - 0.05, b_mn - 0.05)
    assert np.linalg.eigvalsh(below.J_e).min() < -1e-4
    above = build_edge_matrix(L, op, (0, 1), b_nm + 0.05, b_mn + 0.02)
    assert np.linalg.eigvalsh(above.J_e).min() >= -1e-12


def test_edge_reconstruction_identity():
    rng = np.random.default_rng(31)
    for _ in range(20):
        grid = random_connected_grid(rng, int(rng.integers(3, 11)))
        op = random_operating_point(rng, grid)
        L = build_laplacian(grid)
        alpha = alpha_theory_all(L, op) + np.abs(rng.normal(0.0, 0.5, grid.n_nodes))
        shares = decompose_alpha(L, op, alpha)
        ems = [build_edge_matrix(L, op, e, *shares[e]) for e in shares]
        K = complex_couplings(L, op)
        jnet = build_network_jacobian(K, nodal_power(K), op.V, alpha)
        rebuilt = scatter_edge_matrices(ems, grid.n_nodes)
        rel = np.linalg.norm(jnet.J - rebuilt) / np.linalg.norm(jnet.J)
        assert rel <= 1e-12


def test_check_edge_verdicts(two_bus):
    op = operating_point(two_bus, np.array([1.0, 0.9]), np.zeros(2))
    L = build_laplacian(two_bus)
    b_nm, b_mn = alpha_edge_bound(op, (0, 1))
    good = check_edge(build_edge_matrix(L, op, (0, 1), b_nm + 0.1, b_mn + 0.1))
    assert good.passed and good.analytic_ok and good.psd_ok
    bad = check_edge(build_edge_matrix(L, op, (0, 1), b_nm - 0.1, b_mn - 0.1))
    assert not bad.passed and not bad.analytic_ok and bad.lambda_min < 0
    wide = operating_point(two_bus, np.ones(2), np.array([1.8, 0.0]))
    em = build_edge_matrix(L, wide, (0, 1), 0.0, 0.0)
    assert not check_edge(em).phase_ok


def test_node_route_matches_edge_route(ieee14_scenario):
    # minimal feasible droop of the decomposition equals the node-wise bound
    op, L = ieee14_scenario["op"], ieee14_scenario["L"]
    theory = ieee14_scenario["theory"]
    decompose_alpha(L, op, theory, strict=True)  # feasible at the bound
    with pytest.raises(InfeasibleAlphaError):
        decompose_alpha(L, op, theory - 1e-8, strict=True)


def test_contour_config_validation():
    with pytest.raises(ValueError):
        ContourConfig(omega_min=0.0)
    with pytest.raises(ValueError):
        ContourConfig(omega_min=1.0, omega_max=0.1)
    with pytest.raises(ValueError):
        ContourConfig(n_samples=1)
    omegas = ContourConfig(omega_min=1e-2, omega_max=1e2, n_samples=5).omegas()
    assert np.allclose(omegas, np.logspace(-2, 2, 5))


def test_certify_certified_and_attribution(ieee14_scenario):
    grid, op = ieee14_scenario["grid"], ieee14_scenario["op"]
    theory = ieee14_scenario["theory"]
    models = resolved_gain_models(theory, offset=1e-3)
    report = certify(grid, op, models, phase_diagnostics=False)
    assert report.verdict == CERTIFIED
    assert report.certified
    assert report.failure_attribution == ()
    assert all(nr.alpha_ok for nr in report.per_node)
    assert all(er.edge_psd_ok for er in report.per_edge)

    bad = resolved_gain_models(theory)
    bad[0] = with_alpha(bad[0], theory[0] - 0.1)
    report = certify(grid, op, bad, phase_diagnostics=False)
    assert report.verdict == NOT_CERTIFIED
    node_failures = [(k, i, c) for k, i, c in report.failure_attribution
                     if k == "node"]
    assert node_failures == [("node", 0, "alpha_bound")]
    # consequential edge losses are not separately attributed
    assert all(k == "node" for k, _, _ in report.failure_attribution)
    assert not report.per_node[0].alpha_ok


def test_certify_internal_and_accretivity_attribution(two_bus):
    op = operating_point(two_bus, np.ones(2), np.zeros(2))
    models = [ThirdOrderInverter(tau_p=1.0, tau_q=1.0, damping=-0.5, k_p=1.0,
                                 k_q=2.0, delta=0.1),
              identity_droop(0.5)]
    report = certify(two_bus, op, models, phase_diagnostics=False)
    assert ("node", 0, "internal_stability") in report.failure_attribution
    models = [GeneralizedDroop(c_wp=1.0, c_wq=1.8, c_vp=1.8, c_vq=1.0, alpha=0.5),
              identity_droop(0.5)]
    report = certify(two_bus, op, models, phase_diagnostics=False)
    assert ("node", 0, "accretivity") in report.failure_attribution
    assert report.per_node[0].worst_slack < 0


def test_certify_phase_violation_blocks_alpha_checks(two_bus):
    op = operating_point(two_bus, np.ones(2), np.array([1.7, 0.0]))
    report = certify(two_bus, op, [identity_droop(1.0)] * 2,
                     phase_diagnostics=False)
    assert report.verdict == NOT_CERTIFIED
    assert ("edge", (0, 1), "phase_difference") in report.failure_attribution
    assert report.per_node[0].alpha_theory is None
    assert report.per_node[0].alpha_ok is None


def test_certify_monotone_in_alpha():
    rng = np.random.default_rng(41)
    for _ in range(5):
        grid = random_connected_grid(rng, int(rng.integers(3, 8)))
        op = random_operating_point(rng, grid)
        L = build_laplacian(grid)
        theory = alpha_theory_all(L, op)
        models = [random_accretive_droop(rng, theory[n] + abs(rng.normal(0, 0.3)))
                  for n in range(grid.n_nodes)]
        base = certify(grid, op, models, phase_diagnostics=False)
        assert base.certified
        bumped = [with_alpha(m, m.alpha + abs(rng.normal(0, 1.0))) for m in models]
        assert certify(grid, op, bumped, phase_diagnostics=False).certified


def test_certify_delta_zero_flagged(two_bus):
    op = operating_point(two_bus, np.ones(2), np.zeros(2))
    models = [ThirdOrderInverter(tau_p=0.5, tau_q=0.5, damping=1.0, k_p=2.0,
                                 k_q=2.0, delta=0.0) for _ in range(2)]
    report = certify(two_bus, op, models, phase_diagnostics=False)
    assert report.verdict == NOT_CERTIFIED
    nr = report.per_node[0]
    assert not nr.accretive
    assert nr.worst_s == math.inf
    assert any("feed-through" in note for note in nr.notes)
    # the boundary case is semi-stable, not unstable
    verdict = spectral_verdict(assemble_jacobian(two_bus, op, models))
    assert verdict.verdict in ("stable", "marginal")


def test_certify_rejects_inconsistent_op(two_bus):
    from droopcert.grid import OperatingPoint
    bad_op = OperatingPoint(V=np.ones(2), phi=np.zeros(2),
                            p=np.array([0.5, -0.5]), q=np.zeros(2))
    with pytest.raises(ValueError, match="self-consistent"):
        certify(two_bus, bad_op, [identity_droop(1.0)] * 2)


def test_rotation_matrix_properties():
    rot = rotation_matrix(0.4)
    assert rot.kappa == pytest.approx(math.atan(0.4))
    R = rot.O * rot.cos_kappa
    assert np.allclose(R @ R.T, np.eye(2))
    assert np.linalg.det(R) == pytest.approx(1.0)


def test_rotate_state_space_transfer():
    rng = np.random.default_rng(6)
    model = ThirdOrderInverter(tau_p=0.4, tau_q=0.7, damping=1.2, k_p=2.0,
                               k_q=0.5, delta=0.08)
    ss = to_state_space(model, 1.0)
    rot = rotation_matrix(0.3)
    rotated = rotate_state_space(ss, rot)
    assert rotated.alpha == pytest.approx(ss.alpha / rot.cos_kappa)
    for _ in range(10):
        s = complex(rng.normal(), rng.normal())
        T = eval_transfer(ss, s).T
        Trot = eval_transfer(rotated, s).T
        assert np.abs(Trot - rot.cos_kappa * (T @ rot.O)).max() < 1e-13
        # undoing the rotation recovers the original transfer matrix
        back = (Trot @ np.linalg.inv(rot.O)) / rot.cos_kappa
        assert np.abs(back - T).max() < 1e-12


def test_certify_lossless_path_is_default(ieee14_scenario):
    grid, op = ieee14_scenario["grid"], ieee14_scenario["op"]
    models = resolved_gain_models(ieee14_scenario["theory"], offset=0.01)
    a = certify(grid, op, models, phase_diagnostics=False)
    b = certify(grid, op, models, rx_ratio=0.0, phase_diagnostics=False)
    assert a.to_dict() == b.to_dict()


def test_certify_lossy_required_alpha_scaling():
    grid = Grid(2, (Branch(0, 1, 1.0),), rx_ratio=0.4)
    op = operating_point(grid, np.array([1.0, 0.9]), np.zeros(2))
    req = required_alpha(grid, op)
    lossless = Grid(2, (Branch(0, 1, 1.0),))
    base = alpha_theory_all(build_laplacian(lossless),
                            operating_point(lossless, np.array([1.0, 0.9]),
                                            np.zeros(2)))
    assert np.allclose(req, math.cos(math.atan(0.4)) * base)
    models = [identity_droop(req[0] + 1e-3), identity_droop(req[1] + 1e-3)]
    assert certify(grid, op, models, phase_diagnostics=False).certified
    models = [identity_droop(req[0] - 1e-3), identity_droop(req[1] + 1e-3)]
    report = certify(grid, op, models, phase_diagnostics=False)
    assert ("node", 0, "alpha_bound") in report.failure_attribution


def test_report_to_dict_uses_one_based_ids(ieee14_scenario):
    grid, op = ieee14_scenario["grid"], ieee14_scenario["op"]
    theory = ieee14_scenario["theory"]
    models = resolved_gain_models(theory)
    models[2] = with_alpha(models[2], theory[2] - 0.5)
    payload = certify(grid, op, models, phase_diagnostics=False).to_dict()
    assert payload["verdict"] == "not_certified"
    assert payload["per_node"][0]["node"] == 1
    assert payload["per_edge"][0]["edge"] == [1, 2]
    assert {"kind": "node", "id": 3, "condition": "alpha_bound"} in \
        payload["failure_attribution"]


def test_certify_phase_envelope_diagnostics(two_bus):
    op = operating_point(two_bus, np.ones(2), np.zeros(2))
    report = certify(two_bus, op, [identity_droop(0.5)] * 2)
    env = report.diagnostics["phase_envelope"]
    assert env["evaluated"]
    assert env["within_open_interval"]
    assert -math.pi < env["sum_inf"] <= env["sum_sup"] < 0.0
