"""Ground truth: full Jacobian assembly, spectral verdicts, critical-droop
bisection, nonlinear time-domain simulation, and cross-coupling scans.

State layout is per node [phi, V, x_1 .. x_nvar].  The nodal realizations
supply x' = A x + B u and [rho, omega] = -(C x + D u) with u = [dq_hat, dp_hat],
where q_hat = q + alpha V and p_hat = p + tan(kappa) alpha V use the physical
injections of the (possibly constant-R/X) grid.  phi' = omega and V' = V0 rho
close the loop; the same expressions drive both the Jacobian and the
simulator, so finite differences of the simulator RHS reproduce the Jacobian.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .certificate import ContourConfig, certify, required_alpha
from .errors import BracketError
from .grid import build_laplacian, injected_power
from .nodes import model_alpha, to_state_space, with_alpha
from .powerflow import power_jacobian_blocks

STABLE = "stable"
UNSTABLE = "unstable"
MARGINAL = "marginal"


@dataclass(frozen=True)
class FullLinearization:
    """Jacobian of the interconnected system with its state bookkeeping."""

    state_names: tuple
    J: np.ndarray

    @property
    def dimension(self):
        return self.J.shape[0]


@dataclass(frozen=True)
class SpectralVerdict:
    eigenvalues: np.ndarray
    max_re_excluding_zero_mode: float
    verdict: str
    diagnostics: tuple = ()


@dataclass(frozen=True)
class Trajectory:
    """Fixed-step simulation record, truncated early on voltage collapse."""

    times: np.ndarray
    phi: np.ndarray
    V: np.ndarray
    x: np.ndarray
    p: np.ndarray
    q: np.ndarray
    state_names: tuple
    collapsed: bool = False
    collapse_time: float = None


def _layout(models):
    names = []
    offsets = []
    pos = 0
    for n, model in enumerate(models):
        offsets.append(pos)
        names.append((n, "phi"))
        names.append((n, "V"))
        nvar = to_state_space(model, 1.0, 0.0).n_var
        for k in range(nvar):
            names.append((n, f"x{k + 1}"))
        pos += 2 + nvar
    return tuple(names), offsets, pos


def _node_data(grid, op, models):
    """Per-node realization and droop data shared by Jacobian and simulator."""
    sss = [to_state_space(models[n], op.V[n], op.q[n]) for n in range(grid.n_nodes)]
    alphas = np.array([model_alpha(models[n], op.V[n], op.q[n])
                       for n in range(grid.n_nodes)])
    return sss, alphas


def assemble_jacobian(grid, op, models):
    """Chain rule of the nodal realizations with the network power partials."""
    if len(models) != grid.n_nodes:
        raise ValueError("need exactly one model per node")
    L = build_laplacian(grid)
    sss, alphas = _node_data(grid, op, models)
    names, offsets, dim = _layout(models)
    N = grid.n_nodes
    tan_k = grid.rx_ratio

    dq_dphi, dq_dV, dp_dphi, dp_dV = power_jacobian_blocks(L, op.V, op.phi)
    if tan_k != 0.0:
        c, s = math.cos(grid.kappa), math.sin(grid.kappa)
        dq_dphi, dp_dphi = c * dq_dphi - s * dp_dphi, s * dq_dphi + c * dp_dphi
        dq_dV, dp_dV = c * dq_dV - s * dp_dV, s * dq_dV + c * dp_dV

    phi_cols = np.array([offsets[m] for m in range(N)])
    v_cols = phi_cols + 1
    J = np.zeros((dim, dim))
    for n in range(N):
        ss = sss[n]
        off = offsets[n]
        # input sensitivities W = d[dq_hat_n, dp_hat_n]/d(state)
        W = np.zeros((2, dim))
        W[0, phi_cols] = dq_dphi[n]
        W[0, v_cols] = dq_dV[n]
        W[1, phi_cols] = dp_dphi[n]
        W[1, v_cols] = dp_dV[n]
        W[0, v_cols[n]] += alphas[n]
        W[1, v_cols[n]] += tan_k * alphas[n]
        # phi' = omega, V' = V0 * rho, x' = A x + B u
        J[off, :] -= ss.D[1, :] @ W
        J[off + 1, :] -= op.V[n] * (ss.D[0, :] @ W)
        if ss.n_var:
            xs = slice(off + 2, off + 2 + ss.n_var)
            J[off, xs] -= ss.C[1, :]
            J[off + 1, xs] -= op.V[n] * ss.C[0, :]
            J[xs, :] += ss.B @ W
            J[xs, xs] += ss.A
    return FullLinearization(state_names=names, J=J)


def uniform_phase_direction(lin):
    """Unit vector of the rotational symmetry: all phases shifted equally."""
    d = np.zeros(lin.dimension)
    for i, (_, name) in enumerate(lin.state_names):
        if name == "phi":
            d[i] = 1.0
    return d / np.linalg.norm(d)


def spectral_verdict(lin, tol=1e-8):
    """Dense eigensolve, excluding the single rotation zero mode by count."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    eigvals, eigvecs = np.linalg.eig(lin.J)
    order = np.argsort(np.abs(eigvals))
    diagnostics = []
    near_zero = int(np.sum(np.abs(eigvals) <= tol))
    zero_idx = order[0]
    vec = eigvecs[:, zero_idx]
    direction = uniform_phase_direction(lin)
    alignment = abs(np.vdot(direction, vec)) / np.linalg.norm(vec)
    angle = math.acos(min(1.0, alignment))
    if angle > 1e-6:
        diagnostics.append(
            f"zero-mode eigenvector deviates from the uniform-phase direction "
            f"by {angle:.3e} rad")
    rest = np.delete(eigvals, zero_idx)
    max_re = float(rest.real.max()) if rest.size else -math.inf
    if near_zero != 1:
        diagnostics.append(
            f"{near_zero} eigenvalues within {tol:g} of zero; possible structural "
            "degeneracy")
        verdict = MARGINAL
    elif max_re < -tol:
        verdict = STABLE
    elif max_re > tol:
        verdict = UNSTABLE
    else:
        verdict = MARGINAL
    return SpectralVerdict(eigenvalues=eigvals,
                           max_re_excluding_zero_mode=max_re,
                           verdict=verdict, diagnostics=tuple(diagnostics))


def find_alpha_crit(grid, op, models, node, bracket, xtol=1e-6):
    """Bisect the varied node's droop ratio to the stability boundary.

    All other nodes keep their configured ratios; reproducible bit-for-bit
    for identical inputs.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not hi > lo:
        raise ValueError("bracket must be increasing")

    def stable_at(a):
        trial = list(models)
        trial[node] = with_alpha(models[node], a)
        return spectral_verdict(assemble_jacobian(grid, op, trial)).verdict == STABLE

    s_lo = stable_at(lo)
    s_hi = stable_at(hi)
    if s_lo == s_hi:
        raise BracketError(
            f"same verdict at both bracket endpoints [{lo}, {hi}] for node {node}")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if stable_at(mid) == s_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def state_perturbation(grid, models, dphi=None, dV=None):
    """Packed state deviation from per-node phase/magnitude offsets."""
    names, offsets, dim = _layout(models)
    z = np.zeros(dim)
    for n in range(grid.n_nodes):
        if dphi is not None:
            z[offsets[n]] = np.asarray(dphi)[n]
        if dV is not None:
            z[offsets[n] + 1] = np.asarray(dV)[n]
    return z


def vector_field(grid, op, models):
    """Nonlinear right-hand side of the closed loop and the equilibrium state.

    Returns (rhs, z_op): rhs maps a packed state to its time derivative and is
    the exact function the simulator integrates, so finite differences of it
    at z_op reproduce assemble_jacobian.
    """
    L = build_laplacian(grid)
    sss, alphas = _node_data(grid, op, models)
    names, offsets, dim = _layout(models)
    N = grid.n_nodes
    tan_k = grid.rx_ratio
    rot = complex(np.exp(1j * grid.kappa)) if tan_k != 0.0 else 1.0
    phi_idx = np.array([offsets[n] for n in range(N)])
    v_idx = phi_idx + 1
    x_slices = [slice(offsets[n] + 2, offsets[n] + 2 + sss[n].n_var) for n in range(N)]
    dynamic = [n for n in range(N) if sss[n].n_var]
    D_all = np.stack([ss.D for ss in sss])
    D00, D01 = D_all[:, 0, 0].copy(), D_all[:, 0, 1].copy()
    D10, D11 = D_all[:, 1, 0].copy(), D_all[:, 1, 1].copy()
    tank_alphas = tan_k * alphas

    p0, q0, V0 = op.p, op.q, op.V

    def rhs(z):
        V = z[v_idx]
        phi = z[phi_idx]
        v = V * np.exp(1j * phi)
        sigma = rot * (np.conj(v) * (L @ v))
        dv = V - V0
        u0 = sigma.real - q0 + alphas * dv
        u1 = sigma.imag - p0 + tank_alphas * dv
        out0 = D00 * u0 + D01 * u1
        out1 = D10 * u0 + D11 * u1
        dz = np.zeros_like(z)
        for n in dynamic:
            ss = sss[n]
            x = z[x_slices[n]]
            cx = ss.C @ x
            out0[n] += cx[0]
            out1[n] += cx[1]
            dz[x_slices[n]] = ss.A @ x + ss.B @ np.array([u0[n], u1[n]])
        dz[phi_idx] = -out1
        dz[v_idx] = -V0 * out0
        return dz

    z_op = np.zeros(dim)
    z_op[phi_idx] = op.phi
    z_op[v_idx] = op.V
    return rhs, z_op


def simulate(grid, op, models, initial_perturbation, t_end, dt=1e-3,
             record_every=1):
    """Fixed-step RK4 integration of the nonlinear closed loop.

    initial_perturbation is a packed state deviation (see state_perturbation).
    Terminates early with the collapse flag when any magnitude reaches zero.
    """
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    sss, _ = _node_data(grid, op, models)
    names, offsets, dim = _layout(models)
    N = grid.n_nodes
    phi_idx = np.array([offsets[n] for n in range(N)])
    v_idx = phi_idx + 1

    rhs, z = vector_field(grid, op, models)
    z = z + np.asarray(initial_perturbation, dtype=float)

    n_steps = int(round(t_end / dt))
    times, states = [0.0], [z.copy()]
    collapsed = False
    collapse_time = None
    for k in range(1, n_steps + 1):
        k1 = rhs(z)
        k2 = rhs(z + 0.5 * dt * k1)
        k3 = rhs(z + 0.5 * dt * k2)
        k4 = rhs(z + dt * k3)
        z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = k * dt
        if np.any(z[v_idx] <= 0.0) or not np.all(np.isfinite(z)):
            collapsed = True
            collapse_time = t
            times.append(t)
            states.append(z.copy())
            break
        if k % record_every == 0 or k == n_steps:
            times.append(t)
            states.append(z.copy())

    Z = np.array(states)
    times = np.array(times)
    phi = Z[:, phi_idx]
    V = Z[:, v_idx]
    x_cols = [i for i, (_, name) in enumerate(names) if name.startswith("x")]
    x = Z[:, x_cols] if x_cols else np.zeros((len(times), 0))
    L = build_laplacian(grid)
    p = np.empty_like(V)
    q = np.empty_like(V)
    for i in range(len(times)):
        if np.all(V[i] > 0):
            sigma = injected_power(grid, L, V[i], phi[i])
            p[i], q[i] = sigma.imag, sigma.real
        else:
            p[i] = q[i] = np.nan
    return Trajectory(times=times, phi=phi, V=V, x=x, p=p, q=q,
                      state_names=names, collapsed=collapsed,
                      collapse_time=collapse_time)


def rotation_reduced_deviation(traj, op):
    """Per-sample deviation norm with the uniform phase shift projected out.

    The rotational symmetry makes raw distance to the operating point
    meaningless: a perturbation generally relaxes to a phase-shifted copy of
    it, so the deviation is measured after centering the phase offsets.
    """
    dphi = traj.phi - op.phi[None, :]
    dphi = dphi - dphi.mean(axis=1, keepdims=True)
    dV = traj.V - op.V[None, :]
    parts = [dphi, dV]
    if traj.x.shape[1]:
        parts.append(traj.x)
    return np.linalg.norm(np.hstack(parts), axis=1)


@dataclass(frozen=True)
class ScanResult:
    cvp_values: np.ndarray
    cwq_values: np.ndarray
    records: tuple
    subset_ok: bool


def cross_coupling_scan(grid, op, base_model, cvp_values, cwq_values,
                        contour=None, threads=1):
    """Oracle and certificate verdicts over a cross-coupling parameter grid.

    Every node runs the base droop law with its own droop ratio pinned at the
    node-local bound; the certificate region must be a subset of the
    oracle-stable region.
    """
    contour = contour if contour is not None else ContourConfig()
    alpha_req = required_alpha(grid, op)
    cvp_values = np.asarray(cvp_values, dtype=float)
    cwq_values = np.asarray(cwq_values, dtype=float)
    points = [(i, j) for i in range(len(cvp_values)) for j in range(len(cwq_values))]

    def evaluate(point):
        i, j = point
        cvp, cwq = cvp_values[i], cwq_values[j]
        models = [replace(base_model, c_vp=cvp, c_wq=cwq, alpha=alpha_req[n])
                  for n in range(grid.n_nodes)]
        report = certify(grid, op, models, contour=contour,
                         phase_diagnostics=False)
        verdict = spectral_verdict(assemble_jacobian(grid, op, models)).verdict
        return {"c_vp": float(cvp), "c_wq": float(cwq),
                "oracle_verdict": verdict,
                "certificate_verdict": report.verdict}

    if threads == 1:
        records = [evaluate(pt) for pt in points]
    else:
        workers = threads if threads > 0 else None
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(evaluate, points))
    subset_ok = all(r["oracle_verdict"] == STABLE
                    for r in records if r["certificate_verdict"] == "certified_stable")
    return ScanResult(cvp_values=cvp_values, cwq_values=cwq_values,
                      records=tuple(records), subset_ok=subset_ok)
