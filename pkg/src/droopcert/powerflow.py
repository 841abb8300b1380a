"""Newton power flow in polar coordinates plus the perturbed-reactive scenario maker.

Both p and q are enforced at every non-slack node (the devices are
grid-forming, there are no PV buses); the slack absorbs both mismatches,
keeps phase 0 and magnitude v_init[slack].
"""

from dataclasses import dataclass

import numpy as np

from .errors import PowerFlowError
from .grid import build_laplacian, injected_power, OperatingPoint


@dataclass(frozen=True)
class PowerFlowSpec:
    """Injection set points and slack choice for one solve."""

    p_spec: np.ndarray
    q_spec: np.ndarray
    slack: int
    v_init: np.ndarray = None

    def __post_init__(self):
        p = np.asarray(self.p_spec, dtype=float)
        q = np.asarray(self.q_spec, dtype=float)
        if p.shape != q.shape:
            raise ValueError("p_spec and q_spec must share one shape")
        if not 0 <= self.slack < p.shape[0]:
            raise ValueError(f"slack index {self.slack} out of range")
        v = self.v_init
        v = np.ones_like(p) if v is None else np.asarray(v, dtype=float).copy()
        if v.shape != p.shape or not np.all(v > 0):
            raise ValueError("v_init must be positive and match the injection shape")
        object.__setattr__(self, "p_spec", p)
        object.__setattr__(self, "q_spec", q)
        object.__setattr__(self, "v_init", v)


@dataclass(frozen=True)
class PowerFlowResult:
    op: OperatingPoint
    iterations: int
    residual: float


def power_jacobian_blocks(L, V, phi):
    """Partials of the rotated-frame (q, p) with respect to (phi, V).

    Returns (dq_dphi, dq_dV, dp_dphi, dp_dV), each N x N.
    """
    B = -np.asarray(L, dtype=float).copy()
    np.fill_diagonal(B, 0.0)
    d = phi[:, None] - phi[None, :]
    C = B * np.cos(d)
    S = B * np.sin(d)
    CV = C @ V
    SV = S @ V
    dp_dphi = -np.outer(V, V) * C
    np.fill_diagonal(dp_dphi, V * CV)
    dp_dV = S * V[:, None]
    np.fill_diagonal(dp_dV, SV)
    dq_dphi = -np.outer(V, V) * S
    np.fill_diagonal(dq_dphi, V * SV)
    dq_dV = -C * V[:, None]
    np.fill_diagonal(dq_dV, 2.0 * V * B.sum(axis=1) - CV)
    return dq_dphi, dq_dV, dp_dphi, dp_dV


def _physical_jacobian_blocks(grid, L, V, phi):
    """Same partials for the physical injections (rotated by kappa)."""
    dq_dphi, dq_dV, dp_dphi, dp_dV = power_jacobian_blocks(L, V, phi)
    if grid.rx_ratio == 0.0:
        return dq_dphi, dq_dV, dp_dphi, dp_dV
    c, s = np.cos(grid.kappa), np.sin(grid.kappa)
    return (c * dq_dphi - s * dp_dphi, c * dq_dV - s * dp_dV,
            s * dq_dphi + c * dp_dphi, s * dq_dV + c * dp_dV)


def _newton(grid, L, spec, tol, max_iter, damping):
    n = grid.n_nodes
    ns = np.array([i for i in range(n) if i != spec.slack])
    V = spec.v_init.copy()
    phi = np.zeros(n)
    residual = np.inf
    for it in range(max_iter + 1):
        sigma = injected_power(grid, L, V, phi)
        rp = sigma.imag[ns] - spec.p_spec[ns]
        rq = sigma.real[ns] - spec.q_spec[ns]
        residual = float(max(np.abs(rp).max(initial=0.0), np.abs(rq).max(initial=0.0)))
        if residual <= tol:
            op = OperatingPoint(V=V, phi=phi, p=sigma.imag, q=sigma.real)
            return PowerFlowResult(op=op, iterations=it, residual=residual)
        if it == max_iter:
            break
        dq_dphi, dq_dV, dp_dphi, dp_dV = _physical_jacobian_blocks(grid, L, V, phi)
        J = np.block([[dp_dphi[np.ix_(ns, ns)], dp_dV[np.ix_(ns, ns)]],
                      [dq_dphi[np.ix_(ns, ns)], dq_dV[np.ix_(ns, ns)]]])
        try:
            step = np.linalg.solve(J, -np.concatenate([rp, rq]))
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError("power flow singular", residual=residual,
                                 iterations=it) from exc
        if not np.all(np.isfinite(step)):
            raise PowerFlowError("power flow singular", residual=residual, iterations=it)
        k = len(ns)
        phi[ns] += damping * step[:k]
        V[ns] += damping * step[k:]
    raise PowerFlowError(
        f"power flow did not converge in {max_iter} iterations "
        f"(residual {residual:.3e})", residual=residual, iterations=max_iter)


def solve(grid, spec, tol=1e-10, max_iter=50):
    """Full Newton solve; on divergence retries once with halved steps."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    L = build_laplacian(grid)
    try:
        return _newton(grid, L, spec, tol, max_iter, damping=1.0)
    except PowerFlowError as exc:
        if "singular" in str(exc):
            raise
        return _newton(grid, L, spec, tol, max_iter, damping=0.5)


def ideal_reactive_power(grid, p_spec, v_set, slack, tol=1e-10, max_iter=50):
    """Reactive injections that hold every magnitude exactly at v_set.

    Solves the angle equations at fixed magnitudes (Newton on phi, slack
    phase 0), then reads off q per node.  Returns (q_ideal, phi).
    """
    L = build_laplacian(grid)
    n = grid.n_nodes
    V = np.asarray(v_set, dtype=float).copy()
    if not np.all(V > 0):
        raise ValueError("v_set must be positive")
    p_spec = np.asarray(p_spec, dtype=float)
    ns = np.array([i for i in range(n) if i != slack])
    phi = np.zeros(n)
    for it in range(max_iter):
        sigma = injected_power(grid, L, V, phi)
        rp = sigma.imag[ns] - p_spec[ns]
        if np.abs(rp).max(initial=0.0) <= tol:
            return sigma.real.copy(), phi
        _, _, dp_dphi, _ = _physical_jacobian_blocks(grid, L, V, phi)
        try:
            step = np.linalg.solve(dp_dphi[np.ix_(ns, ns)], -rp)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError("power flow singular", iterations=it) from exc
        phi[ns] += step
    raise PowerFlowError(
        f"ideal reactive solve did not converge in {max_iter} iterations",
        iterations=max_iter)


def perturb_reactive(q_ideal, magnitude, seed):
    """Scale each entry by (1 + u), u uniform on [-magnitude, +magnitude]."""
    if not 0.0 <= magnitude < 1.0:
        raise ValueError("magnitude must lie in [0, 1)")
    q_ideal = np.asarray(q_ideal, dtype=float)
    rng = np.random.default_rng(seed)
    u = rng.uniform(-magnitude, magnitude, size=q_ideal.shape)
    return q_ideal * (1.0 + u)
