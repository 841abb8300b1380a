"""Nodal dynamic models and their common linear realization.

Every model normalizes to a NodalStateSpace whose transfer matrix

    T(s) = D + C (sI - A)^{-1} B

maps shifted-reactive and active power deviations [dq_hat, dp] to minus
the complex-frequency outputs: [rho, omega] = -(C x + D u) with
x' = A x + B u.  The certificate and the oracle consume only this form,
so a new model plugs in by providing a realization.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ModelError, PoleError


@dataclass(frozen=True)
class GeneralizedDroop:
    """Static droop law: frequency and voltage velocity proportional to (dq_hat, dp).

    c_wp, c_wq drive the angle; c_vp, c_vq drive the relative voltage
    velocity; alpha is the V-q droop ratio defining q_hat = q + alpha V.
    No sign constraints here: the certificate decides admissibility.
    """

    c_wp: float
    c_wq: float
    c_vp: float
    c_vq: float
    alpha: float

    def __post_init__(self):
        for name in ("c_wp", "c_wq", "c_vp", "c_vq", "alpha"):
            if not math.isfinite(getattr(self, name)):
                raise ModelError(f"{name} must be finite")


@dataclass(frozen=True)
class ThirdOrderInverter:
    """Second-order phase loop with feed-through delta plus first-order voltage droop.

        phi' = x - delta * dp
        tau_p x' = -damping * x - k_p * dp
        tau_q V' = -dV - k_q * dq

    alpha = 1/k_q.  damping > 0 is what internal stability will require.
    """

    tau_p: float
    tau_q: float
    damping: float
    k_p: float
    k_q: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.tau_p > 0:
            raise ModelError("tau_p must be positive")
        if not self.tau_q > 0:
            raise ModelError("tau_q must be positive")
        if self.k_q == 0:
            raise ModelError("k_q must be nonzero (alpha = 1/k_q)")
        if self.delta < 0:
            raise ModelError("delta must be >= 0")

    @property
    def alpha(self):
        return 1.0 / self.k_q


@dataclass(frozen=True)
class ThirdOrderMachine:
    """Machine variant: voltage driven by the reactive current through x_transient.

        tau_v V' = -dV - x_transient * d(q/V)

    Realized through the invertible parameter mapping onto ThirdOrderInverter.
    """

    tau_v: float
    x_transient: float
    tau_p: float
    damping: float
    k_p: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.tau_v > 0:
            raise ModelError("tau_v must be positive")
        if self.x_transient < 0:
            raise ModelError("x_transient must be >= 0")
        if not self.tau_p > 0:
            raise ModelError("tau_p must be positive")
        if self.delta < 0:
            raise ModelError("delta must be >= 0")


@dataclass(frozen=True)
class NodalStateSpace:
    """Real realization (A, B, C, D) of the nodal 2x2 transfer matrix T(s).

    Rows of T are (rho, omega), columns are (q_hat, p).  alpha is the V-q
    droop ratio the realization was built with.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    alpha: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float)).copy()
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], 2).copy()
        C = np.asarray(self.C, dtype=float).reshape(2, A.shape[0]).copy()
        D = np.atleast_2d(np.asarray(self.D, dtype=float)).copy()
        if A.shape[0] != A.shape[1]:
            raise ModelError("A must be square")
        if B.shape != (A.shape[0], 2) or C.shape != (2, A.shape[0]) or D.shape != (2, 2):
            raise ModelError("realization blocks have inconsistent dimensions")
        for arr in (A, B, C, D):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n_var(self):
        return self.A.shape[0]


@dataclass(frozen=True)
class TransferSample:
    """One evaluation T(s) of a nodal transfer matrix."""

    s: complex
    T: np.ndarray


def to_state_space(model, v0, q0=0.0):
    """Linearize a nodal model at operating voltage v0 (and reactive power q0).

    The V0 factor in the voltage droop law cancels against rho = V'/V0, so
    the droop D-block is operating-point free; the third-order models keep
    v0 in the reactive channel gain.
    """
    if v0 <= 0:
        raise ModelError("operating voltage must be positive")
    if isinstance(model, GeneralizedDroop):
        empty = np.zeros((0, 0))
        D = np.array([[model.c_vq, model.c_vp], [model.c_wq, model.c_wp]])
        return NodalStateSpace(A=empty, B=np.zeros((0, 2)), C=np.zeros((2, 0)),
                               D=D, alpha=model.alpha)
    if isinstance(model, ThirdOrderInverter):
        A = np.array([[-model.damping / model.tau_p]])
        B = np.array([[0.0, model.k_p / model.tau_p]])
        C = np.array([[0.0], [1.0]])
        D = np.array([[model.k_q / (v0 * model.tau_q), 0.0], [0.0, model.delta]])
        return NodalStateSpace(A=A, B=B, C=C, D=D, alpha=model.alpha)
    if isinstance(model, ThirdOrderMachine):
        return to_state_space(machine_to_inverter(model, v0, q0), v0, q0)
    raise ModelError(f"unsupported model type {type(model).__name__}")


def eval_transfer(ss, s):
    """Exact resolvent evaluation of T(s); raises PoleError at poles of the realization."""
    s = complex(s)
    if ss.n_var == 0:
        return TransferSample(s=s, T=ss.D.astype(complex))
    eigs = np.linalg.eigvals(ss.A)
    if np.abs(eigs - s).min() < 1e-12:
        raise PoleError(f"s={s} is a pole of the realization")
    resolvent = np.linalg.solve(s * np.eye(ss.n_var) - ss.A, ss.B)
    return TransferSample(s=s, T=ss.D + ss.C @ resolvent)


def transfer_at_infinity(ss):
    """Analytic s -> inf limit of T(s): the feed-through block."""
    return ss.D.astype(complex)


def internal_stability(ss, tol=1e-10):
    """True iff every eigenvalue of A has real part < -tol (vacuous for n_var = 0)."""
    if ss.n_var == 0:
        return True
    return bool(np.all(np.linalg.eigvals(ss.A).real < -tol))


def machine_to_inverter(machine, v0, q0):
    """Map machine parameters (x_transient, tau_v) to inverter (k_q, tau_q) at (v0, q0)."""
    if v0 <= 0:
        raise ModelError("operating voltage must be positive")
    if machine.x_transient == 0:
        raise ModelError("x_transient = 0 maps to k_q = 0, which is excluded")
    denom = v0 * v0 - 2.0 * machine.x_transient * q0
    if abs(denom) < 1e-14:
        raise ModelError("singular machine-to-inverter mapping denominator")
    k_q = machine.x_transient * v0 / denom
    tau_q = machine.tau_v * v0 * v0 / denom
    if tau_q <= 0:
        raise ModelError("mapping leaves the model class: mapped tau_q <= 0")
    return ThirdOrderInverter(tau_p=machine.tau_p, tau_q=tau_q,
                              damping=machine.damping, k_p=machine.k_p,
                              k_q=k_q, delta=machine.delta)


def inverter_to_machine(inverter, v0, q0):
    """Inverse mapping: (k_q, tau_q) back to machine (x_transient, tau_v) at (v0, q0)."""
    if v0 <= 0:
        raise ModelError("operating voltage must be positive")
    gamma = 1.0 + 2.0 * inverter.k_q * q0 / v0
    if abs(gamma) < 1e-14:
        raise ModelError("singular inverter-to-machine mapping denominator")
    x_transient = v0 * inverter.k_q / gamma
    tau_v = inverter.tau_q / gamma
    if tau_v <= 0 or x_transient < 0:
        raise ModelError("mapping leaves the model class: tau_v <= 0 or x_transient < 0")
    return ThirdOrderMachine(tau_v=tau_v, x_transient=x_transient,
                             tau_p=inverter.tau_p, damping=inverter.damping,
                             k_p=inverter.k_p, delta=inverter.delta)


def model_alpha(model, v0=1.0, q0=0.0):
    """V-q droop ratio of a model (machines resolve it through the mapping)."""
    if isinstance(model, (GeneralizedDroop, ThirdOrderInverter)):
        return model.alpha
    if isinstance(model, ThirdOrderMachine):
        return machine_to_inverter(model, v0, q0).alpha
    raise ModelError(f"unsupported model type {type(model).__name__}")


def with_alpha(model, alpha):
    """Copy of a model with its V-q droop ratio replaced."""
    if isinstance(model, GeneralizedDroop):
        return replace(model, alpha=float(alpha))
    if isinstance(model, ThirdOrderInverter):
        if alpha == 0:
            raise ModelError("third-order droop ratio cannot be zero (k_q = 1/alpha)")
        return replace(model, k_q=1.0 / float(alpha))
    raise ModelError(f"cannot set alpha on model type {type(model).__name__}")
