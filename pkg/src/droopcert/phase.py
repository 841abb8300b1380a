"""Numerical range, matrix phases, sectoriality classes, and small PSD/accretivity tests.

The boundary of the numerical range W(M) is sampled by the support-function
method: for each direction theta, the top eigenvector u of the Hermitian part
of exp(-j theta) M yields the exact boundary point u^H M u.  Phases and the
position of the origin are then read off the sampled support data.
"""

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConsistencyError


class Sectoriality(Enum):
    SECTORIAL = "sectorial"
    QUASI_SECTORIAL = "quasi_sectorial"
    SEMI_SECTORIAL = "semi_sectorial"
    NON_SECTORIAL = "non_sectorial"


@dataclass(frozen=True)
class PhaseInterval:
    """Extreme arguments of W(M) plus the sectoriality class.

    phi_min and phi_max are None when the phases are undefined (zero matrix,
    or 0 interior to W so no supporting half-plane exists).
    """

    phi_min: float
    phi_max: float
    sectoriality: Sectoriality
    contains_zero: bool

    @property
    def delta(self):
        if self.phi_min is None or self.phi_max is None:
            return None
        return self.phi_max - self.phi_min


@dataclass(frozen=True)
class RangeBoundary:
    """Sampled boundary points of W(M), ordered by support direction."""

    points: np.ndarray
    n_angles: int


@dataclass(frozen=True)
class AccretivityCheck:
    """Result of the 2x2 strict-accretivity test with both inequality slacks."""

    passed: bool
    trace_slack: float
    det_slack: float


@dataclass(frozen=True)
class PsdCheck:
    passed: bool
    lambda_min: float


def _hermitian_part(M):
    return 0.5 * (M + M.conj().T)


def _support_data(M, theta):
    """Support value and boundary point of W(M) in direction theta."""
    H = _hermitian_part(np.exp(-1j * theta) * M)
    w, U = np.linalg.eigh(H)
    u = U[:, -1]
    return float(w[-1]), complex(u.conj() @ (M @ u))


def numerical_range_boundary(M, n_angles=720):
    """Exact boundary samples of W(M) at n_angles support directions."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("numerical range needs a square matrix")
    if n_angles < 8:
        raise ValueError("n_angles must be >= 8")
    points = np.empty(n_angles, dtype=complex)
    for k in range(n_angles):
        _, points[k] = _support_data(M, 2.0 * math.pi * k / n_angles)
    return RangeBoundary(points=points, n_angles=n_angles)


def _min_support(M, n_angles):
    """Minimum over directions of the support function, refined locally.

    min_theta h(theta) equals -dist(0, W(M)) when 0 is outside, and is
    > 0 iff 0 lies in the interior.
    """
    thetas = 2.0 * math.pi * np.arange(n_angles) / n_angles
    h = np.array([_support_data(M, t)[0] for t in thetas])
    k = int(np.argmin(h))
    # golden-section refinement between the neighbors of the grid minimum
    lo = thetas[k] - 2.0 * math.pi / n_angles
    hi = thetas[k] + 2.0 * math.pi / n_angles
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _support_data(M, c)[0]
    fd = _support_data(M, d)[0]
    for _ in range(60):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _support_data(M, c)[0]
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _support_data(M, d)[0]
    theta_star = 0.5 * (a + b)
    h_star = min(float(h[k]), _support_data(M, theta_star)[0])
    return h_star, theta_star


ANGLE_TOL = 1e-3


def _contact_arc(M, theta_star, eps_h, n_angles):
    """Arc of support directions whose lines pass through the origin.

    When 0 sits on the boundary of W(M), the supporting lines through 0 form
    an arc [theta_a, theta_b] around theta_star; its edges give the exact
    extreme arguments phi_max = theta_a + 3 pi / 2, phi_min = theta_b + pi / 2.
    """
    step = 2.0 * math.pi / n_angles

    def h_of(t):
        return _support_data(M, t)[0]

    def edge(direction):
        t = theta_star
        travelled = 0.0
        while travelled < 2.0 * math.pi and h_of(t + direction * step) <= eps_h:
            t += direction * step
            travelled += step
        if travelled >= 2.0 * math.pi:
            return None
        lo, hi = t, t + direction * step
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if h_of(mid) <= eps_h:
                lo = mid
            else:
                hi = mid
        return lo

    theta_b = edge(+1.0)
    theta_a = edge(-1.0)
    if theta_a is None or theta_b is None:
        return None
    return theta_a, theta_b


def phases(M, tol=1e-9, n_angles=720):
    """Extreme arguments of W(M) and the sectoriality classification.

    Classes follow the numerical-range taxonomy: sectorial when 0 is
    strictly outside W(M); quasi/semi-sectorial when 0 sits on the boundary
    with argument spread < pi / <= pi; non-sectorial when 0 is interior.
    """
    M = np.asarray(M, dtype=complex)
    scale = float(np.abs(M).max(initial=0.0))
    if scale == 0.0:
        return PhaseInterval(phi_min=None, phi_max=None,
                             sectoriality=Sectoriality.NON_SECTORIAL,
                             contains_zero=True)
    eps_h = tol * max(1.0, scale)
    h_star, theta_star = _min_support(M, n_angles)
    if h_star > eps_h:
        return PhaseInterval(phi_min=None, phi_max=None,
                             sectoriality=Sectoriality.NON_SECTORIAL,
                             contains_zero=True)
    contains_zero = h_star >= -eps_h

    if contains_zero:
        arc = _contact_arc(M, theta_star, eps_h, n_angles)
        if arc is None:
            # supporting lines through 0 in every direction: W is a point at 0
            return PhaseInterval(phi_min=None, phi_max=None,
                                 sectoriality=Sectoriality.NON_SECTORIAL,
                                 contains_zero=True)
        theta_a, theta_b = arc
        phi_min = theta_b + math.pi / 2
        phi_max = theta_a + 3.0 * math.pi / 2
        if phi_min > phi_max:
            # arc-edge roundoff crossed the degenerate (single-argument) case
            phi_min = phi_max = 0.5 * (phi_min + phi_max)
    else:
        # 0 strictly outside: arguments of the sampled boundary points, taken
        # in the width-pi branch around theta_star + pi that contains W
        center = theta_star + math.pi
        boundary = numerical_range_boundary(M, n_angles).points
        args = [center + cmath.phase(z * cmath.exp(-1j * center))
                for z in boundary if abs(z) > eps_h]
        phi_min = min(args)
        phi_max = max(args)

    shift = _wrap(phi_min) - phi_min
    phi_min += shift
    phi_max += shift
    delta = phi_max - phi_min
    if not contains_zero:
        sect = Sectoriality.SECTORIAL
    elif delta < math.pi - ANGLE_TOL:
        sect = Sectoriality.QUASI_SECTORIAL
    elif delta <= math.pi + ANGLE_TOL:
        sect = Sectoriality.SEMI_SECTORIAL
    else:
        sect = Sectoriality.NON_SECTORIAL
    return PhaseInterval(phi_min=phi_min, phi_max=phi_max,
                         sectoriality=sect, contains_zero=contains_zero)


def _wrap(angle):
    """Map an angle to (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


def is_accretive_2x2(T, margin=0.0):
    """Strict accretivity of a 2x2 matrix indexed (rho, omega) x (q_hat, p).

    Passes iff Re T11 + Re T22 > margin and
    Re T11 * Re T22 - |T21 + conj(T12)|^2 / 4 > margin; equivalent to the
    numerical range lying in the open right half-plane.
    """
    T = np.asarray(T, dtype=complex)
    if T.shape != (2, 2):
        raise ValueError("accretivity test is defined for 2x2 matrices")
    trace_slack = float(T[0, 0].real + T[1, 1].real)
    det_slack = float(T[0, 0].real * T[1, 1].real
                      - 0.25 * abs(T[1, 0] + np.conj(T[0, 1])) ** 2)
    return AccretivityCheck(passed=bool(trace_slack > margin and det_slack > margin),
                            trace_slack=trace_slack, det_slack=det_slack)


def psd_check(H, tol=1e-9):
    """Positive semidefiniteness of a Hermitian matrix: lambda_min >= -tol."""
    H = np.asarray(H, dtype=complex)
    scale = max(1.0, float(np.abs(H).max(initial=0.0)))
    if np.abs(H - H.conj().T).max(initial=0.0) > tol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    lam = float(np.linalg.eigvalsh(_hermitian_part(H)).min())
    return PsdCheck(passed=bool(lam >= -tol), lambda_min=lam)


def combined_phase_bounds(intervals):
    """Phase interval of a block-diagonal collection: envelope of the blocks.

    The numerical range of a direct sum is the convex hull of the blocks'
    ranges, so the extreme phases are the blockwise extremes.
    """
    intervals = list(intervals)
    if not intervals:
        raise ValueError("needs at least one interval")
    for iv in intervals:
        if iv.sectoriality is Sectoriality.NON_SECTORIAL or iv.phi_min is None:
            raise ConsistencyError("combined phase bounds need semi-sectorial blocks")
    phi_min = min(iv.phi_min for iv in intervals)
    phi_max = max(iv.phi_max for iv in intervals)
    delta = phi_max - phi_min
    contains_zero = any(iv.contains_zero for iv in intervals)
    tol = 1e-12
    if delta > math.pi + tol:
        sect = Sectoriality.NON_SECTORIAL
    elif contains_zero:
        sect = (Sectoriality.QUASI_SECTORIAL if delta < math.pi - tol
                else Sectoriality.SEMI_SECTORIAL)
    else:
        sect = Sectoriality.SECTORIAL
    return PhaseInterval(phi_min=phi_min, phi_max=phi_max,
                         sectoriality=sect, contains_zero=contains_zero)
