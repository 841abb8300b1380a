"""Network model: topology, susceptance Laplacian, complex couplings, case files.

Conventions: node indices are 0-based everywhere inside the package; case
files on disk use 1-based bus ids.  The grid stores one susceptance magnitude
b > 0 per line plus a single R/X ratio shared by all lines, so the real
Laplacian of the susceptances is the canonical internal object and losses
enter only as a rotation by kappa = atan(rx_ratio).
"""

import json
import math
from dataclasses import dataclass
from importlib.resources import files

import numpy as np

from .errors import CaseFileError

CASE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Branch:
    """Line between two buses with susceptance magnitude b > 0 (p.u.)."""

    from_node: int
    to_node: int
    b: float

    def __post_init__(self):
        if self.from_node == self.to_node:
            raise ValueError(f"branch connects node {self.from_node} to itself")
        if not self.b > 0.0:
            raise ValueError(
                f"nonpositive susceptance b={self.b} on branch "
                f"{self.from_node}-{self.to_node}"
            )

    @property
    def pair(self):
        """Unordered endpoint pair, smaller index first."""
        n, m = self.from_node, self.to_node
        return (n, m) if n < m else (m, n)


@dataclass(frozen=True)
class Grid:
    """Connected network of `n_nodes` buses joined by susceptive lines.

    rx_ratio is tan(kappa), identical for every line; 0 means lossless.
    """

    n_nodes: int
    branches: tuple
    rx_ratio: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if self.n_nodes < 1:
            raise ValueError("grid needs at least one node")
        if not (math.isfinite(self.rx_ratio) and self.rx_ratio >= 0.0):
            raise ValueError(f"rx_ratio must be finite and >= 0, got {self.rx_ratio}")
        seen = set()
        for br in self.branches:
            if not (0 <= br.from_node < self.n_nodes and 0 <= br.to_node < self.n_nodes):
                raise ValueError(f"branch {br.from_node}-{br.to_node} out of range")
            if br.pair in seen:
                raise ValueError(f"duplicate branch between nodes {br.pair}")
            seen.add(br.pair)
        if not self._connected():
            raise ValueError("grid graph is disconnected")

    def _connected(self):
        if self.n_nodes == 1:
            return True
        adj = [[] for _ in range(self.n_nodes)]
        for br in self.branches:
            adj[br.from_node].append(br.to_node)
            adj[br.to_node].append(br.from_node)
        seen = {0}
        stack = [0]
        while stack:
            for m in adj[stack.pop()]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return len(seen) == self.n_nodes

    @property
    def kappa(self):
        """Line loss angle, atan(R/X)."""
        return math.atan(self.rx_ratio)

    def edge_pairs(self):
        """Sorted list of unordered (n, m) endpoint pairs, n < m."""
        return sorted(br.pair for br in self.branches)

    def neighbors(self, n):
        """Indices adjacent to node n."""
        out = []
        for br in self.branches:
            if br.from_node == n:
                out.append(br.to_node)
            elif br.to_node == n:
                out.append(br.from_node)
        return sorted(out)


@dataclass(frozen=True)
class OperatingPoint:
    """Power-flow-consistent state: per-node magnitude, phase, injections.

    p and q are the physical injections of the grid the point was built for
    (rotated by kappa when rx_ratio != 0), so that the point is an
    equilibrium of the nodal dynamics with set points (p, q).
    """

    V: np.ndarray
    phi: np.ndarray
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        for name in ("V", "phi", "p", "q"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.V.shape == self.phi.shape == self.p.shape == self.q.shape):
            raise ValueError("operating point arrays must share one shape")
        if not np.all(self.V > 0):
            raise ValueError("voltage magnitudes must be positive")

    @property
    def n_nodes(self):
        return self.V.shape[0]

    @property
    def v(self):
        """Complex voltages V * exp(j phi)."""
        return self.V * np.exp(1j * self.phi)


@dataclass(frozen=True)
class ComplexCouplings:
    """Hermitian matrix K with K[n, m] = conj(v_n) L[n, m] v_m."""

    K: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.K, dtype=complex).copy()
        K.setflags(write=False)
        object.__setattr__(self, "K", K)
        scale = max(1.0, float(np.abs(K).max(initial=0.0)))
        if np.abs(K - K.conj().T).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("coupling matrix is not Hermitian")


def build_laplacian(grid):
    """Real symmetric susceptance Laplacian: row sums zero, PSD up to roundoff."""
    L = np.zeros((grid.n_nodes, grid.n_nodes))
    for br in grid.branches:
        n, m = br.from_node, br.to_node
        L[n, m] -= br.b
        L[m, n] -= br.b
        L[n, n] += br.b
        L[m, m] += br.b
    return L


def complex_couplings(L, op):
    """Couplings K[n, m] = L[n, m] V_n V_m exp(j(phi_m - phi_n)) at the operating point."""
    L = np.asarray(L, dtype=float)
    if L.shape != (op.n_nodes, op.n_nodes):
        raise ValueError("Laplacian and operating point dimensions disagree")
    v = op.v
    return ComplexCouplings(np.outer(np.conj(v), v) * L)


def nodal_power(K):
    """Per-node sigma = q + jp as the row sums of the coupling matrix."""
    if isinstance(K, ComplexCouplings):
        K = K.K
    return np.asarray(K).sum(axis=1)


def rotated_frame_power(L, V, phi):
    """sigma = q + jp per node in the rotated (lossless) frame."""
    v = np.asarray(V) * np.exp(1j * np.asarray(phi))
    return np.conj(v) * (L @ v)


def injected_power(grid, L, V, phi):
    """Physical per-node sigma = q + jp, including the R/X rotation."""
    sigma = rotated_frame_power(L, V, phi)
    if grid.rx_ratio != 0.0:
        sigma = np.exp(1j * grid.kappa) * sigma
    return sigma


def operating_point(grid, V, phi, L=None):
    """Build a self-consistent OperatingPoint from magnitudes and phases."""
    if L is None:
        L = build_laplacian(grid)
    sigma = injected_power(grid, L, V, phi)
    return OperatingPoint(V=V, phi=phi, p=sigma.imag, q=sigma.real)


@dataclass(frozen=True)
class CaseData:
    """Parsed case file: grid plus base set points."""

    grid: Grid
    p_set: np.ndarray
    q_set: np.ndarray
    v_set: np.ndarray
    slack: int


def _require_keys(obj, required, optional, where, path):
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise CaseFileError(f"{path}: {where}: unknown fields {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise CaseFileError(f"{path}: {where}: missing fields {sorted(missing)}")


def _number(obj, key, where, path):
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise CaseFileError(f"{path}: {where}.{key}: expected a number, got {val!r}")
    return float(val)


def _integer(obj, key, where, path):
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise CaseFileError(f"{path}: {where}.{key}: expected an integer, got {val!r}")
    return val


def load_case(path):
    """Load and validate a case file; returns CaseData.

    Schema (JSON, 1-based bus ids):
      {"schema_version": 1, "n_nodes": N, "rx_ratio": t, "slack": id,
       "nodes":    [{"id", "p_set", "q_set", "v_set"?}, ...],
       "branches": [{"from", "to", "b"}, ...]}
    Unknown fields are rejected.
    """
    path = str(path)
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise CaseFileError(f"{path}: cannot read case file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CaseFileError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise CaseFileError(f"{path}: top level must be an object")
    _require_keys(raw, ("schema_version", "n_nodes", "rx_ratio", "slack",
                        "nodes", "branches"), (), "header", path)
    version = _integer(raw, "schema_version", "header", path)
    if version != CASE_SCHEMA_VERSION:
        raise CaseFileError(
            f"{path}: schema_version {version} unsupported (expected {CASE_SCHEMA_VERSION})"
        )
    n_nodes = _integer(raw, "n_nodes", "header", path)
    if n_nodes < 1:
        raise CaseFileError(f"{path}: n_nodes must be >= 1")
    rx_ratio = _number(raw, "rx_ratio", "header", path)
    if rx_ratio < 0:
        raise CaseFileError(f"{path}: rx_ratio must be >= 0")
    slack_id = _integer(raw, "slack", "header", path)
    if not 1 <= slack_id <= n_nodes:
        raise CaseFileError(f"{path}: slack id {slack_id} out of range 1..{n_nodes}")

    if not isinstance(raw["nodes"], list):
        raise CaseFileError(f"{path}: nodes must be a list")
    p_set = np.zeros(n_nodes)
    q_set = np.zeros(n_nodes)
    v_set = np.ones(n_nodes)
    seen_ids = set()
    for i, node in enumerate(raw["nodes"]):
        where = f"nodes[{i}]"
        if not isinstance(node, dict):
            raise CaseFileError(f"{path}: {where}: expected an object")
        _require_keys(node, ("id", "p_set", "q_set"), ("v_set",), where, path)
        node_id = _integer(node, "id", where, path)
        if not 1 <= node_id <= n_nodes:
            raise CaseFileError(f"{path}: {where}: id {node_id} out of range 1..{n_nodes}")
        if node_id in seen_ids:
            raise CaseFileError(f"{path}: {where}: duplicate node id {node_id}")
        seen_ids.add(node_id)
        idx = node_id - 1
        p_set[idx] = _number(node, "p_set", where, path)
        q_set[idx] = _number(node, "q_set", where, path)
        if "v_set" in node:
            v = _number(node, "v_set", where, path)
            if v <= 0:
                raise CaseFileError(f"{path}: {where}: v_set must be > 0")
            v_set[idx] = v
    if len(seen_ids) != n_nodes:
        missing = sorted(set(range(1, n_nodes + 1)) - seen_ids)
        raise CaseFileError(f"{path}: missing node entries for ids {missing}")

    if not isinstance(raw["branches"], list):
        raise CaseFileError(f"{path}: branches must be a list")
    branches = []
    seen_pairs = set()
    for i, entry in enumerate(raw["branches"]):
        where = f"branches[{i}]"
        if not isinstance(entry, dict):
            raise CaseFileError(f"{path}: {where}: expected an object")
        _require_keys(entry, ("from", "to", "b"), (), where, path)
        f_id = _integer(entry, "from", where, path)
        t_id = _integer(entry, "to", where, path)
        b = _number(entry, "b", where, path)
        for node_id in (f_id, t_id):
            if not 1 <= node_id <= n_nodes:
                raise CaseFileError(f"{path}: {where}: node id {node_id} out of range")
        if f_id == t_id:
            raise CaseFileError(f"{path}: {where}: self-loop on node {f_id}")
        pair = (min(f_id, t_id), max(f_id, t_id))
        if pair in seen_pairs:
            raise CaseFileError(f"{path}: {where}: duplicate branch {pair[0]}-{pair[1]}")
        seen_pairs.add(pair)
        if b <= 0:
            raise CaseFileError(f"{path}: {where}: nonpositive susceptance b={b}")
        branches.append(Branch(f_id - 1, t_id - 1, b))

    try:
        grid = Grid(n_nodes=n_nodes, branches=tuple(branches), rx_ratio=rx_ratio)
    except ValueError as exc:
        raise CaseFileError(f"{path}: {exc}") from exc
    return CaseData(grid=grid, p_set=p_set, q_set=q_set, v_set=v_set,
                    slack=slack_id - 1)


def bundled_case_path(name):
    """Filesystem path of a case file shipped with the package."""
    return str(files("droopcert.cases").joinpath(f"{name}.json"))
