"""Synchronous simulation of a network of agents, exosystems and protocols.

All agents sharing a plant and a protocol form a group and are advanced with
one matrix product per block, so a step costs a handful of small GEMMs
regardless of ``N``.  Every value at ``k + 1`` is computed from the snapshot at
``k`` only.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .control_math import LtiAgent, clustered_spectral_radius, spectral_radius
from .errors import DimensionMismatch, NumericOverflow, SizeLimit
from .graph_topology import (
    DirectedGraph,
    RootSet,
    build_laplacian,
    has_spanning_tree,
    root_set_covers,
)
from .heterogeneous import ReferenceExosystem
from .realization import ProtocolRealization

__all__ = [
    "AgentGroup",
    "Scenario",
    "NetworkState",
    "TrajectoryLog",
    "ClosedLoop",
    "DecayFit",
    "initial_state",
    "step",
    "run",
    "closed_loop_matrix",
    "fit_decay",
    "write_csv",
    "read_csv_rows",
    "format_value",
]

OVERFLOW_LIMIT = 1e12
MAX_PROBE_STATES = 5000
DTYPES = {"float64": np.float64, "longdouble": np.longdouble}


@dataclass(frozen=True)
class AgentGroup:
    """Agents sharing one plant, one disturbance model and one protocol realization."""

    name: str
    plant: LtiAgent
    S: np.ndarray
    realization: ProtocolRealization
    members: tuple
    Cm: np.ndarray = None
    Pi: np.ndarray = None

    def __post_init__(self):
        n = self.plant.A.shape[0]
        Cm = np.zeros((0, n)) if self.Cm is None else np.atleast_2d(np.asarray(self.Cm, dtype=float))
        object.__setattr__(self, "Cm", Cm)
        object.__setattr__(self, "members", tuple(int(m) for m in self.members))
        object.__setattr__(self, "S", np.atleast_2d(np.asarray(self.S, dtype=float)))
        r = self.realization
        if r.n_inputs != self.plant.B.shape[1]:
            raise DimensionMismatch(f"group {self.name}: protocol drives {r.n_inputs} inputs, plant has {self.plant.B.shape[1]}")
        if r.n_meas != Cm.shape[0]:
            raise DimensionMismatch(f"group {self.name}: protocol expects {r.n_meas} measurements, Cm gives {Cm.shape[0]}")
        if r.n_zeta != self.plant.C.shape[0]:
            raise DimensionMismatch(f"group {self.name}: protocol expects {r.n_zeta}-dim relative outputs")


@dataclass
class Scenario:
    graph: DirectedGraph
    groups: list
    mode: str = "pairwise"
    roots: RootSet = None
    reference: ReferenceExosystem = None
    x0: list = None
    omega0: list = None
    s0: list = None
    horizon: int = 100
    dtype: str = "float64"
    overflow_limit: float = OVERFLOW_LIMIT
    name: str = "scenario"
    seed: int = None

    def __post_init__(self):
        N = self.graph.n_agents
        seen = sorted(m for g in self.groups for m in g.members)
        if seen != list(range(N)):
            raise DimensionMismatch(f"groups must cover agents 0..{N - 1} exactly once")
        if self.mode not in ("pairwise", "regulated"):
            raise ValueError(f"unknown metric mode {self.mode!r}")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {sorted(DTYPES)}")
        p = {g.plant.C.shape[0] for g in self.groups}
        ne = {g.realization.n_exchange for g in self.groups}
        if len(p) != 1 or len(ne) != 1:
            raise DimensionMismatch("all agents must share output and exchange dimensions")
        if self.mode == "regulated" and (self.reference is None or self.roots is None):
            raise ValueError("regulated mode needs a reference exosystem and a root set")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")

    @property
    def n_agents(self):
        return self.graph.n_agents

    @property
    def n_outputs(self):
        return self.groups[0].plant.C.shape[0]

    def group_of(self):
        out = [None] * self.n_agents
        for gi, g in enumerate(self.groups):
            for j, m in enumerate(g.members):
                out[m] = (gi, j)
        return out

    def check_graph(self):
        if self.mode == "pairwise":
            return has_spanning_tree(self.graph)
        return root_set_covers(self.graph, self.roots)

    @cached_property
    def network(self):
        """Relative-signal maps and per-agent self-coupling coefficients."""
        g = self.graph
        L = build_laplacian(g)
        N = g.n_agents
        if self.mode == "pairwise":
            W = L / (1.0 + g.dbar_in)[:, None]
            return {"W_y": W, "W_eta": W, "coupling": np.zeros(N)}
        iota = self.roots.iota
        scale = 1.0 / (2.0 + g.dbar_in)
        return {
            "W_y": scale[:, None] * (L + np.diag(iota)),
            "W_eta": scale[:, None] * L,
            "coupling": iota * scale,
        }


@dataclass
class NetworkState:
    k: int
    x: list
    w: list
    s: list
    x_r: np.ndarray = None

    def copy(self):
        return NetworkState(self.k, [a.copy() for a in self.x], [a.copy() for a in self.w],
                            [a.copy() for a in self.s], None if self.x_r is None else self.x_r.copy())

    def max_abs(self):
        vals = [np.max(np.abs(a), initial=0.0) for a in self.x + self.s]
        return max(vals, default=0.0)

    def disturbance_scale(self):
        vals = [np.max(np.abs(a), initial=0.0) for a in self.w]
        if self.x_r is not None:
            vals.append(np.max(np.abs(self.x_r), initial=0.0))
        return max(vals, default=0.0)


@dataclass
class TrajectoryLog:
    y: np.ndarray
    sync_error: np.ndarray
    relative_error: np.ndarray
    y_r: np.ndarray = None
    state_sync: np.ndarray = None
    mode: str = "pairwise"

    @property
    def horizon(self):
        return self.sync_error.shape[0] - 1

    def header(self):
        N, p = self.y.shape[1], self.y.shape[2]
        cols = ["k"] + [f"y_{i + 1}_{c + 1}" for i in range(N) for c in range(p)]
        if self.y_r is not None:
            cols += [f"y_r_{c + 1}" for c in range(p)]
        return cols + ["sync_error", "relative_error"]

    def rows(self):
        K = self.sync_error.shape[0]
        flat = self.y.reshape(K, -1)
        for k in range(K):
            vals = list(flat[k])
            if self.y_r is not None:
                vals += list(self.y_r[k])
            vals += [self.sync_error[k], self.relative_error[k]]
            yield k, vals


# ---------------------------------------------------------------------------


class _Prepared:
    """Scenario matrices cast to the run dtype, plus group index maps."""

    def __init__(self, sc: Scenario, dtype):
        self.dtype = dtype
        net = sc.network
        cast = lambda M: np.asarray(M, dtype=dtype)  # noqa: E731
        self.W_y = cast(net["W_y"])
        self.W_eta = cast(net["W_eta"])
        self.groups = []
        for g in sc.groups:
            r, pl = g.realization, g.plant
            idx = np.array(g.members, dtype=int)
            c = cast(net["coupling"][idx])[:, None]
            self.groups.append({
                "idx": idx, "c": c, "has_self": bool(np.any(r.A_self)) and bool(np.any(c)),
                "A": cast(pl.A).T, "B": cast(pl.B).T, "C": cast(pl.C).T, "E": cast(pl.E).T, "G": cast(pl.G).T,
                "S": cast(g.S).T, "Cm": cast(g.Cm).T,
                "Ap": cast(r.A).T, "As": cast(r.A_self).T, "Bzeta": cast(r.B_zeta).T, "Bzhat": cast(r.B_zhat).T,
                "Bz": cast(r.B_z).T, "Cu": cast(r.C_u).T, "Dz": cast(r.D_z).T, "Ceta": cast(r.C_eta).T,
            })
        self.N = sc.n_agents
        self.p = sc.n_outputs
        self.ne = sc.groups[0].realization.n_exchange
        if sc.reference is not None:
            self.Ar = cast(sc.reference.A_r)
            self.Cr = cast(sc.reference.C_r)
        else:
            self.Ar = self.Cr = None
        self.regulated = sc.mode == "regulated"
        self.limit = sc.overflow_limit


def _prepared(sc: Scenario, dtype=None):
    dtype = DTYPES[sc.dtype] if dtype is None else dtype
    cache = sc.__dict__.setdefault("_prepared_cache", {})
    key = np.dtype(dtype).name
    if key not in cache:
        cache[key] = _Prepared(sc, dtype)
    return cache[key]


def initial_state(sc: Scenario, dtype=None) -> NetworkState:
    dtype = DTYPES[sc.dtype] if dtype is None else dtype
    x, w, s = [], [], []
    for g in sc.groups:
        n, nw, ns = g.plant.A.shape[0], g.S.shape[0], g.realization.n_states
        idx = list(g.members)
        x.append(np.array([np.asarray(sc.x0[i], dtype=float) for i in idx], dtype=dtype).reshape(len(idx), n)
                 if sc.x0 is not None else np.zeros((len(idx), n), dtype=dtype))
        w.append(np.array([np.asarray(sc.omega0[i], dtype=float) for i in idx], dtype=dtype).reshape(len(idx), nw)
                 if sc.omega0 is not None else np.zeros((len(idx), nw), dtype=dtype))
        s.append(np.array([np.asarray(sc.s0[i], dtype=float) for i in idx], dtype=dtype).reshape(len(idx), ns)
                 if sc.s0 is not None else np.zeros((len(idx), ns), dtype=dtype))
    x_r = None
    if sc.reference is not None:
        x_r = np.asarray(sc.reference.x_r0, dtype=dtype).copy()
    return NetworkState(0, x, w, s, x_r)


def _outputs(state: NetworkState, P: _Prepared):
    Y = np.zeros((P.N, P.p), dtype=P.dtype)
    Eta = np.zeros((P.N, P.ne), dtype=P.dtype)
    for g, x, w, s in zip(P.groups, state.x, state.w, state.s):
        Y[g["idx"]] = x @ g["C"] + w @ g["G"]
        Eta[g["idx"]] = s @ g["Ceta"]
    y_r = state.x_r @ P.Cr.T if P.Cr is not None else None
    return Y, Eta, y_r


def _advance(state: NetworkState, P: _Prepared) -> NetworkState:
    Y, Eta, y_r = _outputs(state, P)
    zeta = P.W_y @ (Y - y_r) if P.regulated else P.W_y @ Y
    zhat = P.W_eta @ Eta
    nx, nw, ns = [], [], []
    for g, x, w, s in zip(P.groups, state.x, state.w, state.s):
        idx = g["idx"]
        z = x @ g["Cm"]
        u = s @ g["Cu"] + z @ g["Dz"]
        s_next = s @ g["Ap"] + zeta[idx] @ g["Bzeta"] + zhat[idx] @ g["Bzhat"] + z @ g["Bz"]
        if g["has_self"]:
            s_next = s_next + g["c"] * (s @ g["As"])
        nx.append(x @ g["A"] + u @ g["B"] + w @ g["E"])
        nw.append(w @ g["S"])
        ns.append(s_next)
    x_r = state.x_r @ P.Ar.T if P.Ar is not None else None
    return NetworkState(state.k + 1, nx, nw, ns, x_r)


def _guard(state: NetworkState, limit):
    big = state.max_abs()
    ref = max(1.0, float(state.disturbance_scale()))
    if not np.isfinite(big) or big > limit * ref:
        raise NumericOverflow(
            f"state magnitude {float(big):.3e} exceeds {limit:.0e} x disturbance scale {ref:.3e}", step=state.k)


def step(state: NetworkState, scenario: Scenario) -> NetworkState:
    """Advance every agent, exosystem, reference and protocol by one synchronous step."""
    P = _prepared(scenario, state.x[0].dtype.type if state.x else None)
    nxt = _advance(state, P)
    _guard(nxt, P.limit)
    return nxt


def _metrics(Y, y_r, state, P, Pi_groups):
    if P.regulated:
        err = np.max(np.abs(Y - y_r)) if Y.size else 0.0
    else:
        err = np.max(Y.max(axis=0) - Y.min(axis=0)) if Y.size else 0.0
    wmax = max((np.max(np.abs(w), initial=0.0) for w in state.w), default=0.0)
    rel = err / max(1.0, wmax)
    ss = None
    if Pi_groups is not None:
        d = np.vstack([x - w @ Pi.T for x, w, Pi in zip(state.x, state.w, Pi_groups)])
        ss = np.max(d.max(axis=0) - d.min(axis=0)) if d.size else 0.0
    return err, rel, ss


def run(scenario: Scenario, state: NetworkState = None) -> TrajectoryLog:
    """Simulate ``horizon`` steps; record outputs and synchronization errors at every step."""
    P = _prepared(scenario)
    st = initial_state(scenario) if state is None else state
    K = scenario.horizon
    dt = P.dtype
    y = np.zeros((K + 1, P.N, P.p), dtype=dt)
    y_r = np.zeros((K + 1, P.p), dtype=dt) if P.regulated else None
    err = np.zeros(K + 1, dtype=dt)
    rel = np.zeros(K + 1, dtype=dt)
    Pi_groups = None
    if len(scenario.groups) == 1 and scenario.groups[0].Pi is not None and not P.regulated:
        Pi_groups = [np.asarray(scenario.groups[0].Pi, dtype=dt)]
    ss = np.zeros(K + 1, dtype=dt) if Pi_groups is not None else None
    for k in range(K + 1):
        Y, _, yr = _outputs(st, P)
        y[k] = Y
        if y_r is not None:
            y_r[k] = yr
        e, r, d = _metrics(Y, yr, st, P, Pi_groups)
        err[k], rel[k] = e, r
        if ss is not None:
            ss[k] = d
        if k < K:
            st = _advance(st, P)
            _guard(st, P.limit)
    return TrajectoryLog(y, err, rel, y_r, ss, scenario.mode)


# ---------------------------------------------------------------------------
# spectral oracle


@dataclass
class ClosedLoop:
    matrix: np.ndarray
    radius: float
    full_radius: float
    agent_dims: list
    exogenous: bool = False

    def to_dict(self):
        return {"radius": self.radius, "full_radius": self.full_radius, "size": int(self.matrix.shape[0])}


def _layout(sc: Scenario):
    dims = []
    for i, (gi, j) in enumerate(sc.group_of()):
        g = sc.groups[gi]
        dims.append((g.plant.A.shape[0], g.realization.n_states, g.S.shape[0]))
    return dims


def _pack(state: NetworkState, sc: Scenario, exogenous):
    parts = []
    for gi, j in sc.group_of():
        parts += [state.x[gi][j], state.s[gi][j]]
    if exogenous:
        for gi, j in sc.group_of():
            parts.append(state.w[gi][j])
        if state.x_r is not None:
            parts.append(state.x_r)
    return np.concatenate([np.asarray(p, dtype=float) for p in parts]) if parts else np.zeros(0)


def _unpack(vec, sc: Scenario, exogenous):
    st = initial_state(sc, np.float64)
    for a in st.x + st.s + st.w:
        a[...] = 0.0
    if st.x_r is not None:
        st.x_r[...] = 0.0
    pos = 0
    for gi, j in sc.group_of():
        n, ns = st.x[gi].shape[1], st.s[gi].shape[1]
        st.x[gi][j] = vec[pos:pos + n]
        pos += n
        st.s[gi][j] = vec[pos:pos + ns]
        pos += ns
    if exogenous:
        for gi, j in sc.group_of():
            nw = st.w[gi].shape[1]
            st.w[gi][j] = vec[pos:pos + nw]
            pos += nw
        if st.x_r is not None:
            st.x_r[...] = vec[pos:pos + st.x_r.size]
            pos += st.x_r.size
    return st


def state_vector(state: NetworkState, sc: Scenario, exogenous=False):
    return _pack(state, sc, exogenous)


def closed_loop_matrix(scenario: Scenario, exogenous=False) -> ClosedLoop:
    """One-step transition matrix of the whole network, assembled by probing ``step``.

    State ordering is ``[x_1, s_1, x_2, s_2, ...]`` (then every ``w_i`` and
    ``x_r`` when ``exogenous``).  The reported radius is that of the
    disagreement quotient ``[I, -1] (x) I`` for pairwise mode with identical
    agents, and of the whole (non-exogenous) matrix otherwise.
    """
    dims = _layout(scenario)
    n_int = sum(n + ns for n, ns, _ in dims)
    n_tot = n_int
    if exogenous:
        n_tot += sum(nw for _, _, nw in dims)
        if scenario.reference is not None:
            n_tot += scenario.reference.A_r.shape[0]
    if n_tot > MAX_PROBE_STATES:
        raise SizeLimit(f"{n_tot} network states exceed the probing limit {MAX_PROBE_STATES}")
    P = _prepared(scenario, np.float64)
    M = np.zeros((n_tot, n_tot))
    for c in range(n_tot):
        e = np.zeros(n_tot)
        e[c] = 1.0
        M[:, c] = _pack(_advance(_unpack(e, scenario, exogenous), P), scenario, exogenous)
    Mi = M[:n_int, :n_int]
    full = clustered_spectral_radius(Mi)
    radius = full
    if scenario.mode == "pairwise" and len(scenario.groups) == 1 and scenario.n_agents > 1:
        d = dims[0][0] + dims[0][1]
        N = scenario.n_agents
        T = np.kron(np.hstack([np.eye(N - 1), -np.ones((N - 1, 1))]), np.eye(d))
        Tp = np.kron(np.vstack([np.eye(N - 1), np.zeros((1, N - 1))]), np.eye(d))
        radius = clustered_spectral_radius(T @ Mi @ Tp)
    elif scenario.mode == "pairwise" and scenario.n_agents == 1:
        radius = full
    return ClosedLoop(M, radius, full, dims, exogenous)


@dataclass
class DecayFit:
    ratio: float
    degenerate: bool = False
    window: int = 0


def fit_decay(log, window=None) -> DecayFit:
    """Geometric ratio from a least-squares fit of ``log(error)`` over the trailing window."""
    e = log.sync_error if hasattr(log, "sync_error") else np.asarray(log)
    e = np.asarray(e)
    w = e.shape[0] if window is None else min(int(window), e.shape[0])
    tail = e[e.shape[0] - w:]
    if w < 2:
        return DecayFit(1.0, True, w)
    if np.any(tail <= 0):
        return DecayFit(0.0, True, w)
    k = np.arange(w, dtype=float)
    lg = np.log(tail).astype(float)
    slope = np.polyfit(k, lg, 1)[0]
    return DecayFit(float(np.exp(slope)), False, w)


# ---------------------------------------------------------------------------
# CSV


def format_value(v) -> str:
    """17 significant digits; values outside the double range keep extended precision."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if (f == 0 and v != 0) or (np.isinf(f) and np.isfinite(np.longdouble(v))):
        return np.format_float_scientific(np.longdouble(v), precision=16, unique=False)
    return "%.17g" % f


def parse_value(s: str):
    try:
        f = float(s)
    except ValueError:
        return np.longdouble(s)
    if (f == 0 and any(ch in s for ch in "123456789")) or not np.isfinite(f):
        return np.longdouble(s)
    return f


def write_csv(log: TrajectoryLog, fh):
    """Write ``k, y_<i>_<c>..., y_r_<c>..., sync_error, relative_error`` with 17-digit values."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(log.header())
    for k, vals in log.rows():
        w.writerow([str(k)] + [format_value(v) for v in vals])


def read_csv_rows(text):
    rdr = csv.reader(io.StringIO(text))
    header = next(rdr)
    rows = [[int(r[0])] + [parse_value(x) for x in r[1:]] for r in rdr]
    return header, rows


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([str(r[0])] + [format_value(v) for v in r[1:]])
    return buf.getvalue()
