"""Scenario files: JSON parsing, protocol construction and simulation set-up.

A scenario is parsed into a :class:`ScenarioSpec` (plain matrices, no
validation beyond shapes), then built into protocols with
:func:`build_hom` / :func:`build_het_groups`, and finally instantiated on a
graph with :func:`make_scenario`.  Building is independent of the graph, so
one build can be reused on graphs of any size.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control_math import (
    GainPair,
    LtiAgent,
    RegulationSolution,
    check_assumptions,
    input_scale,
    regulation_residuals,
    solve_regulation,
    spectral_radius,
    synthesize_gains,
)
from .errors import AssumptionFailure, ParseError, SyncNetError
from .graph_topology import (
    DirectedGraph,
    RootSet,
    erdos_renyi_graph,
    expanded_coupling,
    has_spanning_tree,
    line_graph,
    random_tree_graph,
    ring_graph,
    root_set_covers,
    row_stochastic,
)
from .heterogeneous import (
    HetAgent,
    HomogenizationBundle,
    Homogenizer,
    PrecompensatorI,
    ReferenceExosystem,
    TargetModel,
    build_het_cascade,
    build_het_protocol,
    check_homogenization,
    regulated_error_spectrum,
    remodel_reference,
    required_order,
)
from .homogeneous import build_cascade, build_hom_protocol, disagreement_spectrum
from .simulation import AgentGroup, Scenario

FIXTURE_DIR = Path(__file__).resolve().parent / "fixtures"
FAMILIES = ("ring", "line", "random_tree", "erdos_renyi")


def fixture_path(name: str) -> Path:
    p = FIXTURE_DIR / (name if name.endswith(".json") else name + ".json")
    if not p.exists():
        raise FileNotFoundError(f"no bundled fixture named {name!r}")
    return p


# ---------------------------------------------------------------------------
# parsing helpers


class _Ctx:
    def __init__(self, text=None):
        self.lines = text.splitlines() if text else []

    def line_of(self, key):
        needle = f'"{key}"'
        for i, ln in enumerate(self.lines, 1):
            if needle in ln:
                return i
        return None

    def error(self, msg, section, key=None):
        return ParseError(msg, section=section, line=self.line_of(key or section))


def _matrix(ctx, obj, section, name, rows=None, cols=None, allow_empty=True):
    if obj is None:
        raise ctx.error(f"missing matrix '{name}'", section, name)
    if isinstance(obj, (int, float)):
        obj = [[obj]]
    if not isinstance(obj, list):
        raise ctx.error(f"matrix '{name}' must be a list of rows", section, name)
    if len(obj) == 0:
        if not allow_empty:
            raise ctx.error(f"matrix '{name}' is empty", section, name)
        return np.zeros((rows or 0, cols or 0))
    if not all(isinstance(r, list) for r in obj):
        raise ctx.error(f"matrix '{name}' must be a list of rows", section, name)
    widths = {len(r) for r in obj}
    if len(widths) != 1:
        raise ctx.error(f"matrix '{name}' has rows of different lengths {sorted(widths)}", section, name)
    try:
        M = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise ctx.error(f"matrix '{name}' has non-numeric entries", section, name) from None
    if not np.all(np.isfinite(M)):
        raise ctx.error(f"matrix '{name}' has non-finite entries", section, name)
    if (rows is not None and M.shape[0] != rows) or (cols is not None and M.shape[1] != cols):
        raise ctx.error(f"matrix '{name}' has shape {M.shape}, expected ({rows}, {cols})", section, name)
    return M


def _vector(ctx, obj, section, name, length=None):
    if not isinstance(obj, list) or any(isinstance(v, list) for v in obj):
        raise ctx.error(f"'{name}' must be a flat list of numbers", section, name)
    v = np.array(obj, dtype=float)
    if length is not None and v.shape != (length,):
        raise ctx.error(f"'{name}' has length {v.size}, expected {length}", section, name)
    return v


def deep_merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


# ---------------------------------------------------------------------------
# spec


@dataclass
class GraphSpec:
    family: str = None
    n_agents: int = None
    adjacency: np.ndarray = None
    dbar_in: np.ndarray = None
    roots: tuple = ()
    seed: int = 0
    params: dict = field(default_factory=dict)

    def build(self, n=None) -> DirectedGraph:
        if self.family is None:
            if n is not None and n != self.adjacency.shape[0]:
                raise ValueError("explicit adjacency cannot be resized; declare a graph family")
            return DirectedGraph(self.adjacency, self.dbar_in)
        n = self.n_agents if n is None else n
        if self.family == "ring":
            return ring_graph(n)
        if self.family == "line":
            return line_graph(n)
        if self.family == "random_tree":
            return random_tree_graph(n, seed=self.seed, extra_edges=int(self.params.get("extra_edges", 0)))
        if self.family == "erdos_renyi":
            return erdos_renyi_graph(n, float(self.params.get("p", 0.3)), seed=self.seed)
        raise ValueError(f"unknown graph family {self.family!r}")

    def root_set(self, n) -> RootSet:
        return RootSet([r - 1 for r in self.roots], n)


@dataclass
class HetGroupSpec:
    name: str
    agent: HetAgent
    step1: PrecompensatorI
    B_p: np.ndarray
    D_p: np.ndarray
    Pi: np.ndarray = None
    Gamma: np.ndarray = None
    homogenizer: Homogenizer = None
    homogenizer_printed: Homogenizer = None


@dataclass
class ScenarioSpec:
    name: str
    mode: str
    graph: GraphSpec
    horizon: object
    initial: dict
    outputs: dict
    raw: dict
    # homogeneous
    agent: LtiAgent = None
    S: np.ndarray = None
    omega0: object = None
    B_p: np.ndarray = None
    D_p: np.ndarray = None
    allow_marginal_zeros: bool = False
    override_regulation: tuple = None
    gains: GainPair = None
    # heterogeneous
    groups: dict = None
    assignment: object = None
    reference: ReferenceExosystem = None
    x_r0: object = None
    n_q: int = None
    homogenizer_choice: str = "derived"
    regulation_choice: str = "solver"


def load_scenario(path, variant=None) -> ScenarioSpec:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", section="<document>", line=exc.lineno) from None
    return load_scenario_dict(data, variant=variant, text=text)


def load_scenario_dict(data, variant=None, text=None, check=True) -> ScenarioSpec:
    ctx = _Ctx(text)
    if not isinstance(data, dict):
        raise ParseError("scenario must be a JSON object", section="<document>", line=1)
    variant = variant or data.get("variant")
    if variant:
        variants = data.get("variants", {})
        if variant not in variants:
            raise ctx.error(f"unknown variant {variant!r}", "variants")
        data = deep_merge(data, variants[variant])
    mode = data.get("mode")
    if mode not in ("homogeneous", "heterogeneous"):
        raise ctx.error("mode must be 'homogeneous' or 'heterogeneous'", "mode")
    graph = _parse_graph(ctx, data.get("graph"))
    horizon = data.get("horizon", 100)
    if not (horizon == "auto" or (isinstance(horizon, int) and horizon >= 0)):
        raise ctx.error("horizon must be a nonnegative integer or 'auto'", "horizon")
    spec = ScenarioSpec(
        name=str(data.get("name", "scenario")), mode=mode, graph=graph, horizon=horizon,
        initial=dict(data.get("initial", {})), outputs=dict(data.get("outputs", {})), raw=data,
    )
    if mode == "homogeneous":
        _parse_hom(ctx, data, spec)
    else:
        _parse_het(ctx, data, spec)
    return spec


def _parse_graph(ctx, g) -> GraphSpec:
    sec = "graph"
    if not isinstance(g, dict):
        raise ctx.error("graph section missing", sec)
    gs = GraphSpec(roots=tuple(int(r) for r in g.get("roots", [])), seed=int(g.get("seed", 0)),
                   params={k: g[k] for k in ("p", "extra_edges") if k in g})
    if "family" in g:
        if g["family"] not in FAMILIES:
            raise ctx.error(f"unknown graph family {g['family']!r}", sec, "family")
        gs.family = g["family"]
        gs.n_agents = int(g.get("n_agents", 2))
        return gs
    if "adjacency" in g:
        adj = _matrix(ctx, g["adjacency"], sec, "adjacency", allow_empty=False)
        if adj.shape[0] != adj.shape[1]:
            raise ctx.error("adjacency must be square", sec, "adjacency")
    elif "edges" in g:
        n = g.get("n_agents")
        if not isinstance(n, int) or n < 1:
            raise ctx.error("edge-list graphs need a positive integer n_agents", sec, "n_agents")
        adj = np.zeros((n, n))
        for e in g["edges"]:
            if not (isinstance(e, list) and len(e) == 3):
                raise ctx.error("edges are [from, to, weight] triples", sec, "edges")
            src, dst, w = int(e[0]) - 1, int(e[1]) - 1, float(e[2])
            if not (0 <= src < n and 0 <= dst < n):
                raise ctx.error(f"edge {e} refers to a node outside 1..{n}", sec, "edges")
            adj[dst, src] += w
    else:
        raise ctx.error("graph needs 'family', 'adjacency' or 'edges'", sec)
    gs.adjacency = adj
    gs.n_agents = adj.shape[0]
    if "dbar_in" in g:
        gs.dbar_in = _vector(ctx, g["dbar_in"], sec, "dbar_in", adj.shape[0])
    if any(r < 1 or r > adj.shape[0] for r in gs.roots):
        raise ctx.error("root indices are 1-based node numbers", sec, "roots")
    return gs


def _parse_agent(ctx, a, sec):
    if not isinstance(a, dict):
        raise ctx.error("agent matrices missing", sec)
    A = _matrix(ctx, a.get("A"), sec, "A", allow_empty=False)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ctx.error("A must be square", sec, "A")
    B = _matrix(ctx, a.get("B"), sec, "B", rows=n)
    C = _matrix(ctx, a.get("C"), sec, "C", cols=n)
    E = _matrix(ctx, a.get("E", []), sec, "E", rows=n if a.get("E") else None)
    nw = E.shape[1] if E.size else 0
    if not E.size:
        E = np.zeros((n, 0))
    G = _matrix(ctx, a.get("G", []), sec, "G", rows=C.shape[0], cols=nw) if a.get("G") else np.zeros((C.shape[0], nw))
    return LtiAgent(A, B, C, E, G)


def _parse_gains(ctx, g, sec="gains"):
    if not g:
        return None
    return GainPair(_matrix(ctx, g.get("K"), sec, "K"), _matrix(ctx, g.get("H"), sec, "H"), "user")


def _parse_hom(ctx, data, spec):
    spec.agent = _parse_agent(ctx, data.get("agents"), "agents")
    n, m, p, nw = spec.agent.dims
    ex = data.get("exosystems", {})
    spec.S = _matrix(ctx, ex.get("S"), "exosystems", "S", rows=nw, cols=nw)
    spec.omega0 = ex.get("omega0", "random")
    pc = data.get("precompensators", {})
    sec = "precompensators"
    spec.D_p = _matrix(ctx, pc.get("D_p"), sec, "D_p", rows=m) if "D_p" in pc else None
    spec.B_p = _matrix(ctx, pc.get("B_p"), sec, "B_p", rows=nw) if "B_p" in pc else None
    spec.allow_marginal_zeros = bool(pc.get("allow_marginal_zeros", False))
    ov = pc.get("override_regulation")
    if ov:
        spec.override_regulation = (
            _matrix(ctx, ov.get("Pi"), sec, "Pi", rows=n, cols=nw),
            _matrix(ctx, ov.get("Gamma"), sec, "Gamma", rows=m, cols=nw),
        )
    spec.gains = _parse_gains(ctx, data.get("gains"))


def _parse_step1(ctx, s, m, sec):
    if s in (None, "identity"):
        return PrecompensatorI.identity(m)
    if not isinstance(s, dict):
        raise ctx.error("step1 must be 'identity' or a matrix block", sec, "step1")
    D_q = _matrix(ctx, s.get("D_q"), sec, "D_q", rows=m)
    if "A_q" not in s:
        return PrecompensatorI.static(D_q)
    A_q = _matrix(ctx, s["A_q"], sec, "A_q")
    return PrecompensatorI(A_q, _matrix(ctx, s.get("B_q"), sec, "B_q", rows=A_q.shape[0]),
                           _matrix(ctx, s.get("C_q"), sec, "C_q", rows=m, cols=A_q.shape[0]), D_q)


def _parse_h4(ctx, h, sec):
    if not h:
        return None
    return Homogenizer(*[_matrix(ctx, h.get(k), sec, k) for k in ("A", "B", "E", "C", "D", "F")])


def _parse_het(ctx, data, spec):
    groups = data.get("groups")
    if not isinstance(groups, dict) or not groups:
        raise ctx.error("heterogeneous scenarios need a non-empty 'groups' section", "groups")
    spec.groups = {}
    for name, g in groups.items():
        sec = f"groups.{name}"
        plant = _parse_agent(ctx, g, sec)
        n, m, p, nw = plant.dims
        Cm = _matrix(ctx, g.get("Cm"), sec, "Cm", cols=n, allow_empty=False)
        S = _matrix(ctx, g.get("S"), sec, "S", rows=nw, cols=nw)
        s1 = _parse_step1(ctx, g.get("step1"), m, sec)
        pc = g.get("precompensators", {})
        mq = s1.D_q.shape[1]
        D_p = _matrix(ctx, pc.get("D_p"), sec, "D_p", rows=mq) if "D_p" in pc else None
        B_p = _matrix(ctx, pc.get("B_p"), sec, "B_p", rows=nw) if "B_p" in pc else None
        Pi = _matrix(ctx, pc.get("Pi"), sec, "Pi") if "Pi" in pc else None
        Gamma = _matrix(ctx, pc.get("Gamma"), sec, "Gamma") if "Gamma" in pc else None
        spec.groups[name] = HetGroupSpec(
            name, HetAgent(plant, Cm, S), s1, B_p, D_p, Pi, Gamma,
            _parse_h4(ctx, g.get("homogenizer"), sec), _parse_h4(ctx, g.get("homogenizer_printed"), sec),
        )
    asg = data.get("assignment")
    if asg == "blocks":
        spec.assignment = "blocks"
    elif isinstance(asg, dict):
        spec.assignment = {k: [int(i) for i in v] for k, v in asg.items()}
        unknown = set(spec.assignment) - set(spec.groups)
        if unknown:
            raise ctx.error(f"assignment names unknown groups {sorted(unknown)}", "assignment")
    else:
        raise ctx.error("assignment must map group names to 1-based agent lists, or be 'blocks'", "assignment")
    ref = data.get("reference")
    if not isinstance(ref, dict):
        raise ctx.error("regulated scenarios need a 'reference' section", "reference")
    A_r = _matrix(ctx, ref.get("A_r"), "reference", "A_r", allow_empty=False)
    C_r = _matrix(ctx, ref.get("C_r"), "reference", "C_r", cols=A_r.shape[0])
    spec.reference = ReferenceExosystem(A_r, C_r)
    spec.x_r0 = ref.get("x_r0", "random")
    tgt = data.get("target", {})
    spec.n_q = tgt.get("n_q")
    spec.gains = _parse_gains(ctx, data.get("gains"))
    spec.homogenizer_choice = data.get("homogenizer", "derived")
    spec.regulation_choice = data.get("regulation", "solver")
    if spec.homogenizer_choice not in ("derived", "printed"):
        raise ctx.error("homogenizer must be 'derived' or 'printed'", "homogenizer")
    if spec.regulation_choice not in ("solver", "override"):
        raise ctx.error("regulation must be 'solver' or 'override'", "regulation")
    if not spec.graph.roots:
        raise ctx.error("heterogeneous scenarios need graph.roots", "graph", "roots")


# ---------------------------------------------------------------------------
# building


def _regulation_for_override(agent, S, Pi, Gamma):
    rd, ro = regulation_residuals(agent, S, Pi, Gamma)
    return RegulationSolution(Pi, Gamma, rd, ro, input_scale(agent.A, agent.B, agent.C, agent.E, agent.G, S))


def build_hom(spec: ScenarioSpec, check=True) -> dict:
    """Assumption report, regulation solution, cascade, gains and the shared realization."""
    agent, S = spec.agent, spec.S
    n, m, p, nw = agent.dims
    report = check_assumptions("A1", agent=agent, S=S)
    if check and not report.all_pass:
        name = report.failed()[0]
        raise AssumptionFailure(f"{name}: {report.flags[name].detail}", test=name)
    solved = None
    try:
        solved = solve_regulation(agent, S)
    except SyncNetError:
        if spec.override_regulation is None:
            raise
    if spec.override_regulation is not None:
        regsol = _regulation_for_override(agent, S, *spec.override_regulation)
        source = "override"
    else:
        regsol, source = solved, "solver"
    D_p = spec.D_p if spec.D_p is not None else np.eye(m)
    B_p = spec.B_p
    if B_p is None:
        from .control_math import minimum_phase_precompensator
        B_p, D_p = minimum_phase_precompensator(regsol.Gamma, S, allow_marginal_zeros=spec.allow_marginal_zeros)
    cascade = build_cascade(agent, S, regsol, B_p, D_p, spec.allow_marginal_zeros, check=check)
    gains = spec.gains or synthesize_gains(cascade.A_tilde, cascade.B_tilde, cascade.C_tilde)
    realization = build_hom_protocol(cascade, gains, check_gains=check)
    return {
        "assumptions": report, "regulation": regsol, "regulation_source": source, "solver": solved,
        "cascade": cascade, "gains": gains, "realization": realization,
    }


def _het_assignment(spec: ScenarioSpec, n_agents):
    names = list(spec.groups)
    if spec.assignment == "blocks":
        out, k = {}, len(names)
        bounds = [round(i * n_agents / k) for i in range(k + 1)]
        for i, nm in enumerate(names):
            out[nm] = list(range(bounds[i], bounds[i + 1]))
        return out
    out = {nm: [i - 1 for i in spec.assignment.get(nm, [])] for nm in names}
    flat = sorted(i for v in out.values() for i in v)
    if flat != list(range(n_agents)):
        raise ValueError(f"assignment does not cover agents 1..{n_agents} exactly once")
    return out


def build_het_groups(spec: ScenarioSpec, check=True) -> dict:
    """Target model, per-group cascades, homogenizer certificates and realizations."""
    ref = spec.reference
    a2 = check_assumptions("A2", A_r=ref.A_r, C_r=ref.C_r)
    if check and not a2.all_pass:
        name = a2.failed()[0]
        raise AssumptionFailure(f"{name}: {a2.flags[name].detail}", test=name)
    plants = [g.agent.plant for g in spec.groups.values()]
    bound = required_order(ref, plants)
    target = remodel_reference(ref, spec.n_q, min_order=bound)
    gains = spec.gains or synthesize_gains(target.A_h, target.B_h, target.C_h)
    groups = {}
    for name, g in spec.groups.items():
        override = None
        if spec.regulation_choice == "override" and g.Pi is not None and g.Gamma is not None:
            override = (g.Pi, g.Gamma)
        cascade = build_het_cascade(g.agent, g.step1, g.B_p, g.D_p, override, check=check)
        h4 = g.homogenizer_printed if spec.homogenizer_choice == "printed" else g.homogenizer
        if h4 is None:
            raise AssumptionFailure(f"group {name} has no {spec.homogenizer_choice} homogenizer", test="homogenizer")
        hc = check_homogenization(cascade, h4, target)
        if check and not hc.passed:
            raise AssumptionFailure(f"group {name}: homogenizer rejected ({hc.detail})", test="homogenization")
        a3 = check_assumptions("A3", agent=g.agent.plant, S=g.agent.S, Cm=g.agent.Cm)
        bundle = HomogenizationBundle(cascade, h4)
        real = build_het_protocol(bundle, target, gains, check_gains=check)
        groups[name] = {"spec": g, "cascade": cascade, "step4": h4, "homogenization": hc,
                        "assumptions": a3, "bundle": bundle, "realization": real}
    return {"target": target, "gains": gains, "groups": groups, "assumptions": a2, "order_bound": bound}


def _random_initial(spec: ScenarioSpec, rng, dims, omega_dims):
    rngw = float(spec.initial.get("range", 1.0))
    x0 = [rng.uniform(-rngw, rngw, d) for d in dims]
    w0 = [rng.uniform(-rngw, rngw, d) for d in omega_dims]
    return x0, w0


def make_scenario(spec: ScenarioSpec, built: dict, n_agents=None, seed=None, horizon=None, graph=None) -> Scenario:
    """Instantiate the built protocol(s) on a concrete graph with seeded initial conditions."""
    graph = spec.graph.build(n_agents) if graph is None else graph
    N = graph.n_agents
    seed = int(spec.initial.get("seed", 0)) if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    dtype = spec.outputs.get("dtype", "float64")
    if spec.mode == "homogeneous":
        agent = spec.agent
        grp = AgentGroup("agents", agent, spec.S, built["realization"], tuple(range(N)), None, built["regulation"].Pi)
        x0, w0 = _random_initial(spec, rng, [agent.A.shape[0]] * N, [spec.S.shape[0]] * N)
        if isinstance(spec.omega0, list):
            w0 = [np.asarray(v, dtype=float) for v in spec.omega0]
        hz = horizon if horizon is not None else (spec.horizon if spec.horizon != "auto" else 100)
        return Scenario(graph, [grp], "pairwise", None, None, x0, w0, None, hz, dtype, name=spec.name, seed=seed)
    roots = spec.graph.root_set(N)
    members = _het_assignment(spec, N)
    groups, order = [], [None] * N
    for name, info in built["groups"].items():
        g = info["spec"]
        idx = tuple(members[name])
        if not idx:
            continue
        groups.append(AgentGroup(name, g.agent.plant, g.agent.S, info["realization"], idx, g.agent.Cm))
        for i in idx:
            order[i] = g.agent
    dims = [ag.plant.A.shape[0] for ag in order]
    wd = [ag.S.shape[0] for ag in order]
    x0, w0 = _random_initial(spec, rng, dims, wd)
    ref = spec.reference
    xr0 = rng.uniform(-1, 1, ref.A_r.shape[0]) if spec.x_r0 == "random" else np.asarray(spec.x_r0, dtype=float)
    ref = ReferenceExosystem(ref.A_r, ref.C_r, xr0)
    hz = horizon if horizon is not None else spec.horizon
    if hz == "auto":
        hz = auto_horizon(spec, built, graph)
    return Scenario(graph, groups, "regulated", roots, ref, x0, w0, None, int(hz), dtype, name=spec.name, seed=seed)


def het_residual_blocks(built, assignment_order):
    out = []
    for name in assignment_order:
        hc = built["groups"][name]["homogenization"]
        out.append((hc.A_s, hc.C_s))
    return out


def regulated_spectrum_for(spec, built, graph):
    N = graph.n_agents
    roots = spec.graph.root_set(N)
    cm = expanded_coupling(graph, roots)
    members = _het_assignment(spec, N)
    order = [None] * N
    for name, idx in members.items():
        for i in idx:
            order[i] = name
    blocks = het_residual_blocks(built, order)
    return regulated_error_spectrum(built["target"], built["gains"], cm.dtilde, blocks), cm


def auto_horizon(spec, built, graph):
    decay = float(spec.outputs.get("auto_decay", 1e-4))
    rs, _ = regulated_spectrum_for(spec, built, graph)
    if rs.radius <= 0:
        return 1
    if rs.radius >= 1:
        raise AssumptionFailure(f"regulated error radius {rs.radius:.6g} is not below 1", test="spectrum")
    return int(math.ceil(math.log(decay) / math.log(rs.radius)))


def graph_conditions(spec: ScenarioSpec, graph: DirectedGraph) -> dict:
    if spec.mode == "homogeneous":
        return {"spanning_tree": has_spanning_tree(graph)}
    return {"root_set_covers": root_set_covers(graph, spec.graph.root_set(graph.n_agents))}


def spectra(spec: ScenarioSpec, built: dict, graph: DirectedGraph) -> dict:
    if spec.mode == "homogeneous":
        cm = row_stochastic(graph)
        ds = disagreement_spectrum(built["cascade"], built["gains"], cm.reduced)
        out = ds.to_dict()
        out["Dbar"] = spectral_radius(cm.reduced)
        return out
    rs, cm = regulated_spectrum_for(spec, built, graph)
    out = rs.to_dict()
    out["Dtilde"] = spectral_radius(cm.dtilde)
    return out
