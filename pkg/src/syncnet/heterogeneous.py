"""Protocol design for non-identical introspective agents tracking a reference exosystem.

Each agent is wrapped by up to three pre-compensators:

* an invertibility compensator ``(A_q, B_q, C_q, D_q)`` (identity by default),
* an internal model ``p+ = S p + B_p v``, ``u_q = Gamma p + D_p v``,
* a homogenizer ``(A_ih, B_ih, E_ih, C_ih, D_ih, F_ih)`` driven by the
  disturbance-free measurement ``z_bar``,

after which every agent behaves like the common target ``(C_h, A_h, B_h)`` up
to a Schur residual.  The network protocol then runs on the target model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .control_math import (
    GainPair,
    LtiAgent,
    RankTest,
    RegulationSolution,
    as_matrix,
    check_assumptions,
    check_precompensator,
    clustered_spectral_radius,
    detectability_transform_check,
    infinite_zero_order,
    input_scale,
    invariant_zeros,
    is_right_invertible,
    is_schur,
    numerical_rank,
    observability_indices,
    observability_matrix,
    pbh_detectable,
    pbh_stabilizable,
    regulation_residuals,
    solve_regulation,
    spectral_radius,
    RESIDUAL_TOL,
)
from .errors import AssumptionFailure, BadOrder, DimensionMismatch, NoSolution, RankDeficient
from .realization import ProtocolRealization

__all__ = [
    "HetAgent",
    "PrecompensatorI",
    "Homogenizer",
    "ReferenceExosystem",
    "TargetModel",
    "HetCascade",
    "HomogenizationBundle",
    "HomogenizationCheck",
    "remodel_reference",
    "required_order",
    "build_het_cascade",
    "homogenized_cascade",
    "check_homogenization",
    "build_het_protocol",
    "HetProtocolRealization",
    "regulated_error_matrix",
    "regulated_error_spectrum",
]


@dataclass(frozen=True)
class HetAgent:
    """Agent ``i`` with local measurement ``z = Cm x`` and disturbance modes ``S``."""

    plant: LtiAgent
    Cm: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        n = self.plant.A.shape[0]
        Cm = as_matrix(self.Cm, cols=n, name="Cm")
        S = as_matrix(self.S, name="S")
        if S.shape != (self.plant.E.shape[1],) * 2:
            raise DimensionMismatch("S does not match the disturbance dimension of E and G")
        if Cm.shape[0] < 1:
            raise DimensionMismatch("agents must measure at least one local quantity")
        object.__setattr__(self, "Cm", Cm)
        object.__setattr__(self, "S", S)


@dataclass(frozen=True)
class PrecompensatorI:
    """``q+ = A_q q + B_q u_q``, ``u = C_q q + D_q u_q``; zero-state when ``A_q`` is empty."""

    A_q: np.ndarray
    B_q: np.ndarray
    C_q: np.ndarray
    D_q: np.ndarray

    @classmethod
    def identity(cls, m):
        return cls(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((m, 0)), np.eye(m))

    @classmethod
    def static(cls, D_q):
        D_q = np.atleast_2d(np.asarray(D_q, dtype=float))
        m, mq = D_q.shape
        return cls(np.zeros((0, 0)), np.zeros((0, mq)), np.zeros((m, 0)), D_q)

    def __post_init__(self):
        D_q = np.atleast_2d(np.asarray(self.D_q, dtype=float))
        m, mq = D_q.shape
        nq = np.shape(self.A_q)[0] if np.size(self.A_q) else 0
        A_q = np.asarray(self.A_q, dtype=float).reshape(nq, nq)
        B_q = np.asarray(self.B_q, dtype=float).reshape(nq, mq)
        C_q = np.asarray(self.C_q, dtype=float).reshape(m, nq)
        for k, v in zip(("A_q", "B_q", "C_q", "D_q"), (A_q, B_q, C_q, D_q)):
            object.__setattr__(self, k, v)

    @property
    def n_states(self):
        return self.A_q.shape[0]

    @property
    def is_identity(self):
        return self.n_states == 0 and self.D_q.shape[0] == self.D_q.shape[1] and np.array_equal(self.D_q, np.eye(self.D_q.shape[0]))


@dataclass(frozen=True)
class Homogenizer:
    """``xi+ = A xi + B z_bar + E u_check``, ``v = C xi + D u_check + F z_bar``."""

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    C: np.ndarray
    D: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        nv, p = D.shape
        nz = F.shape[1]
        nx = np.shape(self.A)[0] if np.size(self.A) else 0
        vals = {
            "A": np.asarray(self.A, dtype=float).reshape(nx, nx),
            "B": np.asarray(self.B, dtype=float).reshape(nx, nz),
            "E": np.asarray(self.E, dtype=float).reshape(nx, p),
            "C": np.asarray(self.C, dtype=float).reshape(nv, nx),
            "D": D,
            "F": F.reshape(nv, nz),
        }
        for k, v in vals.items():
            object.__setattr__(self, k, v)

    @property
    def n_states(self):
        return self.A.shape[0]


@dataclass(frozen=True)
class ReferenceExosystem:
    A_r: np.ndarray
    C_r: np.ndarray
    x_r0: np.ndarray = None

    def __post_init__(self):
        A_r = as_matrix(self.A_r, name="A_r")
        C_r = as_matrix(self.C_r, cols=A_r.shape[0], name="C_r")
        x0 = np.zeros(A_r.shape[0]) if self.x_r0 is None else np.asarray(self.x_r0, float).reshape(-1)
        if x0.shape != (A_r.shape[0],):
            raise DimensionMismatch("x_r0 length does not match A_r")
        object.__setattr__(self, "A_r", A_r)
        object.__setattr__(self, "C_r", C_r)
        object.__setattr__(self, "x_r0", x0)


@dataclass(frozen=True)
class TargetModel:
    A_h: np.ndarray
    B_h: np.ndarray
    C_h: np.ndarray
    n_q: int
    embed: np.ndarray

    @property
    def h(self):
        return self.A_h.shape[0]

    def initial_state(self, x_r0):
        return self.embed @ np.asarray(x_r0, dtype=float)


def required_order(exo: ReferenceExosystem, agents=()) -> int:
    """Smallest admissible ``n_q``: max of agent infinite-zero orders and observability indices."""
    bound = max(observability_indices(exo.C_r, exo.A_r), default=1)
    for ag in agents:
        bound = max(bound, infinite_zero_order(ag.C, ag.A, ag.B))
    return int(bound)


def remodel_reference(exo: ReferenceExosystem, n_q=None, min_order=1, seed=0) -> TargetModel:
    """Uniform-rank target ``(C_h, A_h, B_h)`` reproducing the reference output.

    ``A_h = blockdiag(A_r, N)`` with ``N`` nilpotent shift chains padding every
    output to ``n_q`` observability steps; ``B_h`` is the last block column of
    the inverse of the ``n_q``-step observability matrix, so the Markov
    parameters are ``0, ..., 0, I`` and the triple has no finite zeros.
    """
    A_r, C_r = exo.A_r, exo.C_r
    r, p = A_r.shape[0], C_r.shape[0]
    if numerical_rank(observability_matrix(C_r, A_r)) < r:
        raise RankDeficient("(C_r, A_r) is not observable")
    mu = observability_indices(C_r, A_r)
    bound = max(max(mu, default=1), int(min_order))
    n_q = bound if n_q is None else int(n_q)
    if n_q < bound:
        raise BadOrder(f"n_q = {n_q} is below the required bound {bound}")
    h = p * n_q
    pad = h - r
    rng = np.random.default_rng(seed)
    # padding chains: output j gets a chain of length n_q - mu_j
    lengths = [n_q - m for m in mu]
    if sum(lengths) != pad:
        lengths = [pad // p + (1 if j < pad % p else 0) for j in range(p)]
    for attempt in range(50):
        N = np.zeros((pad, pad))
        C_pad = np.zeros((p, pad))
        start = 0
        for j, ln in enumerate(lengths):
            for k in range(ln - 1):
                N[start + k, start + k + 1] = 1.0
            if ln:
                C_pad[j, start] = 1.0
            start += ln
        if attempt:
            C_pad = C_pad + rng.standard_normal(C_pad.shape)
        A_h = sla.block_diag(A_r, N)
        C_h = np.hstack([C_r, C_pad])
        O = _chain_observability(C_h, A_h, n_q)
        if numerical_rank(O) == h:
            break
    else:
        raise BadOrder(f"could not reach uniform rank {n_q} with the available padding")
    last = np.zeros((h, p))
    for j in range(p):
        last[j * n_q + n_q - 1, j] = 1.0
    B_h = np.linalg.solve(O, last)
    embed = np.vstack([np.eye(r), np.zeros((pad, r))])
    target = TargetModel(A_h, B_h, C_h, n_q, embed)
    _certify_target(target, exo)
    return target


def _chain_observability(C, A, n_q):
    """Rows ordered output by output: ``c_j, c_j A, ..., c_j A^(n_q - 1)``."""
    rows = []
    for j in range(C.shape[0]):
        M = C[j:j + 1]
        for _ in range(n_q):
            rows.append(M)
            M = M @ A
    return np.vstack(rows)


def _certify_target(t: TargetModel, exo: ReferenceExosystem, samples=3):
    h, p = t.h, t.C_h.shape[0]
    mk = [t.C_h @ np.linalg.matrix_power(t.A_h, k) @ t.B_h for k in range(t.n_q)]
    scale = input_scale(t.A_h, t.B_h, t.C_h)
    for k in range(t.n_q - 1):
        if np.max(np.abs(mk[k])) > 1e-9 * scale:
            raise BadOrder("target Markov parameters do not vanish below n_q")
    if np.max(np.abs(mk[-1] - np.eye(p))) > 1e-9 * scale:
        raise BadOrder("target leading Markov parameter is not the identity")
    zs = invariant_zeros(t.C_h, t.A_h, t.B_h)
    if zs is None or len(zs):
        raise BadOrder("target triple has invariant zeros")
    rng = np.random.default_rng(1)
    for x0 in [exo.x_r0] + [rng.standard_normal(exo.A_r.shape[0]) for _ in range(samples)]:
        if not output_match(t, exo, x0):
            raise BadOrder("target output does not reproduce the reference output")


def output_match(t: TargetModel, exo: ReferenceExosystem, x_r0, steps=None, rtol=1e-9) -> bool:
    """Check ``C_h A_h^k x_h0 = C_r A_r^k x_r0`` for ``k = 0..2h``."""
    steps = 2 * t.h if steps is None else steps
    xr = np.asarray(x_r0, dtype=float)
    xh = t.initial_state(xr)
    for _ in range(steps + 1):
        yr, yh = exo.C_r @ xr, t.C_h @ xh
        if np.max(np.abs(yr - yh), initial=0.0) > rtol * max(1.0, np.max(np.abs(yr), initial=0.0)):
            return False
        xr, xh = exo.A_r @ xr, t.A_h @ xh
    return True


# ---------------------------------------------------------------------------
# cascades


@dataclass(frozen=True)
class HetCascade:
    """Agent with pre-compensators I and II in disturbance-free coordinates."""

    A_tilde: np.ndarray
    B_tilde: np.ndarray
    C_tilde: np.ndarray
    E_tilde: np.ndarray
    Cm_tilde: np.ndarray
    Pi_tilde: np.ndarray
    Aq_tilde: np.ndarray
    Bq_tilde: np.ndarray
    Cq_tilde: np.ndarray
    Cqm_tilde: np.ndarray
    step1: PrecompensatorI
    regulation: RegulationSolution
    B_p: np.ndarray
    D_p: np.ndarray
    S: np.ndarray
    G: np.ndarray
    uniform_rank: int
    checks: dict = field(default_factory=dict)


def _step1_cascade(plant: LtiAgent, Cm, s1: PrecompensatorI):
    A, B, C, E = plant.A, plant.B, plant.C, plant.E
    n, nq = A.shape[0], s1.n_states
    if s1.D_q.shape[0] != B.shape[1]:
        raise DimensionMismatch("pre-compensator I output does not match the agent input")
    Aq = np.block([[A, B @ s1.C_q], [np.zeros((nq, n)), s1.A_q]])
    Bq = np.vstack([B @ s1.D_q, s1.B_q])
    Cq = np.hstack([C, np.zeros((C.shape[0], nq))])
    Eq = np.vstack([E, np.zeros((nq, E.shape[1]))])
    Cqm = np.hstack([Cm, np.zeros((Cm.shape[0], nq))])
    return Aq, Bq, Cq, Eq, Cqm


def build_het_cascade(agent: HetAgent, step1: PrecompensatorI = None, B_p=None, D_p=None,
                      override_regulation=None, allow_marginal_zeros=False, check=True) -> HetCascade:
    """Cascade of pre-compensators I, II and agent ``i``.

    ``override_regulation`` may carry externally supplied ``(Pi, Gamma)``; they
    are accepted only if their residuals pass.
    """
    plant, S = agent.plant, agent.S
    n, m, p, nw = plant.dims
    s1 = PrecompensatorI.identity(m) if step1 is None else step1
    if check:
        rep = check_assumptions("A3", agent=plant, S=S, Cm=agent.Cm)
        if not rep.all_pass:
            name = rep.failed()[0]
            raise AssumptionFailure(f"{name}: {rep.flags[name].detail}", test=name)
        if s1.n_states and not is_schur(s1.A_q):
            raise AssumptionFailure("pre-compensator I state matrix is not Schur", test="step1")
    Aq, Bq, Cq, Eq, Cqm = _step1_cascade(plant, agent.Cm, s1)
    qagent = LtiAgent(Aq, Bq, Cq, Eq, plant.G)
    if check and not is_right_invertible(Cq, Aq, Bq):
        raise AssumptionFailure("compensated triple is not right-invertible", test="step1")
    if override_regulation is not None:
        Pi, Gamma = override_regulation
        Pi = as_matrix(Pi, rows=Aq.shape[0], cols=nw, name="Pi")
        Gamma = as_matrix(Gamma, rows=Bq.shape[1], cols=nw, name="Gamma")
        rd, ro = regulation_residuals(qagent, S, Pi, Gamma)
        reg = RegulationSolution(Pi, Gamma, rd, ro, input_scale(Aq, Bq, Cq, Eq, plant.G, S))
        if not reg.ok:
            raise NoSolution(f"supplied Pi/Gamma violate the regulation equations (residuals {rd:.3e}, {ro:.3e})",
                             residual=max(rd, ro))
    else:
        reg = solve_regulation(qagent, S)
    mq = Bq.shape[1]
    D_p = np.eye(mq) if D_p is None else as_matrix(D_p, rows=mq, name="D_p")
    B_p = np.zeros((nw, D_p.shape[1])) if B_p is None else as_matrix(B_p, rows=nw, cols=D_p.shape[1], name="B_p")
    nt = Aq.shape[0]
    At = np.block([[Aq, Bq @ reg.Gamma], [np.zeros((nw, nt)), S]])
    Bt = np.vstack([Bq @ D_p, B_p])
    Ct = np.hstack([Cq, np.zeros((p, nw))])
    Et = np.vstack([Eq, np.zeros((nw, nw))])
    Cmt = np.hstack([Cqm, -Cqm @ reg.Pi])
    Pt = np.vstack([reg.Pi, np.eye(nw)])
    checks = {}
    pc = check_precompensator(reg.Gamma, S, B_p, D_p, allow_marginal_zeros)
    checks["precompensator"] = pc.ok
    checks["stabilizable"] = pbh_stabilizable(At, Bt).ok
    checks["detectable_output"] = detectability_transform_check(Aq, Eq, S, Cq, plant.G, reg.Pi, Bq, reg.Gamma)
    checks["detectable_measurement"] = detectability_transform_check(
        Aq, Eq, S, Cqm, np.zeros((Cqm.shape[0], nw)), reg.Pi, Bq, reg.Gamma, measurement=True)
    checks["detectable_cascade"] = pbh_detectable(Cmt, At).ok
    if check:
        for name, ok in checks.items():
            if not ok:
                raise AssumptionFailure(f"cascade check '{name}' failed", test=name)
    try:
        rho = infinite_zero_order(Ct, At, Bt)
    except DimensionMismatch:
        rho = 0
    return HetCascade(At, Bt, Ct, Et, Cmt, Pt, Aq, Bq, Cq, Cqm, s1, reg, B_p, D_p, S, plant.G, rho, checks)


def homogenized_cascade(cascade: HetCascade, step4: Homogenizer):
    """State-space of homogenizer plus cascade driven by ``u_check``: ``(A_o, B_o, C_o)``."""
    At, Bt, Ct, Cmt = cascade.A_tilde, cascade.B_tilde, cascade.C_tilde, cascade.Cm_tilde
    h4 = step4
    if h4.F.shape[1] != Cmt.shape[0] or h4.D.shape[0] != Bt.shape[1]:
        raise DimensionMismatch("homogenizer does not match the cascade input/measurement sizes")
    A_o = np.block([[At + Bt @ h4.F @ Cmt, Bt @ h4.C], [h4.B @ Cmt, h4.A]])
    B_o = np.vstack([Bt @ h4.D, h4.E])
    C_o = np.hstack([Ct, np.zeros((Ct.shape[0], h4.n_states))])
    return A_o, B_o, C_o


@dataclass
class HomogenizationCheck:
    passed: bool
    certificate: bool
    certificate_residual: float
    residual_radius: float
    hidden_radius: float
    simulated_ratio: float
    max_difference: float
    T: np.ndarray = None
    C_s: np.ndarray = None
    A_s: np.ndarray = None
    R: np.ndarray = None
    detail: str = ""

    @property
    def decay(self):
        return self.residual_radius

    def to_dict(self):
        return {
            "passed": self.passed, "certificate": self.certificate,
            "certificate_residual": self.certificate_residual,
            "residual_radius": self.residual_radius, "hidden_radius": self.hidden_radius,
            "simulated_ratio": self.simulated_ratio, "max_difference": self.max_difference,
            "detail": self.detail,
        }


def _orth(M, tol=1e-9):
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=True)
    r = int(np.count_nonzero(s > tol * max(1.0, s[0]))) if s.size else 0
    return U[:, :r], U[:, r:]


def homogenization_certificate(A_o, B_o, C_o, target: TargetModel):
    """Solve for ``T``, ``C_s`` with ``C_h T = C_o``, ``T B_o = B_h`` and
    ``T A_o - A_h T = B_h C_s R`` where ``R`` spans the uncontrollable quotient.

    Returns ``(residual, T, C_s, A_s, R, hidden_radius)``.
    """
    no, h = A_o.shape[0], target.h
    ctrb = np.hstack([np.linalg.matrix_power(A_o, k) @ B_o for k in range(no)]) if no else np.zeros((0, 0))
    Q, Qperp = _orth(ctrb)
    R = Qperp.T
    ns = R.shape[0]
    A_s = R @ A_o @ R.T
    Ah, Bh, Ch = target.A_h, target.B_h, target.C_h
    p = Bh.shape[1]
    I_o, I_h = np.eye(no), np.eye(h)
    rows_T = [np.kron(I_o, Ch), np.kron(B_o.T, I_h), np.kron(A_o.T, I_h) - np.kron(I_o, Ah)]
    rows_C = [np.zeros((Ch.shape[0] * no, p * ns)), np.zeros((h * B_o.shape[1], p * ns)), -np.kron(R.T, Bh)]
    M = np.hstack([np.vstack(rows_T), np.vstack(rows_C)])
    rhs = np.concatenate([C_o.reshape(-1, order="F"), Bh.reshape(-1, order="F"), np.zeros(h * no)])
    sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    res = float(np.max(np.abs(M @ sol - rhs), initial=0.0))
    T = sol[: h * no].reshape((h, no), order="F")
    C_s = sol[h * no:].reshape((p, ns), order="F")
    _, Nb = _orth(np.vstack([T, R]).T)
    hidden = spectral_radius(Nb.T @ A_o @ Nb) if Nb.size else 0.0
    return res, T, C_s, A_s, R, hidden


def check_homogenization(cascade: HetCascade, step4: Homogenizer, target: TargetModel,
                         trials=5, horizon=80, seed=0) -> HomogenizationCheck:
    """Certify that homogenizer plus cascade equals the target up to a Schur residual.

    Algebraic part: the change of coordinates ``T`` onto the target state and
    the residual generator ``(A_s, C_s)`` exist, ``A_s`` is Schur, and the
    modes hidden from both are Schur.  Simulation part: a random cascade
    state ``x`` and random bounded inputs drive the cascade, while the target
    starts at ``T x`` and receives the same input plus ``C_s sigma`` with
    ``sigma(0) = R x``; outputs must agree to rounding and the injected
    residual must decay.
    """
    A_o, B_o, C_o = homogenized_cascade(cascade, step4)
    if B_o.shape[1] != target.B_h.shape[1] or C_o.shape[0] != target.C_h.shape[0]:
        return HomogenizationCheck(False, False, np.inf, np.inf, np.inf, np.inf, np.inf,
                                   detail="input/output sizes differ from the target")
    res, T, C_s, A_s, R, hidden = homogenization_certificate(A_o, B_o, C_o, target)
    scale = input_scale(A_o, B_o, C_o, target.A_h, target.B_h)
    rs = spectral_radius(A_s)
    cert = res <= 1e-8 * scale and rs < 1.0 - 1e-9 and hidden < 1.0 - 1e-9
    rng = np.random.default_rng(seed)
    worst_ratio, worst_diff = 0.0, 0.0
    for _ in range(trials if cert else 0):
        xo = rng.uniform(-1, 1, A_o.shape[0])
        xh, sig = T @ xo, R @ xo
        diffs, inj = [], []
        for k in range(horizon):
            u = rng.uniform(-1, 1, B_o.shape[1])
            yo = C_o @ xo
            diffs.append(float(np.max(np.abs(yo - target.C_h @ xh))) / max(1.0, float(np.max(np.abs(yo)))))
            w = C_s @ sig
            inj.append(float(np.max(np.abs(w), initial=0.0)))
            xo = A_o @ xo + B_o @ u
            xh = target.A_h @ xh + target.B_h @ (u + w)
            sig = A_s @ sig
        worst_diff = max(worst_diff, max(diffs))
        tail = np.array(inj[horizon // 2:])
        pos = tail > 1e-300
        if pos.sum() > 2:
            kk = np.arange(tail.size)[pos]
            ratio = float(np.exp(np.polyfit(kk, np.log(tail[pos]), 1)[0]))
        else:
            ratio = 0.0
        worst_ratio = max(worst_ratio, ratio)
    sim_ok = cert and worst_diff <= 1e-8 * scale and worst_ratio < 1.0 - 1e-6
    detail = "certified" if cert else (
        f"no target coordinates (residual {res:.3e})" if res > 1e-8 * scale else
        f"residual/hidden dynamics not Schur ({rs:.4g}, {hidden:.4g})")
    return HomogenizationCheck(bool(cert and sim_ok), bool(cert), res, rs, hidden, worst_ratio, worst_diff,
                               T, C_s, A_s, R, detail)


# ---------------------------------------------------------------------------
# protocol


@dataclass(frozen=True)
class HomogenizationBundle:
    cascade: HetCascade
    step4: Homogenizer

    @property
    def step1(self):
        return self.cascade.step1

    @property
    def Pi(self):
        return self.cascade.regulation.Pi

    @property
    def Gamma(self):
        return self.cascade.regulation.Gamma

    @property
    def Cqm_Pi(self):
        return self.cascade.Cqm_tilde @ self.Pi


class HetProtocolRealization(ProtocolRealization):
    """Realization with state ``(q, p, xi, x_hat, chi)`` and exchange ``eta = chi``."""


def build_het_protocol(bundle: HomogenizationBundle, target: TargetModel, gains: GainPair,
                       iota_i=0, dbar_in_i=0.0, check_gains=True) -> HetProtocolRealization:
    """Compose pre-compensators I, II, the homogenizer and the target-level protocol.

    Target-level part, with ``c = iota_i / (2 + dbar_in_i)``:
    ``x_hat+ = A_h x_hat - B_h K (zeta_hat + c chi) + H (zeta~ - C_h x_hat)``,
    ``chi+ = (A_h - B_h K) chi + A_h (x_hat - zeta_hat - c chi)``, ``u_check = -K chi``.
    """
    cas, h4 = bundle.cascade, bundle.step4
    s1 = cas.step1
    Ah, Bh, Ch = target.A_h, target.B_h, target.C_h
    h, p = target.h, Ch.shape[0]
    K = as_matrix(gains.K, rows=Bh.shape[1], cols=h, name="K")
    H = as_matrix(gains.H, rows=h, cols=p, name="H")
    if check_gains:
        for M, name in ((Ah - Bh @ K, "A_h - B_hK"), (Ah - H @ Ch, "A_h - HC_h")):
            r = spectral_radius(M)
            if r >= 1.0:
                raise AssumptionFailure(f"{name} is not Schur (spectral radius {r:.6g})", test="gains")
    if h4.D.shape[1] != Bh.shape[1]:
        raise DimensionMismatch("homogenizer input size differs from the target input size")
    Gamma, B_p, D_p, S = cas.regulation.Gamma, cas.B_p, cas.D_p, cas.S
    CPi = bundle.Cqm_Pi
    nq, nw, nx = s1.n_states, S.shape[0], h4.n_states
    sizes = (("q", nq), ("p", nw), ("xi", nx), ("x_hat", h), ("chi", h))
    ns = sum(s for _, s in sizes)
    nz = cas.Cqm_tilde.shape[0]
    sel, start = {}, 0
    for name, sz in sizes:
        E_ = np.zeros((sz, ns))
        E_[:, start:start + sz] = np.eye(sz)
        sel[name] = E_
        start += sz
    Q, P, X, XH, CH = (sel[k] for k in ("q", "p", "xi", "x_hat", "chi"))
    # each signal as (coefficient on s, coefficient on z)
    ucheck = (-K @ CH, np.zeros((Bh.shape[1], nz)))
    zbar = (-CPi @ P, np.eye(nz))
    v = (h4.C @ X + h4.D @ ucheck[0] + h4.F @ zbar[0], h4.F @ zbar[1])
    uq = (Gamma @ P + D_p @ v[0], D_p @ v[1])
    u = (s1.C_q @ Q + s1.D_q @ uq[0], s1.D_q @ uq[1])
    rows_A = [
        s1.A_q @ Q + s1.B_q @ uq[0],
        S @ P + B_p @ v[0],
        h4.A @ X + h4.B @ zbar[0] + h4.E @ ucheck[0],
        (Ah - H @ Ch) @ XH,
        (Ah - Bh @ K) @ CH + Ah @ XH,
    ]
    rows_Bz = [s1.B_q @ uq[1], B_p @ v[1], h4.B @ zbar[1], np.zeros((h, nz)), np.zeros((h, nz))]
    A = np.vstack(rows_A)
    B_z = np.vstack(rows_Bz)
    B_zeta = np.vstack([np.zeros((nq + nw + nx, p)), H, np.zeros((h, p))])
    B_zhat = np.vstack([np.zeros((nq + nw + nx, h)), -Bh @ K, -Ah])
    A_self = np.vstack([np.zeros((nq + nw + nx, ns)), -Bh @ K @ CH, -Ah @ CH])
    c = float(iota_i) / (2.0 + float(dbar_in_i))
    return HetProtocolRealization(
        A=A, B_zeta=B_zeta, B_zhat=B_zhat, B_z=B_z, C_u=u[0], D_z=u[1], C_eta=CH, A_self=A_self,
        partition=sizes, coupling=c, meta={"kind": "heterogeneous", "gain_source": gains.source},
    )


def regulated_error_matrix(target: TargetModel, gains: GainPair, Dtilde, residuals=()):
    """Error system ``(e, delta, e_hat[, sigma])`` with ``e_i = x_check_i - x_h``.

    ``e+ = (A_h - B_hK) e - B_hK delta + B_h C_s sigma``,
    ``delta+ = (Dtilde (x) A_h) delta + A_h e_hat``,
    ``e_hat+ = (A_h - HC_h) e_hat``, ``sigma+ = A_s sigma``.
    ``residuals`` is an optional per-agent list of ``(A_s, C_s)``.
    """
    Ah, Bh, Ch, K, H = target.A_h, target.B_h, target.C_h, gains.K, gains.H
    Dt = np.atleast_2d(np.asarray(Dtilde, dtype=float))
    N, h = Dt.shape[0], target.h
    I = np.eye(N)
    Z = np.zeros((N * h, N * h))
    core = np.block([
        [np.kron(I, Ah - Bh @ K), np.kron(I, -Bh @ K), Z],
        [Z, np.kron(Dt, Ah), np.kron(I, Ah)],
        [Z, Z, np.kron(I, Ah - H @ Ch)],
    ])
    if not residuals:
        return core
    As = sla.block_diag(*[a for a, _ in residuals])
    coup = np.zeros((3 * N * h, As.shape[0]))
    col = 0
    for i, (a, cs) in enumerate(residuals):
        coup[i * h:(i + 1) * h, col:col + a.shape[0]] = Bh @ cs
        col += a.shape[0]
    return np.block([[core, coup], [np.zeros((As.shape[0], core.shape[1])), As]])


@dataclass(frozen=True)
class RegulatedSpectrum:
    radius: float
    feedback_radius: float
    observer_radius: float
    coupling_radius: float
    residual_radius: float

    def to_dict(self):
        return {
            "radius": self.radius, "feedback_block": self.feedback_radius,
            "observer_block": self.observer_radius, "coupling_block": self.coupling_radius,
            "residual_block": self.residual_radius,
        }


def regulated_error_spectrum(target: TargetModel, gains: GainPair, Dtilde, residuals=(), tol=1e-9):
    Ah, Bh, Ch = target.A_h, target.B_h, target.C_h
    rf = clustered_spectral_radius(Ah - Bh @ gains.K)
    ro = clustered_spectral_radius(Ah - gains.H @ Ch)
    rc = clustered_spectral_radius(Dtilde) * clustered_spectral_radius(Ah)
    rs = max((spectral_radius(a) for a, _ in residuals), default=0.0)
    radius = clustered_spectral_radius(regulated_error_matrix(target, gains, Dtilde, residuals))
    block = max(rf, ro, rc, rs)
    if abs(radius - block) > max(tol, 1e-6 * block):
        raise AssertionError(f"assembled radius {radius!r} differs from block maximum {block!r}")
    return RegulatedSpectrum(radius, rf, ro, rc, rs)
