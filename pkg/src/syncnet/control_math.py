"""Linear-algebra kernel: Schur tests, regulation equations, PBH rank tests, gain synthesis.

All rank decisions use singular values with a relative threshold
(``RANK_TOL * largest singular value``).  Eigenvalues that a defective matrix
scatters around a multiple root are clustered before they are used as test
points, otherwise a Jordan block at ``1`` shows up as ``1 +/- 1e-6`` and a rank
test there sees a spuriously nonsingular matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatch,
    NoSolution,
    RiccatiFailure,
    SearchExhausted,
    TransformMismatch,
)

RANK_TOL = 1e-9
EIG_TOL = 1e-9
RESIDUAL_TOL = 1e-10
CLUSTER_TOL = 1e-4


def as_matrix(a, rows=None, cols=None, name="matrix"):
    """Coerce to a 2-D float array, accepting scalars and empty shapes."""
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1) if cols == 1 else m.reshape(1, -1)
    if m.size == 0 and rows is not None and cols is not None:
        m = np.zeros((rows, cols))
    if (rows is not None and m.shape[0] != rows) or (cols is not None and m.shape[1] != cols):
        raise DimensionMismatch(f"{name} has shape {m.shape}, expected ({rows}, {cols})")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def input_scale(*mats) -> float:
    return 1.0 + max((float(np.max(np.abs(m))) for m in mats if np.size(m)), default=0.0)


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class LtiAgent:
    """One agent ``x+ = Ax + Bu + E w``, ``y = Cx + G w``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    E: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, name="A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        B = as_matrix(self.B, rows=n, name="B") if np.size(self.B) else np.zeros((n, 0))
        C = as_matrix(self.C, cols=n, name="C")
        E = as_matrix(self.E, rows=n, name="E") if np.size(self.E) else np.zeros((n, 0))
        p, nw = C.shape[0], E.shape[1]
        G = as_matrix(self.G, rows=p, cols=nw, name="G") if np.size(self.G) else np.zeros((p, nw))
        if G.shape != (p, nw):
            raise DimensionMismatch(f"G has shape {G.shape}, expected ({p}, {nw})")
        for name, val in zip("ABCEG", (A, B, C, E, G)):
            object.__setattr__(self, name, val)

    @property
    def dims(self):
        """``(n, m, p, n_omega)``."""
        return self.A.shape[0], self.B.shape[1], self.C.shape[0], self.E.shape[1]


@dataclass(frozen=True)
class Exosystem:
    S: np.ndarray
    omega0: np.ndarray = None

    def __post_init__(self):
        S = as_matrix(self.S, name="S")
        if S.shape[0] != S.shape[1]:
            raise DimensionMismatch("S must be square")
        w0 = np.zeros(S.shape[0]) if self.omega0 is None else np.asarray(self.omega0, float).reshape(-1)
        if w0.shape != (S.shape[0],):
            raise DimensionMismatch("omega0 length does not match S")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "omega0", w0)


@dataclass(frozen=True)
class RegulationSolution:
    Pi: np.ndarray
    Gamma: np.ndarray
    residual_dyn: float
    residual_out: float
    scale: float = 1.0

    @property
    def ok(self) -> bool:
        tol = RESIDUAL_TOL * self.scale
        return self.residual_dyn <= tol and self.residual_out <= tol


@dataclass(frozen=True)
class GainPair:
    K: np.ndarray
    H: np.ndarray
    source: str = "user"


class RankTest(NamedTuple):
    ok: bool
    worst_eigenvalue: complex | None
    margin: float


@dataclass
class Flag:
    passed: bool
    detail: str = ""
    value: object = None

    def to_dict(self):
        v = self.value
        if isinstance(v, complex):
            v = [v.real, v.imag]
        elif isinstance(v, np.generic):
            v = v.item()
        return {"passed": bool(self.passed), "detail": self.detail, "value": v}


@dataclass
class AssumptionReport:
    kind: str
    flags: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return all(f.passed for f in self.flags.values())

    def failed(self):
        return [k for k, f in self.flags.items() if not f.passed]

    def to_dict(self):
        return {
            "kind": self.kind,
            "all_pass": self.all_pass,
            "flags": {k: f.to_dict() for k, f in self.flags.items()},
        }


# ---------------------------------------------------------------------------
# spectra and ranks


def spectral_radius(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def is_schur(M, tol=EIG_TOL) -> bool:
    """True iff every eigenvalue of ``M`` has modulus below ``1 - tol``."""
    return spectral_radius(M) < 1.0 - tol


def numerical_rank(M, tol=RANK_TOL) -> int:
    M = np.asarray(M)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def _rank_margin(M):
    s = np.linalg.svd(M, compute_uv=False)
    k = min(M.shape)
    if k == 0 or s[0] == 0:
        return 0.0
    return float(s[k - 1] / s[0])


def clustered_eigenvalues(A, tol=CLUSTER_TOL):
    """Eigenvalues of ``A`` with near-coincident ones replaced by their cluster mean."""
    ev = np.linalg.eigvals(np.asarray(A, dtype=float)) if np.size(A) else np.array([])
    out = []
    used = np.zeros(len(ev), dtype=bool)
    for i, lam in enumerate(ev):
        if used[i]:
            continue
        near = (~used) & (np.abs(ev - lam) <= tol * max(1.0, abs(lam)))
        used |= near
        out.append(complex(np.mean(ev[near])))
    return out


def clustered_spectral_radius(M, tol=CLUSTER_TOL) -> float:
    """Spectral radius read off cluster means, stable for defective eigenvalues.

    A Jordan block of size ``k`` splits under rounding into ``k`` eigenvalues
    spread by ``eps**(1/k)``; their mean is accurate to ``eps``.
    """
    if np.size(M) == 0:
        return 0.0
    return float(max(abs(lam) for lam in clustered_eigenvalues(M, tol)))


def _pbh(A, M_extra, stack, unstable_tol=EIG_TOL):
    n = A.shape[0]
    worst, worst_margin = None, np.inf
    for lam in clustered_eigenvalues(A):
        if abs(lam) < 1.0 - unstable_tol:
            continue
        P = lam * np.eye(n) - A
        M = np.hstack([P, M_extra]) if stack == "h" else np.vstack([P, M_extra])
        r = numerical_rank(M)
        margin = _rank_margin(M)
        if r < n:
            return RankTest(False, lam, margin)
        if margin < worst_margin:
            worst, worst_margin = lam, margin
    return RankTest(True, worst, float(worst_margin if worst is not None else 1.0))


def pbh_stabilizable(A, B) -> RankTest:
    """``rank [lambda I - A, B] = n`` at every eigenvalue with ``|lambda| >= 1``."""
    A = as_matrix(A, name="A")
    B = np.zeros((A.shape[0], 0)) if np.size(B) == 0 else as_matrix(B, rows=A.shape[0], name="B")
    return _pbh(A, B.astype(complex), "h")


def pbh_detectable(C, A) -> RankTest:
    A = as_matrix(A, name="A")
    C = np.zeros((0, A.shape[0])) if np.size(C) == 0 else as_matrix(C, cols=A.shape[0], name="C")
    return _pbh(A, C.astype(complex), "v")


def observability_matrix(C, A, blocks=None):
    n = A.shape[0]
    blocks = n if blocks is None else blocks
    rows, M = [], C
    for _ in range(blocks):
        rows.append(M)
        M = M @ A
    return np.vstack(rows) if rows else np.zeros((0, n))


def is_observable(C, A) -> bool:
    return numerical_rank(observability_matrix(C, A)) == A.shape[0]


def observability_indices(C, A):
    """Observability indices, one per output row, by scanning ``c_j A^k`` for independence."""
    n, p = A.shape[0], C.shape[0]
    kept = np.zeros((0, n))
    idx = [0] * p
    active = list(range(p))
    Ak = np.eye(n)
    for _ in range(n):
        still = []
        for j in active:
            row = (C[j] @ Ak)[None, :]
            trial = np.vstack([kept, row])
            if numerical_rank(trial) > kept.shape[0]:
                kept = trial
                idx[j] += 1
                still.append(j)
        active = still
        if not active or kept.shape[0] == n:
            break
        Ak = Ak @ A
    return idx


def rosenbrock(lam, C, A, B, D=None):
    n, m, p = A.shape[0], B.shape[1], C.shape[0]
    D = np.zeros((p, m)) if D is None else D
    return np.block([[lam * np.eye(n) - A, -B], [C, D]])


def _random_point(A, seed=12345):
    rng = np.random.default_rng(seed)
    ev = np.linalg.eigvals(A) if A.size else np.array([0.0])
    while True:
        lam = complex(rng.uniform(0.3, 1.7), rng.uniform(0.3, 1.7))
        if np.all(np.abs(ev - lam) > 1e-3):
            return lam


def normal_rank(C, A, B, D=None) -> int:
    return numerical_rank(rosenbrock(_random_point(A), C, A, B, D))


def is_right_invertible(C, A, B, D=None) -> bool:
    return normal_rank(C, A, B, D) == A.shape[0] + C.shape[0]


def is_invertible(C, A, B, D=None) -> bool:
    return C.shape[0] == B.shape[1] and is_right_invertible(C, A, B, D)


def invariant_zero_free(C, A, B, lambdas, D=None) -> bool:
    """True iff the Rosenbrock matrix has rank ``n + min(m, p)`` at every point of ``lambdas``."""
    A = as_matrix(A, name="A")
    n = A.shape[0]
    B = as_matrix(B, rows=n, name="B")
    C = as_matrix(C, cols=n, name="C")
    full = n + min(B.shape[1], C.shape[0])
    return all(numerical_rank(rosenbrock(complex(lam), C, A, B, D)) == full for lam in lambdas)


def unit_circle_grid(points=64):
    return list(np.exp(2j * np.pi * np.arange(points) / points))


def _square_zeros(C, A, B, D):
    n = A.shape[0]
    m = B.shape[1]
    M = np.block([[A, B], [-C, -D]])
    N = np.zeros_like(M)
    N[:n, :n] = np.eye(n)
    if normal_rank(C, A, B, D) < n + m:
        return None
    w = sla.eigvals(M, N)
    return w[np.isfinite(w)]


def invariant_zeros(C, A, B, D=None, seed=0):
    """Finite invariant zeros of ``(C, A, B, D)``.

    Square systems use the generalized eigenvalues of the Rosenbrock pencil.
    Rectangular systems are squared down twice with random compressions and
    the common zeros are kept.  Returns ``None`` when the system is degenerate
    (normal rank below ``n + min(m, p)``).
    """
    A = as_matrix(A, name="A")
    n = A.shape[0]
    B = as_matrix(B, rows=n, name="B")
    C = as_matrix(C, cols=n, name="C")
    m, p = B.shape[1], C.shape[0]
    D = np.zeros((p, m)) if D is None else as_matrix(D, rows=p, cols=m, name="D")
    if normal_rank(C, A, B, D) < n + min(m, p):
        return None
    if m == p:
        return _square_zeros(C, A, B, D)
    rng = np.random.default_rng(seed)
    sets = []
    for _ in range(2):
        if m > p:
            W = rng.standard_normal((m, p))
            z = _square_zeros(C, A, B @ W, D @ W)
        else:
            W = rng.standard_normal((m, p))
            z = _square_zeros(W.T @ C, A, B, W.T @ D)
        sets.append(np.array([]) if z is None else z)
    common = [z for z in sets[0] if np.any(np.abs(sets[1] - z) < 1e-6 * max(1.0, abs(z)))]
    return np.array(common, dtype=complex)


def markov_parameters(C, A, B, count):
    out, M = [], B
    for _ in range(count):
        out.append(C @ M)
        M = A @ M
    return out


def infinite_zero_order(C, A, B) -> int:
    """Largest infinite-zero order of a right-invertible triple (relative degree for SISO)."""
    n = A.shape[0]
    p = C.shape[0]
    mk = markov_parameters(C, A, B, n + 1)
    prev = 0
    for k in range(1, n + 2):
        T = np.zeros((p * k, B.shape[1] * k))
        for i in range(k):
            for j in range(i + 1):
                T[i * p:(i + 1) * p, j * B.shape[1]:(j + 1) * B.shape[1]] = mk[i - j]
        r = numerical_rank(T)
        if r - prev == p:
            return k
        prev = r
    raise DimensionMismatch("triple is not right-invertible; infinite-zero order undefined")


# ---------------------------------------------------------------------------
# regulation equations


def _vec(M):
    return M.reshape(-1, order="F")


def _unvec(v, rows, cols):
    return v.reshape((rows, cols), order="F")


def solve_regulation(agent: LtiAgent, S) -> RegulationSolution:
    """Solve ``Pi S = A Pi + B Gamma + E`` and ``C Pi + G = 0``.

    Both equations are stacked into one linear system in ``vec(Pi)`` and
    ``vec(Gamma)``.  Square well-posed systems go through LU; otherwise a
    minimum-norm least-squares solution is formed and accepted only if the
    residuals vanish.
    """
    A, B, C, E, G = agent.A, agent.B, agent.C, agent.E, agent.G
    S = as_matrix(S, name="S")
    n, m, p, nw = agent.dims
    if S.shape != (nw, nw):
        raise DimensionMismatch(f"S must be {nw}x{nw} to match E and G, got {S.shape}")
    I_n, I_w = np.eye(n), np.eye(nw)
    top = np.hstack([np.kron(S.T, I_n) - np.kron(I_w, A), -np.kron(I_w, B)])
    bottom = np.hstack([np.kron(I_w, C), np.zeros((p * nw, m * nw))])
    M = np.vstack([top, bottom])
    rhs = np.concatenate([_vec(E), -_vec(G)])
    scale = input_scale(A, B, C, E, G, S)
    sol = None
    if M.shape[0] == M.shape[1] and M.size:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu = sla.lu_factor(M, check_finite=False)
            if np.min(np.abs(np.diag(lu[0]))) > 1e-12 * np.max(np.abs(M)):
                sol = sla.lu_solve(lu, rhs)
        except (sla.LinAlgError, ValueError):
            sol = None
    if sol is None:
        sol = np.linalg.lstsq(M, rhs, rcond=None)[0] if M.size else np.zeros(M.shape[1])
    Pi = _unvec(sol[: n * nw], n, nw)
    Gamma = _unvec(sol[n * nw:], m, nw)
    res_dyn = float(np.max(np.abs(Pi @ S - A @ Pi - B @ Gamma - E), initial=0.0))
    res_out = float(np.max(np.abs(C @ Pi + G), initial=0.0))
    out = RegulationSolution(Pi, Gamma, res_dyn, res_out, scale)
    if not out.ok:
        raise NoSolution(
            f"regulation equations are inconsistent (residuals {res_dyn:.3e}, {res_out:.3e})",
            residual=max(res_dyn, res_out),
        )
    return out


def regulation_residuals(agent: LtiAgent, S, Pi, Gamma):
    """Residuals of a candidate ``(Pi, Gamma)``; used to audit externally supplied solutions."""
    S = as_matrix(S)
    Pi = as_matrix(Pi, rows=agent.A.shape[0], cols=S.shape[0], name="Pi")
    Gamma = as_matrix(Gamma, rows=agent.B.shape[1], cols=S.shape[0], name="Gamma")
    r_dyn = float(np.max(np.abs(Pi @ S - agent.A @ Pi - agent.B @ Gamma - agent.E), initial=0.0))
    r_out = float(np.max(np.abs(agent.C @ Pi + agent.G), initial=0.0))
    return r_dyn, r_out


def solve_sylvester_output(A, E, C, G, S):
    """Solve ``X S = A X + E`` with ``C X + G = 0`` for ``X`` (no input term).

    This is the cascade-level form of the regulation equations; the
    pre-compensator block of the solution need not be the identity when the
    supplied ``Gamma`` is a rotated version of the regulation solution.
    """
    n, nw = A.shape[0], S.shape[0]
    M = np.vstack([np.kron(S.T, np.eye(n)) - np.kron(np.eye(nw), A), np.kron(np.eye(nw), C)])
    rhs = np.concatenate([_vec(E), -_vec(G)])
    sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    X = _unvec(sol, n, nw)
    res = max(
        float(np.max(np.abs(X @ S - A @ X - E), initial=0.0)),
        float(np.max(np.abs(C @ X + G), initial=0.0)),
    )
    if res > RESIDUAL_TOL * input_scale(A, E, C, G, S):
        raise NoSolution(f"cascade regulation equations are inconsistent (residual {res:.3e})", res)
    return X


def commuting_alignment(Gamma_from, Gamma_to, S):
    """Find ``T`` with ``S T = T S`` and ``Gamma_from @ T = Gamma_to``.

    A pre-compensator ``(S, B_p, Gamma_from)`` is then the same system as
    ``(S, T^-1 B_p, Gamma_to)`` written in rotated coordinates ``p = T p'``.
    """
    S = as_matrix(S)
    nw = S.shape[0]
    Gf = as_matrix(Gamma_from, cols=nw)
    Gt = as_matrix(Gamma_to, rows=Gf.shape[0], cols=nw)
    I = np.eye(nw)
    M = np.vstack([np.kron(I, S) - np.kron(S.T, I), np.kron(I, Gf)])
    rhs = np.concatenate([np.zeros(nw * nw), _vec(Gt)])
    sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    T = _unvec(sol, nw, nw)
    res = float(np.max(np.abs(M @ sol - rhs), initial=0.0))
    if res > 1e-9 * input_scale(S, Gf, Gt) or numerical_rank(T) < nw:
        raise NoSolution(f"no invertible S-commuting map relates the two Gamma (residual {res:.3e})", res)
    return T


# ---------------------------------------------------------------------------
# similarity-transform checks


def phi_transform(Pi):
    n, nw = Pi.shape
    return np.block([[np.eye(n), Pi], [np.zeros((nw, n)), np.eye(nw)]])


def detectability_transform_check(A, E, S, C, G, Pi, B, Gamma, tol=RESIDUAL_TOL, measurement=False) -> bool:
    """Verify the similarity ``Phi = [[I, Pi], [0, I]]`` maps ``([C, -G], [[A, -E], [0, S]])``
    onto ``([C, 0], [[A, B Gamma], [0, S]])`` and return detectability of the image.

    With ``measurement=True`` the output map is a local measurement that sees
    no noise: ``[C, 0]`` is mapped onto ``[C, -C Pi]`` instead.

    Raises
    ------
    TransformMismatch
        If either block identity fails, which means ``Pi`` does not solve the
        regulation equations for ``(A, B, E, C, G, S)``.
    """
    A, S, Pi = as_matrix(A), as_matrix(S), as_matrix(Pi)
    n, nw = A.shape[0], S.shape[0]
    E = as_matrix(E, rows=n, cols=nw) if np.size(E) else np.zeros((n, nw))
    C = as_matrix(C, cols=n)
    G = as_matrix(G, rows=C.shape[0], cols=nw) if np.size(G) else np.zeros((C.shape[0], nw))
    B = as_matrix(B, rows=n)
    Gamma = as_matrix(Gamma, rows=B.shape[1], cols=nw) if np.size(Gamma) else np.zeros((B.shape[1], nw))
    Phi = phi_transform(Pi)
    Phi_inv = phi_transform(-Pi)
    A_o = np.block([[A, -E], [np.zeros((nw, n)), S]])
    if measurement:
        G = np.zeros_like(G)
    C_o = np.hstack([C, -G])
    A_img = Phi @ A_o @ Phi_inv
    C_img = C_o @ Phi_inv
    A_exp = np.block([[A, B @ Gamma], [np.zeros((nw, n)), S]])
    C_exp = np.hstack([C, -C @ Pi]) if measurement else np.hstack([C, np.zeros_like(G)])
    scale = input_scale(A, B, C, E, G, S, Pi, Gamma) ** 2
    err_a = float(np.max(np.abs(A_img - A_exp)))
    err_c = float(np.max(np.abs(C_img - C_exp)))
    if err_a > tol * scale or err_c > tol * scale:
        raise TransformMismatch(
            f"similarity identity fails (state block {err_a:.3e}, output block {err_c:.3e})"
        )
    return pbh_detectable(C_img, A_img).ok


# ---------------------------------------------------------------------------
# gains and pre-compensators


def _dare_gain(A, B):
    n, m = B.shape
    P = sla.solve_discrete_are(A, B, np.eye(n), np.eye(m))
    res = A.T @ P @ A - P - A.T @ P @ B @ np.linalg.solve(np.eye(m) + B.T @ P @ B, B.T @ P @ A) + np.eye(n)
    scale = max(1.0, np.max(np.abs(P)) * max(1.0, np.max(np.abs(A))) ** 2)
    if not np.all(np.isfinite(P)) or np.max(np.abs(res)) > 1e-8 * scale:
        raise RiccatiFailure("Riccati residual above tolerance")
    return np.linalg.solve(np.eye(m) + B.T @ P @ B, B.T @ P @ A)


def synthesize_gains(A, B, C) -> GainPair:
    """Schur-stabilizing ``K`` and ``H`` from identity-weighted discrete Riccati equations.

    ``A - B K`` and ``A - H C`` are both Schur on return.
    """
    A = as_matrix(A, name="A")
    n = A.shape[0]
    B = as_matrix(B, rows=n, name="B")
    C = as_matrix(C, cols=n, name="C")
    if is_schur(A) and not np.any(A):
        return GainPair(np.zeros((B.shape[1], n)), np.zeros((n, C.shape[0])), "riccati")
    try:
        K = _dare_gain(A, B)
        H = _dare_gain(A.T, C.T).T
    except (np.linalg.LinAlgError, ValueError, sla.LinAlgError) as exc:
        raise RiccatiFailure(f"discrete Riccati equation has no stabilizing solution: {exc}") from exc
    if not (is_schur(A - B @ K) and is_schur(A - H @ C)):
        raise RiccatiFailure("Riccati gains do not stabilize the closed loops")
    return GainPair(K, H, "riccati")


@dataclass(frozen=True)
class PrecompensatorCheck:
    ok: bool
    zeros: np.ndarray
    invertible: bool
    worst_modulus: float


def check_precompensator(Gamma, S, B_p, D_p, allow_marginal_zeros=False) -> PrecompensatorCheck:
    """Invertibility and zero locations of ``p+ = S p + B_p v``, ``u = Gamma p + D_p v``.

    Zeros are the invariant zeros of the realization, so an internal-model mode
    that ``v`` cannot excite counts as a zero at that eigenvalue of ``S``.
    """
    S = as_matrix(S, name="S")
    nw = S.shape[0]
    Gamma = as_matrix(Gamma, cols=nw, name="Gamma") if nw else np.zeros((np.shape(D_p)[0], 0))
    m = Gamma.shape[0]
    D_p = as_matrix(D_p, rows=m, name="D_p")
    B_p = as_matrix(B_p, rows=nw, cols=D_p.shape[1], name="B_p") if nw else np.zeros((0, D_p.shape[1]))
    if D_p.shape[1] != m:
        return PrecompensatorCheck(False, np.array([]), False, np.inf)
    if nw == 0:
        inv = numerical_rank(D_p) == m
        return PrecompensatorCheck(inv, np.array([]), inv, 0.0)
    zeros = invariant_zeros(Gamma, S, B_p, D_p)
    if zeros is None:
        return PrecompensatorCheck(False, np.array([]), False, np.inf)
    worst = float(np.max(np.abs(zeros), initial=0.0))
    limit = 1.0 + EIG_TOL if allow_marginal_zeros else 1.0 - EIG_TOL
    ok = worst <= limit if allow_marginal_zeros else worst < limit
    return PrecompensatorCheck(bool(ok), zeros, True, worst)


def minimum_phase_precompensator(Gamma, S, seed=0, max_candidates=1000, allow_marginal_zeros=False):
    """Pick ``(B_p, D_p)`` making the internal-model pre-compensator invertible and minimum-phase.

    With ``D_p = I`` the zeros are the eigenvalues of ``S - B_p Gamma``, so the
    first candidate is the dual-Riccati observer gain of ``(Gamma, S)``; seeded
    random ``B_p`` follow if that is unavailable.
    """
    S = as_matrix(S, name="S")
    nw = S.shape[0]
    Gamma = as_matrix(Gamma, cols=nw, name="Gamma")
    m = Gamma.shape[0]
    D_p = np.eye(m)
    candidates = []
    try:
        candidates.append(_dare_gain(S.T, Gamma.T).T)
    except (np.linalg.LinAlgError, ValueError, sla.LinAlgError, RiccatiFailure):
        pass
    rng = np.random.default_rng(seed)
    for _ in range(max_candidates - len(candidates)):
        candidates.append(rng.standard_normal((nw, m)))
    for B_p in candidates[:max_candidates]:
        if check_precompensator(Gamma, S, B_p, D_p, allow_marginal_zeros).ok:
            return B_p, D_p
    raise SearchExhausted(f"no minimum-phase pre-compensator found in {max_candidates} candidates")


# ---------------------------------------------------------------------------
# assumption reports


def _eig_flag(M, predicate, text):
    ev = np.linalg.eigvals(M) if np.size(M) else np.array([])
    mods = np.abs(ev)
    bad = [lam for lam, r in zip(ev, mods) if not predicate(r)]
    return Flag(not bad, text if not bad else f"{text}: offending eigenvalue {bad[0]:.6g}", complex(bad[0]) if bad else None)


def _rank_flag(test: RankTest, text):
    detail = text if test.ok else f"{text}: rank defect at eigenvalue {test.worst_eigenvalue:.6g}"
    return Flag(test.ok, detail, test.worst_eigenvalue)


def _augmented(A, E, S):
    n, nw = A.shape[0], S.shape[0]
    return np.block([[A, -E], [np.zeros((nw, n)), S]])


def check_assumptions(kind, **inputs) -> AssumptionReport:
    """Evaluate an assumption family.

    ``kind="A1"``: ``agent`` (LtiAgent) and ``S``.
    ``kind="A2"``: ``A_r`` and ``C_r``.
    ``kind="A3"``: ``agent``, ``S`` and ``Cm`` (local measurement map).
    """
    report = AssumptionReport(kind)
    f = report.flags
    if kind == "A2":
        Ar = as_matrix(inputs["A_r"])
        Cr = as_matrix(inputs["C_r"], cols=Ar.shape[0])
        f["A2.1"] = _eig_flag(Ar, lambda r: abs(r - 1.0) <= EIG_TOL * 1e3, "eigenvalues of A_r on the unit circle")
        obs = numerical_rank(observability_matrix(Cr, Ar))
        f["A2.2"] = Flag(obs == Ar.shape[0], f"observability rank {obs} of {Ar.shape[0]}", obs)
        return report

    agent: LtiAgent = inputs["agent"]
    S = as_matrix(inputs["S"])
    A, B, C, E, G = agent.A, agent.B, agent.C, agent.E, agent.G
    n = A.shape[0]
    eigS = np.linalg.eigvals(S) if S.size else np.array([])
    zeros = invariant_zeros(C, A, B)
    right_inv = is_right_invertible(C, A, B)

    if kind == "A1":
        f["A1.1"] = _eig_flag(A, lambda r: r <= 1.0 + EIG_TOL, "eigenvalues of A in the closed unit disc")
        f["A1.2"] = _eig_flag(S, lambda r: abs(r - 1.0) <= EIG_TOL * 1e3, "eigenvalues of S on the unit circle")
        f["A1.3"] = _rank_flag(pbh_stabilizable(A, B), "(A, B) stabilizable")
        f["A1.4"] = _rank_flag(pbh_detectable(np.hstack([C, -G]), _augmented(A, E, S)), "([C, -G], [[A, -E], [0, S]]) detectable")
        f["A1.5"] = Flag(right_inv, "(C, A, B) right-invertible" if right_inv else "(C, A, B) is not right-invertible")
        f["A1.6"] = _zero_flag(C, A, B, zeros, eigS, require_inside=True)
    elif kind == "A3":
        Cm = as_matrix(inputs["Cm"], cols=n, name="Cm")
        f["A3.1"] = _rank_flag(pbh_stabilizable(A, B), "(A_i, B_i) stabilizable")
        f["A3.2"] = _rank_flag(pbh_detectable(np.hstack([C, -G]), _augmented(A, E, S)), "([C_i, -G_i], [[A_i, -E_i], [0, S_i]]) detectable")
        f["A3.3"] = Flag(right_inv, "(C_i, A_i, B_i) right-invertible" if right_inv else "(C_i, A_i, B_i) is not right-invertible")
        f["A3.4"] = _rank_flag(
            pbh_detectable(np.hstack([Cm, np.zeros((Cm.shape[0], S.shape[0]))]), _augmented(A, E, S)),
            "([C_i^m, 0], [[A_i, -E_i], [0, S_i]]) detectable",
        )
        f["A3.5"] = _zero_flag(C, A, B, zeros, eigS, require_inside=False)
    else:
        raise ValueError(f"unknown assumption family {kind!r}")
    return report


def _zero_flag(C, A, B, zeros, eigS, require_inside):
    n = A.shape[0]
    full = n + min(B.shape[1], C.shape[0])
    points = list(eigS) + (unit_circle_grid() if require_inside else [])
    clean = all(numerical_rank(rosenbrock(complex(l), C, A, B)) == full for l in points)
    if zeros is None:
        return Flag(False, "system is degenerate (Rosenbrock pencil rank-deficient everywhere)")
    hits = [z for z in zeros if np.any(np.abs(eigS - z) < 1e-6 * max(1.0, abs(z)))]
    outside = [z for z in zeros if abs(z) >= 1.0 - EIG_TOL] if require_inside else []
    bad = hits + outside
    if bad or not clean:
        z = bad[0] if bad else None
        return Flag(False, f"invariant zero at {z:.6g}" if z is not None else "Rosenbrock rank drop on test grid", z)
    return Flag(True, f"{len(zeros)} invariant zero(s), none on/outside the unit circle or at eig(S)"
                if require_inside else f"{len(zeros)} invariant zero(s), none at eig(S)")
