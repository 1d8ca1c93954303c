"""Protocol design for identical agents under exosystem disturbances.

Pipeline: regulation equations -> internal-model pre-compensator -> cascade
``(A~, B~, C~)`` in which the disturbance is removed by the coordinate change
``x_bar = x~ - Pi~ w`` -> observer-based protocol exchanging ``chi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control_math import (
    GainPair,
    LtiAgent,
    RankTest,
    RegulationSolution,
    as_matrix,
    check_precompensator,
    clustered_spectral_radius,
    input_scale,
    pbh_detectable,
    pbh_stabilizable,
    solve_sylvester_output,
    spectral_radius,
    RESIDUAL_TOL,
)
from .errors import AssumptionFailure, DimensionMismatch
from .realization import ProtocolRealization

__all__ = [
    "CascadeSystem",
    "build_cascade",
    "build_hom_protocol",
    "HomProtocolRealization",
    "DisagreementSpectrum",
    "disagreement_spectrum",
    "disagreement_matrix",
]


@dataclass(frozen=True)
class CascadeSystem:
    A_tilde: np.ndarray
    B_tilde: np.ndarray
    C_tilde: np.ndarray
    E_tilde: np.ndarray
    Pi_tilde: np.ndarray
    G: np.ndarray
    S: np.ndarray
    Gamma: np.ndarray
    B_p: np.ndarray
    D_p: np.ndarray
    stabilizable: RankTest = None
    detectable: RankTest = None
    pi_tilde_residual: float = 0.0
    pi_tilde_source: str = "stacked"
    precompensator_zeros: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.A_tilde.shape[0]


def _cascade_blocks(agent, S, Gamma, B_p, D_p):
    A, B, C, E = agent.A, agent.B, agent.C, agent.E
    n, nw = A.shape[0], S.shape[0]
    At = np.block([[A, B @ Gamma], [np.zeros((nw, n)), S]])
    Bt = np.vstack([B @ D_p, B_p])
    Ct = np.hstack([C, np.zeros((C.shape[0], nw))])
    Et = np.vstack([E, np.zeros((nw, nw))])
    return At, Bt, Ct, Et


def _pi_residual(At, Et, Ct, G, S, Pt):
    return max(
        float(np.max(np.abs(Pt @ S - At @ Pt - Et), initial=0.0)),
        float(np.max(np.abs(Ct @ Pt + G), initial=0.0)),
    )


def build_cascade(agent: LtiAgent, S, regsol: RegulationSolution, B_p, D_p,
                  allow_marginal_zeros=False, check=True) -> CascadeSystem:
    """Assemble the pre-compensator/agent cascade and certify it.

    ``Pi~ = [Pi; I]`` is used whenever it satisfies the cascade regulation
    equations.  A ``Gamma`` supplied in rotated pre-compensator coordinates
    does not; ``Pi~`` is then solved for directly from the cascade.
    """
    S = as_matrix(S, name="S")
    n, m, p, nw = agent.dims
    Gamma = as_matrix(regsol.Gamma, rows=m, cols=nw, name="Gamma") if nw else np.zeros((m, 0))
    D_p = as_matrix(D_p, rows=m, name="D_p")
    B_p = as_matrix(B_p, rows=nw, cols=D_p.shape[1], name="B_p") if nw else np.zeros((0, D_p.shape[1]))
    At, Bt, Ct, Et = _cascade_blocks(agent, S, Gamma, B_p, D_p)
    scale = input_scale(At, Bt, Ct, Et, S, agent.G)
    Pt = np.vstack([regsol.Pi, np.eye(nw)])
    res = _pi_residual(At, Et, Ct, agent.G, S, Pt)
    source = "stacked"
    if res > RESIDUAL_TOL * scale:
        Pt = solve_sylvester_output(At, Et, Ct, agent.G, S)
        res = _pi_residual(At, Et, Ct, agent.G, S, Pt)
        source = "cascade"
    pc = check_precompensator(Gamma, S, B_p, D_p, allow_marginal_zeros)
    stab = pbh_stabilizable(At, Bt)
    det = pbh_detectable(Ct, At)
    if check:
        if not pc.ok:
            raise AssumptionFailure(
                f"pre-compensator is not invertible minimum-phase (largest zero modulus {pc.worst_modulus:.6g})",
                test="precompensator",
            )
        if not stab.ok:
            raise AssumptionFailure(f"cascade (A~, B~) not stabilizable at {stab.worst_eigenvalue}", test="stabilizable")
        if not det.ok:
            raise AssumptionFailure(f"cascade (C~, A~) not detectable at {det.worst_eigenvalue}", test="detectable")
    return CascadeSystem(At, Bt, Ct, Et, Pt, agent.G.copy(), S, Gamma, B_p, D_p,
                         stab, det, res, source, pc.zeros)


class HomProtocolRealization(ProtocolRealization):
    """Realization with state ``(p, x_hat, chi)`` and exchange ``eta = chi``."""


def build_hom_protocol(cascade: CascadeSystem, gains: GainPair, Gamma=None, B_p=None, D_p=None, S=None,
                       check_gains=True) -> HomProtocolRealization:
    """Combined per-agent protocol.

    ``p+ = S p - B_p K chi``,
    ``x_hat+ = A~ x_hat - B~ K zeta_hat + H (zeta - C~ x_hat)``,
    ``chi+ = (A~ - B~ K) chi + A~ (x_hat - zeta_hat)``,
    ``u = Gamma p - D_p K chi``.
    """
    At, Bt, Ct = cascade.A_tilde, cascade.B_tilde, cascade.C_tilde
    Gamma = cascade.Gamma if Gamma is None else as_matrix(Gamma)
    B_p = cascade.B_p if B_p is None else as_matrix(B_p)
    D_p = cascade.D_p if D_p is None else as_matrix(D_p)
    S = cascade.S if S is None else as_matrix(S)
    nt, mv, p = At.shape[0], Bt.shape[1], Ct.shape[0]
    nw = S.shape[0]
    K = as_matrix(gains.K, rows=mv, cols=nt, name="K")
    H = as_matrix(gains.H, rows=nt, cols=p, name="H")
    if Gamma.shape[1] != nw or B_p.shape != (nw, mv) or D_p.shape[1] != mv:
        raise DimensionMismatch("pre-compensator blocks do not match the cascade")
    if check_gains:
        for M, name in ((At - Bt @ K, "A~ - B~K"), (At - H @ Ct, "A~ - HC~")):
            r = spectral_radius(M)
            if r >= 1.0:
                raise AssumptionFailure(f"{name} is not Schur (spectral radius {r:.6g})", test="gains")
    Z = np.zeros
    A = np.block([
        [S, Z((nw, nt)), -B_p @ K],
        [Z((nt, nw)), At - H @ Ct, Z((nt, nt))],
        [Z((nt, nw)), At, At - Bt @ K],
    ])
    B_zeta = np.vstack([Z((nw, p)), H, Z((nt, p))])
    B_zhat = np.vstack([Z((nw, nt)), -Bt @ K, -At])
    C_u = np.hstack([Gamma, Z((Gamma.shape[0], nt)), -D_p @ K])
    C_eta = np.hstack([Z((nt, nw)), Z((nt, nt)), np.eye(nt)])
    return HomProtocolRealization(
        A=A, B_zeta=B_zeta, B_zhat=B_zhat, B_z=Z((A.shape[0], 0)), C_u=C_u,
        D_z=Z((Gamma.shape[0], 0)), C_eta=C_eta,
        partition=(("p", nw), ("x_hat", nt), ("chi", nt)),
        meta={"kind": "homogeneous", "gain_source": gains.source},
    )


@dataclass(frozen=True)
class DisagreementSpectrum:
    radius: float
    feedback_radius: float
    observer_radius: float
    coupling_radius: float

    @property
    def block_max(self) -> float:
        return max(self.feedback_radius, self.observer_radius, self.coupling_radius)

    def to_dict(self):
        return {
            "radius": self.radius,
            "feedback_block": self.feedback_radius,
            "observer_block": self.observer_radius,
            "coupling_block": self.coupling_radius,
        }


def disagreement_matrix(cascade: CascadeSystem, gains: GainPair, Dbar) -> np.ndarray:
    """Error system in coordinates ``(rho, chi~ - rho, e_hat)`` relative to the last agent.

    ``rho+ = (A~ - B~K) rho - B~K delta``,
    ``delta+ = (Dbar (x) A~) delta + A~ e``,
    ``e+ = (A~ - HC~) e``.
    """
    At, Bt, Ct = cascade.A_tilde, cascade.B_tilde, cascade.C_tilde
    K, H = gains.K, gains.H
    Dbar = np.atleast_2d(np.asarray(Dbar, dtype=float))
    M = Dbar.shape[0] if Dbar.size else 0
    nt = At.shape[0]
    if M == 0:
        return np.block([
            [At - Bt @ K, np.zeros((nt, nt))],
            [np.zeros((nt, nt)), At - H @ Ct],
        ])
    I = np.eye(M)
    Z = np.zeros((M * nt, M * nt))
    return np.block([
        [np.kron(I, At - Bt @ K), np.kron(I, -Bt @ K), Z],
        [Z, np.kron(Dbar, At), np.kron(I, At)],
        [Z, Z, np.kron(I, At - H @ Ct)],
    ])


def disagreement_spectrum(cascade: CascadeSystem, gains: GainPair, Dbar, tol=1e-9) -> DisagreementSpectrum:
    """Spectral radius of the disagreement system and of its three diagonal blocks.

    Block radii come from the small factors (``rho(Dbar (x) A~) = rho(Dbar) rho(A~)``);
    the overall radius is an eigen-decomposition of the assembled matrix.  The
    two must agree because the matrix is block upper-triangular.
    """
    At, Bt, Ct = cascade.A_tilde, cascade.B_tilde, cascade.C_tilde
    rf = clustered_spectral_radius(At - Bt @ gains.K)
    ro = clustered_spectral_radius(At - gains.H @ Ct)
    Dbar = np.asarray(Dbar, dtype=float)
    rc = clustered_spectral_radius(Dbar) * clustered_spectral_radius(At) if Dbar.size else 0.0
    radius = clustered_spectral_radius(disagreement_matrix(cascade, gains, Dbar))
    block = max(rf, ro, rc)
    if abs(radius - block) > max(tol, 1e-6 * block):
        raise AssertionError(f"assembled radius {radius!r} differs from block maximum {block!r}")
    return DisagreementSpectrum(radius, rf, ro, rc)
