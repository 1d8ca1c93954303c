import numpy as np
import pytest

from syncnet.control_math import (
    LtiAgent,
    check_assumptions,
    check_precompensator,
    clustered_spectral_radius,
    detectability_transform_check,
    infinite_zero_order,
    invariant_zero_free,
    invariant_zeros,
    is_schur,
    markov_parameters,
    minimum_phase_precompensator,
    pbh_detectable,
    pbh_stabilizable,
    regulation_residuals,
    solve_regulation,
    spectral_radius,
    synthesize_gains,
)
from syncnet.errors import TransformMismatch
from syncnet.homogeneous import build_cascade

A0 = np.array([[1.0, 1, 0], [0, 1, 1], [0, 0, 1]])
B0 = np.array([[0.0], [0], [1]])
E0 = np.array([[1.0, 0], [0, 1], [1, 1]])
C0 = np.array([[1.0, 0, 0]])
G0 = np.array([[1.0, 1]])
S0 = np.array([[0.0, 1], [-1, 0]])
HOM = LtiAgent(A0, B0, C0, E0, G0)
# hand elimination: C Pi = -G fixes row 1; Pi S = A Pi + B Gamma + E fixes rows 2, 3 and Gamma
PI_HAND = np.array([[-1.0, -1], [1, 0], [-1, 0]])
GAMMA_HAND = np.array([[0.0, -2]])


def rotation(theta):
    return np.array([[np.cos(theta), np.sin(theta)], [-np.sin(theta), np.cos(theta)]])


def test_is_schur_cases():
    assert is_schur(np.zeros((3, 3)))
    assert not is_schur(np.eye(2))
    assert not is_schur(S0)


def test_is_schur_similarity_invariant(rng):
    for _ in range(50):
        M = rng.standard_normal((4, 4))
        M *= rng.uniform(0.3, 1.5) / spectral_radius(M)
        while True:
            T = rng.standard_normal((4, 4))
            if np.linalg.cond(T) <= 1e3:
                break
        Mt = T @ M @ np.linalg.inv(T)
        assert (spectral_radius(M) < 1 - 1e-6) == (spectral_radius(Mt) < 1 - 1e-6)


def test_clustered_radius_on_jordan_block():
    J = np.eye(5) + np.diag(np.ones(4), 1)
    assert clustered_spectral_radius(0.9 * J) == pytest.approx(0.9, abs=1e-12)


def test_regulation_trivial():
    ag = LtiAgent(A0, B0, C0, np.zeros((3, 2)), np.zeros((1, 2)))
    sol = solve_regulation(ag, S0)
    assert np.allclose(sol.Pi, 0) and np.allclose(sol.Gamma, 0)


def test_regulation_hand_elimination_oracle():
    rd, ro = regulation_residuals(HOM, S0, PI_HAND, GAMMA_HAND)
    assert rd == 0 and ro == 0
    sol = solve_regulation(HOM, S0)
    assert np.allclose(sol.Pi, PI_HAND, atol=1e-12) and np.allclose(sol.Gamma, GAMMA_HAND, atol=1e-12)
    assert sol.residual_dyn <= 1e-12 and sol.residual_out <= 1e-12


def test_printed_regulation_values_have_dynamic_residual():
    rd, ro = regulation_residuals(HOM, S0, np.array([[-1.0, -1], [1, 0], [0, 0]]), np.array([[-1.0, -1]]))
    assert ro == 0 and rd == pytest.approx(1.0)


def test_group2_printed_pi_by_substitution():
    Dq = np.array([[2.0], [1]])
    qag = LtiAgent(np.array([[0.0, 1], [-1, 0]]), np.eye(2) @ Dq, np.array([[1.0, 1]]), np.array([[1.0], [0]]),
                   np.array([[2.0]]))
    rd, ro = regulation_residuals(qag, np.array([[1.0]]), np.array([[-2.5], [0.5]]), np.array([[-2.0]]))
    assert rd <= 1e-10 and ro <= 1e-10


def back_generated(rng, n, m, nw):
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((m, n))
    S = np.zeros((nw, nw))
    for k in range(0, nw - 1, 2):
        S[k:k + 2, k:k + 2] = rotation(rng.uniform(0.1, 3.0))
    if nw % 2:
        S[-1, -1] = rng.choice([-1.0, 1.0])
    Pi = rng.standard_normal((n, nw))
    Gamma = rng.standard_normal((m, nw))
    E = Pi @ S - A @ Pi - B @ Gamma
    G = -C @ Pi
    return LtiAgent(A, B, C, E, G), S, Pi, Gamma


def test_regulation_back_generated(rng):
    for _ in range(100):
        ag, S, Pi, Gamma = back_generated(rng, int(rng.integers(1, 5)), int(rng.integers(1, 3)), int(rng.integers(1, 4)))
        sol = solve_regulation(ag, S)
        scale = max(1.0, *(np.abs(M).max() for M in (ag.A, ag.B, ag.C, ag.E, ag.G, S) if M.size))
        assert sol.residual_dyn <= 1e-10 * scale and sol.residual_out <= 1e-10 * scale
        assert np.allclose(sol.Pi, Pi, atol=1e-6 * scale) or sol.ok


def test_pbh_cases():
    assert pbh_stabilizable(np.zeros((2, 2)), np.zeros((2, 1))).ok
    assert not pbh_stabilizable(np.eye(1), np.zeros((1, 1))).ok
    assert pbh_detectable(np.zeros((1, 2)), np.zeros((2, 2))).ok
    assert not pbh_detectable(np.zeros((1, 1)), np.eye(1)).ok
    At = np.block([[A0, B0 @ GAMMA_HAND], [np.zeros((2, 3)), S0]])
    assert pbh_detectable(np.hstack([C0, np.zeros((1, 2))]), At).ok


def test_hom_cascade_stabilizable():
    from syncnet.control_math import RegulationSolution
    reg = RegulationSolution(PI_HAND, GAMMA_HAND, 0.0, 0.0)
    cas = build_cascade(HOM, S0, reg, np.array([[-0.5], [0.5]]), np.zeros((1, 1)), allow_marginal_zeros=True)
    assert cas.stabilizable.ok and cas.detectable.ok


def test_transform_check_cases(rng):
    A = rng.standard_normal((3, 3))
    C = rng.standard_normal((1, 3))
    Z = np.zeros
    got = detectability_transform_check(A, Z((3, 2)), S0, C, Z((1, 2)), Z((3, 2)), B0, Z((1, 2)))
    assert got == pbh_detectable(np.hstack([C, Z((1, 2))]), np.block([[A, Z((3, 2))], [Z((2, 3)), S0]])).ok
    assert detectability_transform_check(A0, E0, S0, C0, G0, PI_HAND, B0, GAMMA_HAND)
    with pytest.raises(TransformMismatch):
        detectability_transform_check(A0, E0, S0, C0, G0, PI_HAND + 0.1, B0, GAMMA_HAND)


def test_transform_check_group1_measurement():
    A = np.array([[0.0, 0], [0, -1]])
    Bq = np.array([[1.0], [-1]])
    Pi = np.array([[-2.0, -2], [1, 2]])
    Gamma = np.array([[1.0, -2]])
    S = np.array([[0.0, 1], [-1, 0]])
    assert detectability_transform_check(A, np.eye(2), S, np.array([[1.0, 1]]), np.array([[1.0, 0]]), Pi, Bq, Gamma)
    assert detectability_transform_check(A, np.eye(2), S, np.eye(2), np.zeros((2, 2)), Pi, Bq, Gamma, measurement=True)


def test_transform_identity_random(rng):
    for _ in range(50):
        ag, S, Pi, Gamma = back_generated(rng, 3, 1, 2)
        detectability_transform_check(ag.A, ag.E, S, ag.C, ag.G, Pi, ag.B, Gamma)


def test_invariant_zero_cases():
    assert invariant_zero_free(np.eye(2), np.zeros((2, 2)), np.eye(2), [0.3, -0.7, 2.0])
    assert invariant_zero_free(C0, A0, B0, [1j, -1j])
    assert not invariant_zero_free(np.zeros((1, 1)), np.eye(1), np.eye(1), [1.0])


def test_markov_and_infinite_zero_order():
    mk = markov_parameters(C0, A0, B0, 3)
    assert [float(np.squeeze(m)) for m in mk] == [0.0, 0.0, 1.0]
    assert infinite_zero_order(C0, A0, B0) == 3


def test_gain_synthesis_cases():
    g = synthesize_gains(np.zeros((2, 2)), np.eye(2), np.eye(2))
    assert is_schur(np.zeros((2, 2)) - np.eye(2) @ g.K)
    Ah, Bh, Ch = A0, np.array([[0.0], [0], [1]]), C0
    g = synthesize_gains(Ah, Bh, Ch)
    assert is_schur(Ah - Bh @ g.K) and is_schur(Ah - g.H @ Ch)
    K, H = np.array([[0.1, 1, 2]]), np.array([[2.0], [1], [0.5]])
    assert is_schur(Ah - Bh @ K) and is_schur(Ah - H @ Ch)


def test_printed_hom_gains_schur_on_printed_cascade():
    from syncnet.control_math import RegulationSolution
    reg = RegulationSolution(np.array([[-1.0, -1], [1, 0], [0, 0]]), np.array([[-1.0, -1]]), 1.0, 0.0)
    cas = build_cascade(HOM, S0, reg, np.array([[0.0], [1]]), np.zeros((1, 1)), allow_marginal_zeros=True)
    K = np.array([[-0.1, -1, -2, 0.1, 2]])
    H = np.array([[2.0], [1], [0.5], [-0.5], [0]])
    assert is_schur(cas.A_tilde - cas.B_tilde @ K) and is_schur(cas.A_tilde - H @ cas.C_tilde)


def test_precompensator_cases():
    # Gamma = 0, B_p = 0: transfer is I, but the internal-model modes are hidden, so they count as zeros
    pc = check_precompensator(np.zeros((1, 2)), S0, np.zeros((2, 1)), np.eye(1))
    assert not pc.ok and np.allclose(np.sort(np.abs(pc.zeros)), [1.0, 1.0])
    pc = check_precompensator(np.zeros((1, 0)), np.zeros((0, 0)), np.zeros((0, 1)), np.eye(1))
    assert pc.ok


def test_precompensator_printed_hom_zero_at_minus_one(rng):
    Gamma, Bp, Dp = np.array([[-1.0, -1]]), np.array([[0.0], [1]]), np.zeros((1, 1))
    for z in rng.standard_normal(5) + 1j * rng.standard_normal(5):
        tf = (Gamma @ np.linalg.solve(z * np.eye(2) - S0, Bp) + Dp).item()
        assert tf == pytest.approx(-(1 + z) / (z ** 2 + 1))
    pc = check_precompensator(Gamma, S0, Bp, Dp)
    assert not pc.ok
    assert np.allclose(np.sort_complex(pc.zeros), [-1.0])
    assert check_precompensator(Gamma, S0, Bp, Dp, allow_marginal_zeros=True).ok


def test_precompensator_group2_zero_at_origin():
    pc = check_precompensator(np.array([[-2.0]]), np.array([[1.0]]), np.array([[-1.0]]), np.array([[2.0]]))
    assert pc.ok and np.allclose(pc.zeros, [0.0], atol=1e-12)


def test_minimum_phase_search():
    Bp, Dp = minimum_phase_precompensator(GAMMA_HAND, S0)
    assert check_precompensator(GAMMA_HAND, S0, Bp, Dp).ok


def test_assumption_reports():
    rep = check_assumptions("A1", agent=HOM, S=S0)
    assert rep.all_pass and sorted(rep.flags) == [f"A1.{i}" for i in range(1, 7)]
    rep = check_assumptions("A2", A_r=A0, C_r=C0)
    assert rep.all_pass
    bad = LtiAgent(np.array([[2.0]]), np.array([[1.0]]), np.array([[1.0]]), np.zeros((1, 1)), np.zeros((1, 1)))
    assert "A1.1" in check_assumptions("A1", agent=bad, S=np.array([[1.0]])).failed()


def test_invariant_zeros_group2_cascade():
    z = invariant_zeros(np.array([[-2.0]]), np.array([[1.0]]), np.array([[-1.0]]), np.array([[2.0]]))
    assert np.allclose(z, [0.0], atol=1e-12)
