import numpy as np
import pytest

from conftest import loaded, scenario_for
from syncnet.control_math import GainPair, LtiAgent, RegulationSolution, clustered_spectral_radius, spectral_radius
from syncnet.graph_topology import DirectedGraph, row_stochastic
from syncnet.homogeneous import build_cascade, build_hom_protocol, disagreement_matrix, disagreement_spectrum
from syncnet.simulation import closed_loop_matrix, fit_decay, run
from test_control_math import A0, B0, C0, E0, G0, GAMMA_HAND, HOM, PI_HAND, S0


def test_decoupled_cascade():
    ag = LtiAgent(A0, B0, C0, np.zeros((3, 2)), np.zeros((1, 2)))
    reg = RegulationSolution(np.zeros((3, 2)), np.zeros((1, 2)), 0.0, 0.0)
    cas = build_cascade(ag, S0, reg, np.zeros((2, 1)), np.eye(1), check=False)
    assert np.array_equal(cas.A_tilde, np.block([[A0, np.zeros((3, 2))], [np.zeros((2, 3)), S0]]))
    assert np.array_equal(cas.B_tilde, np.vstack([B0, np.zeros((2, 1))]))


def test_solver_cascade_blocks_and_pi_tilde():
    spec, built = loaded("homogeneous_case1")
    cas = built["cascade"]
    assert np.array_equal(cas.A_tilde[:3, :3], A0)
    assert np.array_equal(cas.A_tilde[:3, 3:], [[0, 0], [0, 0], [0, -2]])
    assert np.array_equal(cas.C_tilde, [[1, 0, 0, 0, 0]])
    assert cas.pi_tilde_source == "stacked"
    assert np.max(np.abs(cas.Pi_tilde @ S0 - cas.A_tilde @ cas.Pi_tilde - cas.E_tilde)) < 1e-12
    assert np.max(np.abs(cas.C_tilde @ cas.Pi_tilde + G0)) < 1e-12


def test_printed_gamma_uses_cascade_level_pi():
    spec, built = loaded("homogeneous_case1", "printed")
    cas = built["cascade"]
    assert built["regulation"].residual_dyn == pytest.approx(1.0)
    assert cas.pi_tilde_source == "cascade" and cas.pi_tilde_residual < 1e-12
    # printed Gamma is the solver Gamma in p-coordinates rotated by I + S
    assert np.allclose(built["regulation"].Gamma @ (np.eye(2) + S0), GAMMA_HAND)


def test_gains_off_structure():
    spec, built = loaded("homogeneous_case1")
    cas = built["cascade"]
    r = build_hom_protocol(cas, GainPair(np.zeros((1, 5)), np.zeros((5, 1))), check_gains=False)
    sl = r.slices()
    assert np.array_equal(r.A[sl["p"], sl["p"]], S0)
    assert np.array_equal(r.A[sl["x_hat"], sl["x_hat"]], cas.A_tilde)
    assert np.array_equal(r.A[sl["chi"], sl["chi"]], cas.A_tilde)
    assert np.array_equal(r.C_u, np.hstack([cas.Gamma, np.zeros((1, 10))]))
    assert r.n_states == 2 + 2 * 5


def test_printed_protocol_entries():
    spec, built = loaded("homogeneous_case1", "printed")
    r = built["realization"]
    sl = r.slices()
    K = np.array([-0.1, -1, -2, 0.1, 2])
    assert np.array_equal(r.A[sl["p"], sl["chi"]], -np.vstack([np.zeros(5), K]))
    xhat = [[-1, 1, 0, 0, 0], [-1, 1, 1, 0, 0], [-0.5, 0, 1, -1, -1], [0.5, 0, 0, 0, 1], [0, 0, 0, -1, 0]]
    assert np.allclose(r.A[sl["x_hat"], sl["x_hat"]], xhat)
    assert np.allclose(r.B_zeta[sl["x_hat"]].ravel(), [2, 1, 0.5, -0.5, 0])
    assert np.allclose(r.B_zhat[sl["x_hat"]], -np.vstack([np.zeros((4, 5)), K]))
    At = [[1, 1, 0, 0, 0], [0, 1, 1, 0, 0], [0, 0, 1, -1, -1], [0, 0, 0, 0, 1], [0, 0, 0, -1, 0]]
    assert np.allclose(r.A[sl["chi"], sl["x_hat"]], At)
    assert np.allclose(r.B_zhat[sl["chi"]], -np.array(At))
    chi = r.A[sl["chi"], sl["chi"]]
    assert np.allclose(chi[:4], np.array(At)[:4])
    assert np.allclose(chi[4], [0.1, 1, 2, -1.1, -2])
    assert np.allclose(r.C_u, [[-1, -1] + [0] * 10])


def test_disagreement_single_agent():
    spec, built = loaded("homogeneous_case1")
    cas, g = built["cascade"], built["gains"]
    ds = disagreement_spectrum(cas, g, np.zeros((0, 0)))
    rf = spectral_radius(cas.A_tilde - cas.B_tilde @ g.K)
    ro = spectral_radius(cas.A_tilde - g.H @ cas.C_tilde)
    assert ds.radius == pytest.approx(max(rf, ro), abs=1e-6)


def test_disagreement_case1_and_kronecker_identity():
    spec, built = loaded("homogeneous_case1")
    cas, g = built["cascade"], built["gains"]
    Dbar = row_stochastic(spec.graph.build()).reduced
    ds = disagreement_spectrum(cas, g, Dbar)
    assert ds.radius < 1
    kron = clustered_spectral_radius(np.kron(Dbar, cas.A_tilde))
    assert kron == pytest.approx(spectral_radius(Dbar) * clustered_spectral_radius(cas.A_tilde), abs=1e-6)
    assert disagreement_matrix(cas, g, Dbar).shape == (3 * 5 * 5,) * 2


def test_disturbance_cancellation_in_cascade_coordinates(rng):
    spec, built = loaded("homogeneous_case1")
    cas = built["cascade"]
    xbar0 = rng.standard_normal(5)
    vs = rng.standard_normal((40, 1))
    traj = []
    for w0 in (rng.standard_normal(2), rng.standard_normal(2)):
        w, x = w0.copy(), xbar0 + cas.Pi_tilde @ w0
        out = []
        for v in vs:
            out.append(x - cas.Pi_tilde @ w)
            x = cas.A_tilde @ x + cas.B_tilde @ v + cas.E_tilde @ w
            w = S0 @ w
        traj.append(np.array(out))
    assert np.max(np.abs(traj[0] - traj[1])) < 1e-9


def test_protocol_is_graph_independent():
    a = scenario_for("homogeneous_case1")
    b = scenario_for("homogeneous_case2")
    assert a.groups[0].realization.to_bytes() == b.groups[0].realization.to_bytes()
    spec, built = loaded("homogeneous_case1")
    again = build_hom_protocol(built["cascade"], built["gains"])
    assert again.to_bytes() == built["realization"].to_bytes()


def test_closed_loop_eigenvalues_are_disagreement_plus_consensus():
    spec, built = loaded("homogeneous_case1")
    adj = np.array([[0, 0, 1.0], [1, 0, 0], [0, 1, 0]])
    from syncnet.scenario import make_scenario
    sc = make_scenario(spec, built, graph=DirectedGraph(adj))
    one = make_scenario(spec, built, graph=DirectedGraph(np.zeros((1, 1))))
    full = np.linalg.eigvals(closed_loop_matrix(sc).matrix)
    cons = np.linalg.eigvals(closed_loop_matrix(one).matrix)
    dis = np.linalg.eigvals(disagreement_matrix(built["cascade"], built["gains"], row_stochastic(sc.graph).reduced))
    union = np.concatenate([cons, dis])
    assert union.size == full.size
    for lam in union:
        assert np.min(np.abs(full - lam)) < 1e-3
    for lam in full:
        assert np.min(np.abs(union - lam)) < 1e-3


def test_output_sync_decays_at_predicted_rate():
    spec, built = loaded("homogeneous_case1")
    sc = scenario_for("homogeneous_case1")
    log = run(sc)
    Dbar = row_stochastic(sc.graph).reduced
    radius = disagreement_spectrum(built["cascade"], built["gains"], Dbar).radius
    fit = fit_decay(log, window=100)
    assert fit.ratio <= radius + 0.05
    assert np.max(log.state_sync[-20:]) < 1e-3 * np.max(log.state_sync[:5])
