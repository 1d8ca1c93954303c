import io

import numpy as np
import pytest

from conftest import loaded, scenario_for
from syncnet.errors import NumericOverflow
from syncnet.graph_topology import DirectedGraph, row_stochastic
from syncnet.homogeneous import disagreement_spectrum
from syncnet.scenario import make_scenario
from syncnet.simulation import (
    TrajectoryLog,
    closed_loop_matrix,
    fit_decay,
    initial_state,
    read_csv_rows,
    rows_to_csv,
    run,
    state_vector,
    step,
    write_csv,
)


def zeroed(sc):
    sc.x0 = [np.zeros_like(v) for v in sc.x0]
    sc.omega0 = [np.zeros_like(v) for v in sc.omega0]
    if sc.reference is not None:
        sc.reference = type(sc.reference)(sc.reference.A_r, sc.reference.C_r, np.zeros(sc.reference.A_r.shape[0]))
    return sc


@pytest.mark.parametrize("name", ["homogeneous_case1", "heterogeneous_case1"])
def test_zero_state_is_equilibrium(name):
    sc = zeroed(scenario_for(name, horizon=20))
    log = run(sc)
    assert not np.any(log.y) and not np.any(log.sync_error)


def test_single_agent_is_decoupled_loop():
    spec, built = loaded("homogeneous_case1")
    sc = make_scenario(spec, built, graph=DirectedGraph(np.zeros((1, 1))))
    r = built["realization"]
    ag = spec.agent
    M = np.block([[ag.A, ag.B @ r.C_u], [np.zeros((r.n_states, 3)), r.A]])
    cl = closed_loop_matrix(sc)
    assert np.array_equal(cl.matrix, M)
    assert cl.radius == pytest.approx(np.max(np.abs(np.linalg.eigvals(M))))


def test_one_step_matches_full_matrix():
    sc = scenario_for("homogeneous_case1")
    cl = closed_loop_matrix(sc, exogenous=True)
    st = initial_state(sc)
    nxt = step(st, sc)
    x = state_vector(st, sc, exogenous=True)
    assert np.max(np.abs(cl.matrix @ x - state_vector(nxt, sc, exogenous=True))) < 1e-12


def test_probing_is_linear(rng):
    sc = scenario_for("homogeneous_case1")
    M = closed_loop_matrix(sc).matrix
    for _ in range(10):
        v = rng.standard_normal(M.shape[0])
        assert np.allclose(M @ (2 * v), 2 * (M @ v), rtol=0, atol=1e-12)


def test_error_radius_matches_disagreement_spectrum():
    spec, built = loaded("homogeneous_case1")
    sc = scenario_for("homogeneous_case1")
    cl = closed_loop_matrix(sc)
    ds = disagreement_spectrum(built["cascade"], built["gains"], row_stochastic(sc.graph).reduced)
    assert abs(cl.radius - ds.radius) < 1e-8


def test_horizon_zero_log():
    log = run(scenario_for("homogeneous_case1", horizon=0))
    assert log.horizon == 0 and log.y.shape[0] == 1


def test_fit_decay_cases():
    e = 3.0 * 0.8 ** np.arange(60)
    assert fit_decay(e, 30).ratio == pytest.approx(0.8, abs=1e-9)
    assert fit_decay(np.full(20, 2.0), 10).ratio == pytest.approx(1.0)
    z = np.r_[np.ones(5), np.zeros(5)]
    assert fit_decay(z, 8).degenerate and fit_decay(z, 8).ratio == 0.0


def test_oracle_consistency_fifty_steps():
    for name in ("homogeneous_case1", "heterogeneous_case1"):
        sc = scenario_for(name)
        M = closed_loop_matrix(sc, exogenous=True).matrix
        st = initial_state(sc)
        x = state_vector(st, sc, exogenous=True)
        for k in range(50):
            st = step(st, sc)
            x = M @ x
            got = state_vector(st, sc, exogenous=True)
            assert np.max(np.abs(got - x)) <= 1e-8 * max(1.0, np.max(np.abs(got)))


def test_superposition():
    base = scenario_for("homogeneous_case1", horizon=60)
    a = scenario_for("homogeneous_case1", horizon=60, seed=11)
    b = scenario_for("homogeneous_case1", horizon=60, seed=12)
    s = scenario_for("homogeneous_case1", horizon=60)
    s.x0 = [u + v for u, v in zip(a.x0, b.x0)]
    s.omega0 = [u + v for u, v in zip(a.omega0, b.omega0)]
    ya, yb, ys = run(a).y, run(b).y, run(s).y
    assert np.max(np.abs(ys - ya - yb)) <= 1e-8 * max(1.0, np.abs(ys).max())
    assert base.seed != a.seed


def test_overflow_reports_step():
    sc = scenario_for("homogeneous_case1", horizon=50)
    sc.overflow_limit = 1.0
    sc.__dict__.pop("_prepared_cache", None)
    with pytest.raises(NumericOverflow) as exc:
        run(sc)
    assert exc.value.step >= 1


def test_deterministic_runs():
    a, b = run(scenario_for("heterogeneous_case1")), run(scenario_for("heterogeneous_case1"))
    assert np.array_equal(a.y, b.y)


def test_csv_round_trip_is_byte_identical():
    log = run(scenario_for("heterogeneous_case1", horizon=30))
    buf = io.StringIO()
    write_csv(log, buf)
    text = buf.getvalue()
    header, rows = read_csv_rows(text)
    assert header[0] == "k" and header[-2:] == ["sync_error", "relative_error"] and "y_r_1" in header
    assert rows_to_csv(header, rows) == text
    assert len(rows) == 31


def test_csv_round_trip_beyond_double_range():
    y = np.array([[[np.longdouble("1e400")]], [[np.longdouble("-3.25e-4000")]]], dtype=np.longdouble)
    err = np.array([np.longdouble("2e4000"), 0.0], dtype=np.longdouble)
    log = TrajectoryLog(y, err, err / np.longdouble("1e10"))
    buf = io.StringIO()
    write_csv(log, buf)
    header, rows = read_csv_rows(buf.getvalue())
    assert rows_to_csv(header, rows) == buf.getvalue()
    assert rows[0][1] == np.longdouble("1e400")


def test_longdouble_run_matches_float64_early():
    a = scenario_for("heterogeneous_case2", horizon=20)
    b = scenario_for("heterogeneous_case2", horizon=20)
    b.dtype = "float64"
    la, lb = run(a), run(b)
    # agreement at the scale of the growing disturbance states, not of individual outputs
    scale = max(1.0, float(np.abs(lb.y).max()))
    assert np.max(np.abs(np.asarray(la.y, dtype=float) - lb.y)) <= 1e-9 * scale
