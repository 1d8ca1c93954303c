"""``syncnet`` command line: ``check``, ``run`` and ``sweep`` on JSON scenarios."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AssumptionFailure, NumericOverflow, ParseError, SyncNetError
from .scenario import (
    build_het_groups,
    build_hom,
    fixture_path,
    graph_conditions,
    load_scenario,
    make_scenario,
    spectra,
)
from .simulation import fit_decay, run, write_csv

EXIT_OK, EXIT_OTHER, EXIT_ASSUMPTION, EXIT_OVERFLOW = 0, 1, 2, 3


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        if np.isfinite(f):
            return f
        return repr(np.longdouble(v)) if np.isfinite(np.longdouble(v)) else str(f)
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def resolve_path(arg) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    return fixture_path(arg)


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("SYNCNET_THREADS", os.cpu_count() or 1)))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# report


def build(spec, force=False):
    return build_hom(spec, check=not force) if spec.mode == "homogeneous" else build_het_groups(spec, check=not force)


def assumption_section(spec, built):
    if spec.mode == "homogeneous":
        reg = built["regulation"]
        cas = built["cascade"]
        out = {
            "A1": built["assumptions"].to_dict(),
            "regulation": {"source": built["regulation_source"], "Pi": reg.Pi, "Gamma": reg.Gamma,
                           "residual_dynamic": reg.residual_dyn, "residual_output": reg.residual_out},
            "cascade": {"stabilizable": cas.stabilizable.ok, "detectable": cas.detectable.ok,
                        "pi_tilde_source": cas.pi_tilde_source, "pi_tilde_residual": cas.pi_tilde_residual,
                        "precompensator_zeros": [[z.real, z.imag] for z in np.atleast_1d(cas.precompensator_zeros)]},
            "gain_source": built["gains"].source,
        }
        if built["solver"] is not None and built["regulation_source"] != "solver":
            s = built["solver"]
            out["regulation"]["solver"] = {"Pi": s.Pi, "Gamma": s.Gamma}
        return out
    groups = {}
    for name, g in built["groups"].items():
        reg = g["cascade"].regulation
        groups[name] = {
            "A3": g["assumptions"].to_dict(),
            "regulation": {"Pi": reg.Pi, "Gamma": reg.Gamma,
                           "residual_dynamic": reg.residual_dyn, "residual_output": reg.residual_out},
            "cascade_checks": g["cascade"].checks,
            "relative_degree": g["cascade"].uniform_rank,
            "homogenization": g["homogenization"].to_dict(),
            "protocol_fingerprint": g["realization"].fingerprint(),
        }
    t = built["target"]
    return {"A2": built["assumptions"].to_dict(), "n_q": t.n_q, "order_bound": built["order_bound"],
            "target": {"A_h": t.A_h, "B_h": t.B_h, "C_h": t.C_h}, "groups": groups}


def all_checks_pass(spec, built, graph) -> tuple:
    """Return ``(ok, reason)`` over every recorded pass/fail flag."""
    conds = graph_conditions(spec, graph)
    for k, ok in conds.items():
        if not ok:
            return False, k
    if spec.mode == "homogeneous":
        if not built["assumptions"].all_pass:
            return False, built["assumptions"].failed()[0]
        if not built["regulation"].ok and built["cascade"].pi_tilde_residual > 1e-8:
            return False, "regulation"
        return True, ""
    if not built["assumptions"].all_pass:
        return False, built["assumptions"].failed()[0]
    for name, g in built["groups"].items():
        if not g["assumptions"].all_pass:
            return False, f"group {name}: {g['assumptions'].failed()[0]}"
        if not all(g["cascade"].checks.values()):
            return False, f"group {name}: cascade"
        if not g["homogenization"].passed:
            return False, f"group {name}: homogenization"
    sp = spectra(spec, built, graph)
    if sp["radius"] >= 1.0:
        return False, "spectrum"
    return True, ""


def protocol_fingerprints(built):
    if "realization" in built:
        return {"agents": built["realization"].fingerprint()}
    return {n: g["realization"].fingerprint() for n, g in built["groups"].items()}


def base_report(spec, built, graph, variant=None):
    return {
        "tool": "syncnet", "version": __version__, "scenario": spec.name, "mode": spec.mode,
        "variant": variant, "n_agents": graph.n_agents,
        "graph": graph_conditions(spec, graph),
        "assumptions": assumption_section(spec, built),
        "spectra": spectra(spec, built, graph),
        "protocol": protocol_fingerprints(built),
    }


def run_report(spec, built, sc, log, wall):
    tol = float(spec.outputs.get("tolerance", 1e-6))
    window = max(2, min(50, log.horizon // 4 + 1))
    fit = fit_decay(log, window)
    metric = log.relative_error if spec.mode == "heterogeneous" else log.sync_error
    final = metric[-1]
    return {
        "seed": sc.seed, "horizon": sc.horizon, "dtype": sc.dtype, "tolerance": tol,
        "final_sync_error": log.sync_error[-1], "final_relative_error": log.relative_error[-1],
        "criterion_metric": "relative_error" if spec.mode == "heterogeneous" else "sync_error",
        "converged": bool(final < tol),
        "decay_fit": {"ratio": fit.ratio, "degenerate": fit.degenerate, "window": fit.window},
        "wall_time_s": wall,
    }


def plot_outputs(log, path, title=""):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "syncnet"
    K, N, p = log.y.shape
    k = np.arange(K)
    fig, axes = plt.subplots(p + 1, 1, figsize=(8, 2.6 * (p + 1)), sharex=True, squeeze=False)
    with np.errstate(over="ignore", invalid="ignore"):
        y = np.asarray(log.y, dtype=np.float64)
        err = np.asarray(log.sync_error, dtype=np.float64)
        rel = np.asarray(log.relative_error, dtype=np.float64)
    for c in range(p):
        ax = axes[c, 0]
        for i in range(N):
            ax.plot(k, y[:, i, c], lw=0.8)
        if log.y_r is not None:
            ax.plot(k, np.asarray(log.y_r[:, c], dtype=np.float64), "k--", lw=1.2, label="y_r")
            ax.legend(loc="upper right", fontsize=8)
        ax.set_ylabel(f"y_{c + 1}")
    ax = axes[p, 0]
    ax.semilogy(k, np.maximum(err, 1e-300), lw=1.0, label="sync error")
    ax.semilogy(k, np.maximum(rel, 1e-300), lw=1.0, label="relative error")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_xlabel("k")
    if title:
        axes[0, 0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=1, sort_keys=False) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_check(args) -> int:
    spec = load_scenario(resolve_path(args.scenario), variant=args.variant)
    try:
        built = build(spec)
    except AssumptionFailure as exc:
        print(json.dumps({"scenario": spec.name, "passed": False, "failed": exc.test, "detail": str(exc)}, indent=1))
        return EXIT_ASSUMPTION
    graph = spec.graph.build()
    ok, reason = all_checks_pass(spec, built, graph)
    rep = base_report(spec, built, graph, args.variant)
    rep.update({"passed": ok, "failed": reason or None})
    print(json.dumps(_jsonable(rep), indent=1))
    return EXIT_OK if ok else EXIT_ASSUMPTION


def cmd_run(args) -> int:
    spec = load_scenario(resolve_path(args.scenario), variant=args.variant)
    out = Path(args.out or Path("out") / spec.name)
    t0 = time.perf_counter()
    try:
        built = build(spec, force=args.force)
    except AssumptionFailure as exc:
        print(f"assumption failure ({exc.test}): {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    graph = spec.graph.build()
    ok, reason = all_checks_pass(spec, built, graph)
    if not ok and not args.force:
        print(f"assumption failure: {reason} (use --force to simulate anyway)", file=sys.stderr)
        return EXIT_ASSUMPTION
    sc = make_scenario(spec, built, seed=args.seed, horizon=args.horizon, graph=graph)
    rep = base_report(spec, built, graph, args.variant)
    out.mkdir(parents=True, exist_ok=True)
    try:
        log = run(sc)
    except NumericOverflow as exc:
        rep.update({"seed": sc.seed, "horizon": sc.horizon, "overflow_step": exc.step, "error": str(exc)})
        write_json(out / "report.json", rep)
        print(f"numeric overflow at step {exc.step}", file=sys.stderr)
        return EXIT_OVERFLOW
    wall = time.perf_counter() - t0
    rep.update(run_report(spec, built, sc, log, wall))
    with open(out / "trajectory.csv", "w", newline="") as fh:
        write_csv(log, fh)
    plot_outputs(log, out / "outputs.svg", spec.name)
    write_json(out / "report.json", rep)
    print(f"{spec.name}: final {rep['criterion_metric']} {float(log.relative_error[-1] if spec.mode == 'heterogeneous' else log.sync_error[-1]):.3e}"
          f" (tolerance {rep['tolerance']:g}) -> {out}")
    return EXIT_OK


def _sweep_one(spec, built, n, horizon, seed):
    graph = spec.graph.build(n)
    ok, reason = all_checks_pass(spec, built, graph)
    if not ok:
        return {"n_agents": n, "status": "refused", "reason": reason}
    sc = make_scenario(spec, built, graph=graph, horizon=horizon, seed=seed)
    fps = sorted({g.realization.fingerprint() for g in sc.groups})
    t0 = time.perf_counter()
    try:
        log = run(sc)
    except NumericOverflow as exc:
        return {"n_agents": n, "status": "overflow", "step": exc.step, "fingerprints": fps}
    rep = run_report(spec, built, sc, log, time.perf_counter() - t0)
    rep.update({"n_agents": n, "status": "ok", "fingerprints": fps, "spectra": spectra(spec, built, graph)})
    return rep


def cmd_sweep(args) -> int:
    spec = load_scenario(resolve_path(args.scenario), variant=args.variant)
    if spec.graph.family is None:
        print("sweep needs a scenario whose graph section declares a family", file=sys.stderr)
        return EXIT_OTHER
    sizes = [int(s) for s in args.agents.split(",") if s.strip()]
    try:
        built = build(spec, force=args.force)
    except AssumptionFailure as exc:
        print(f"assumption failure ({exc.test}): {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    reference = protocol_fingerprints(built)
    with ThreadPoolExecutor(max_workers=min(thread_cap(), len(sizes) or 1)) as pool:
        results = list(pool.map(lambda n: _sweep_one(spec, built, n, args.horizon, args.seed), sizes))
    expected = sorted(set(reference.values()))
    identical = all(set(r.get("fingerprints", expected)) <= set(expected) for r in results)
    rep = {"tool": "syncnet", "version": __version__, "scenario": spec.name, "sizes": sizes,
           "protocol": reference, "protocol_identical": identical, "runs": results}
    out = Path(args.out or Path("out") / f"{spec.name}_sweep")
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "sweep.json", rep)
    for r in results:
        if r["status"] == "ok":
            print(f"N={r['n_agents']}: final {r['criterion_metric']} {float(r['final_relative_error'] if spec.mode == 'heterogeneous' else r['final_sync_error']):.3e}"
                  f" converged={r['converged']} ratio={r['decay_fit']['ratio']:.5f}")
        else:
            print(f"N={r['n_agents']}: {r['status']} {r.get('reason', '')}")
    if not identical:
        print("protocol bytes differ across sizes", file=sys.stderr)
        return EXIT_OTHER
    if any(r["status"] == "refused" for r in results):
        return EXIT_ASSUMPTION
    if any(r["status"] == "overflow" for r in results):
        return EXIT_OVERFLOW
    return EXIT_OK


def parser():
    ap = argparse.ArgumentParser(prog="syncnet", description=__doc__)
    ap.add_argument("--version", action="version", version=f"syncnet {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    c = sub.add_parser("check", help="assumption and spectrum report, no simulation")
    c.add_argument("scenario", help="scenario file or bundled fixture name")
    c.add_argument("--variant")
    c.set_defaults(func=cmd_check)
    r = sub.add_parser("run", help="simulate and write trajectory.csv, report.json, outputs.svg")
    r.add_argument("scenario")
    r.add_argument("--horizon", type=int)
    r.add_argument("--out")
    r.add_argument("--force", action="store_true", help="simulate even if checks fail")
    r.add_argument("--seed", type=int)
    r.add_argument("--variant")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="one protocol, several network sizes")
    s.add_argument("scenario")
    s.add_argument("--agents", required=True, help="comma-separated sizes")
    s.add_argument("--horizon", type=int)
    s.add_argument("--out")
    s.add_argument("--force", action="store_true")
    s.add_argument("--seed", type=int)
    s.add_argument("--variant")
    s.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_OTHER
    except AssumptionFailure as exc:
        print(f"assumption failure ({exc.test}): {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except NumericOverflow as exc:
        print(f"numeric overflow at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except (SyncNetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
