"""Derive homogenizers for the bundled heterogeneous fixtures and print them as JSON.

Construction per group (single output, relative degree ``rho`` of the
internal-model cascade, target ``1/(z-1)^3``):

* observer ``x_hat+ = A~ x_hat + B~ v + L (z_bar - C~m x_hat)`` with ``L`` from
  pole placement at small distinct real poles;
* input-output linearizing feedback ``v = F x_hat + w`` placing the ``rho``
  input-output poles at ``1``;
* a chain of ``3 - rho`` integrators ``w = e1' xi_c``, ``xi_c+ = J xi_c + e_last u_check``.

Run from the repository root:  python3 tools/derive_homogenizers.py
"""

import json
import sys
from math import comb
from pathlib import Path

import numpy as np
from scipy.signal import place_poles

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from syncnet.heterogeneous import Homogenizer, check_homogenization  # noqa: E402
from syncnet.scenario import build_het_groups, load_scenario_dict  # noqa: E402


def derive(cascade, target, obs_poles):
    At, Bt, Ct, Cmt = cascade.A_tilde, cascade.B_tilde, cascade.C_tilde, cascade.Cm_tilde
    n = At.shape[0]
    rho = cascade.uniform_rank
    nq = target.n_q
    g = (Ct @ np.linalg.matrix_power(At, rho - 1) @ Bt).item()
    # (z - 1)^rho = sum_j a_j z^j
    coeffs = [(-1) ** (rho - j) * comb(rho, j) for j in range(rho + 1)]
    F = -sum(coeffs[j] * Ct @ np.linalg.matrix_power(At, j) for j in range(rho + 1)) / g
    L = place_poles(At.T, Cmt.T, obs_poles[:n], method="YT").gain_matrix.T
    nc = nq - rho
    if nc < 0:
        raise ValueError("cascade relative degree exceeds n_q")
    # chain of nc integrators from u_check to w, scaled by 1/g so that u_check -> y is 1/(z-1)^n_q
    J = np.eye(nc) + np.eye(nc, k=1)
    e1 = np.zeros((1, nc))
    elast = np.zeros((nc, 1))
    if nc:
        e1[0, 0] = 1.0 / g
        elast[-1, 0] = 1.0
    A4 = np.block([[At + Bt @ F - L @ Cmt, Bt @ e1], [np.zeros((nc, n)), J]])
    B4 = np.vstack([L, np.zeros((nc, Cmt.shape[0]))])
    E4 = np.vstack([np.zeros((n, 1)) if nc else Bt / g, elast])
    C4 = np.hstack([F, e1])
    D4 = np.zeros((1, 1)) if nc else np.array([[1.0 / g]])
    F4 = np.zeros((1, Cmt.shape[0]))
    return Homogenizer(A4, B4, E4, C4, D4, F4)


def main():
    fixture = Path(__file__).resolve().parents[1] / "src" / "syncnet" / "fixtures" / "heterogeneous_case1.json"
    data = json.loads(fixture.read_text())
    data["homogenizer"] = "printed"
    sc = load_scenario_dict(data, check=False)
    built = build_het_groups(sc, check=False)
    out = {}
    poles = np.array([0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4])
    for name, grp in built["groups"].items():
        h4 = derive(grp["cascade"], built["target"], poles)
        chk = check_homogenization(grp["cascade"], h4, built["target"])
        printed = check_homogenization(grp["cascade"], grp["step4"], built["target"])
        print(f"{name}: derived pass={chk.passed} ({chk.detail}); printed pass={printed.passed} ({printed.detail})",
              file=sys.stderr)
        out[name] = {k: getattr(h4, k).tolist() for k in ("A", "B", "E", "C", "D", "F")}
    json.dump(out, sys.stdout, indent=1)
    print()


if __name__ == "__main__":
    main()
