"""Reference optima for small graphical lasso problems.

Solves  min -log det T + <T, S> + lam * sum_{i != j} |T_ij|  with an interior
point conic solver and writes the instances and optimal objective values to
tests/data/glasso_oracle.json. Rerun only when the instance set changes.
"""

import json
import pathlib

import cvxpy as cp
import numpy as np


def solve(s, lam):
    p = s.shape[0]
    t = cp.Variable((p, p), symmetric=True)
    off = cp.multiply(np.ones((p, p)) - np.eye(p), t)
    obj = -cp.log_det(t) + cp.trace(s @ t) + lam * cp.sum(cp.abs(off))
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10, max_iter=500)
    theta = t.value
    value = -np.linalg.slogdet(theta)[1] + np.trace(s @ theta) + lam * np.abs(theta - np.diag(np.diag(theta))).sum()
    return theta, float(value)


def dual_value(s, lam):
    # max log det W + p  s.t.  W_ii = S_ii, |W_ij - S_ij| <= lam
    p = s.shape[0]
    w = cp.Variable((p, p), symmetric=True)
    off = np.ones((p, p)) - np.eye(p)
    cons = [cp.diag(w) == np.diag(s), cp.abs(cp.multiply(off, w - s)) <= lam]
    cp.Problem(cp.Maximize(cp.log_det(w)), cons).solve(solver=cp.CLARABEL)
    return float(np.linalg.slogdet(w.value)[1] + p)


def main():
    rng = np.random.default_rng(20240611)
    cases = []
    for k in range(10):
        a = rng.standard_normal((4, 4))
        x = rng.standard_normal((30, 4)) @ a
        s = np.cov(x, rowvar=False)
        lam = float(0.05 * (k + 1) * np.mean(np.diag(s)))
        theta, value = solve(s, lam)
        dual = dual_value(s, lam)
        assert abs(value - dual) < 1e-7, (k, value, dual)
        cases.append(
            {"cov": s.tolist(), "lambda": lam, "objective": value, "dual_objective": dual, "precision": theta.tolist()}
        )
    out = pathlib.Path(__file__).resolve().parents[2] / "tests" / "data" / "glasso_oracle.json"
    out.write_text(json.dumps({"cases": cases}, indent=1) + "\n")


if __name__ == "__main__":
    main()
