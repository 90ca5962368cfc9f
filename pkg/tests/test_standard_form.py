import numpy as np
import pytest
import scipy.sparse as sp

from tcsdp.backend import SolverSettings
from tcsdp.blocks import BlockLayout, PsdBlockSpec, TraceGroup
from tcsdp.certify import dual_objective_value, duality_gap, kkt_certify
from tcsdp.errors import InvalidCertificate, InvalidObjective
from tcsdp.linexpr import LinExpr, eq, ge
from tcsdp.problem import assemble_problem, objective_from_residuals
from tcsdp.standard_form import factor_objective, solve_relaxation, to_standard_form


def small_problem(seed=0, n_eq=1, with_box=False):
    """One 3x3 block with unit trace, random homogeneous residual objective."""
    rng = np.random.default_rng(seed)
    blocks = [PsdBlockSpec("y", 3, "g")]
    groups = [TraceGroup("g", 1.0, ("y",))]
    layout = BlockLayout(blocks, [])
    residuals = []
    for _ in range(4):
        expr = LinExpr()
        for i in range(3):
            for j in range(i, 3):
                expr.add_entry("y", i, j, rng.normal())
        residuals.append(expr)
    Q, c, G = objective_from_residuals(residuals, layout)
    eqs = []
    for k in range(n_eq):
        expr = LinExpr.entry("y", 0, k % 2 + 1, 1.0)
        eqs.append(eq(expr, 0.05 * (k + 1), label=f"user{k}"))
    ineqs = [ge(LinExpr.entry("y", 0, 0), 0.05, label="floor")] if with_box else []
    return assemble_problem(blocks, Q, c, eqs, groups, ineqs, gram_factor=G)


def test_factor_objective_identity_and_zero():
    L = factor_objective(np.eye(3))
    assert np.allclose(L.T @ L, np.eye(3), atol=1e-12)
    L0 = factor_objective(np.zeros((4, 4)))
    assert L0.shape[0] == 0


def test_factor_objective_random_gram():
    rng = np.random.default_rng(1)
    B = rng.normal(size=(3, 6))
    Q = B.T @ B
    L = factor_objective(Q)
    assert L.shape[0] == 3  # numerical rank
    assert np.linalg.norm(L.T @ L - Q) <= 1e-9 * np.linalg.norm(Q)
    # the gram shortcut gives the same product
    L2 = factor_objective(sp.csr_matrix(Q), gram_factor=B)
    assert np.linalg.norm(L2.T @ L2 - Q) <= 1e-9 * np.linalg.norm(Q)


def test_factor_objective_rejects_indefinite():
    with pytest.raises(InvalidObjective):
        factor_objective(np.diag([1.0, -1.0]))


def test_zero_objective_standard_form():
    blocks = [PsdBlockSpec("y", 3, "g")]
    groups = [TraceGroup("g", 1.0, ("y",))]
    layout = BlockLayout(blocks, [])
    p = assemble_problem(blocks, sp.csr_matrix((9, 9)), np.zeros(9), [], groups)
    sf = to_standard_form(p)
    assert sf.epigraph_dim == 1  # LMI degenerates to t >= 0
    sol = solve_relaxation(sf)
    assert sol.status == "optimal"
    assert abs(sol.t) <= 1e-7
    assert abs(sol.objective) <= 1e-7


def test_value_preservation():
    for seed in range(4):
        p = small_problem(seed=seed, n_eq=min(seed, 2))
        sf = to_standard_form(p)
        sol = solve_relaxation(sf)
        assert sol.status == "optimal"
        direct = p.cost_of(sol.blocks)
        assert abs(sol.objective - direct) <= 1e-6 * (1.0 + abs(direct))
        # the trace constraint holds on the returned block
        assert abs(np.trace(sol.blocks["y"]) - 1.0) <= 1e-6


def test_schur_equality_case():
    # for any feasible y and t = y'Qy the LMI is PSD with zero minimum eigenvalue
    p = small_problem(seed=3)
    sf = to_standard_form(p)
    rng = np.random.default_rng(5)
    A = rng.normal(size=(3, 3))
    Y = A @ A.T
    Y *= 1.0 / np.trace(Y)
    y = p.layout.vec({"y": Y})
    t = p.cost(y)
    lmi = sf.lmi_value(y, t)
    vals = np.linalg.eigvalsh(lmi)
    assert vals.min() >= -1e-9
    assert abs(vals.min()) <= 1e-7


def test_dual_objective_value_basics():
    r = 4
    assert dual_objective_value(np.zeros(2), np.eye(r + 1), np.ones(2)) == pytest.approx(-r)
    rho = np.array([2.5, 0.0])
    b = np.array([2.0, 1.0])
    Z = np.eye(2)
    Z[1, 1] = 0.0  # trace 1
    assert dual_objective_value(rho, Z, b) == pytest.approx(5.0)
    bad = np.eye(3) * 2.0
    with pytest.raises(InvalidCertificate):
        dual_objective_value(np.zeros(1), bad, np.zeros(1))


def test_duality_gap_and_weak_duality():
    assert duality_gap(1.0, 1.0) == 0.0
    for seed in range(5):
        p = small_problem(seed=seed, n_eq=1, with_box=(seed % 2 == 0))
        sf = to_standard_form(p)
        sol = solve_relaxation(sf)
        d = sol.certificate.dual_value()
        f = sol.cost
        assert f >= d - 1e-6 * (1.0 + abs(f))
        assert abs(f - d) <= 1e-5 * (1.0 + abs(f))  # strong duality at the optimum


def test_kkt_certify_at_optimum():
    p = small_problem(seed=7, n_eq=2, with_box=True)
    sf = to_standard_form(p)
    sol = solve_relaxation(sf, settings=SolverSettings(feas_tol=1e-9, gap_tol=1e-9))
    t = p.cost_of(sol.blocks)
    report = kkt_certify((sol.blocks, sol.frees, t), sol.certificate, sf, tol=1e-5)
    assert report.certified, report.residuals
    assert report.residuals["stationarity"] <= 1e-6


def test_kkt_rejects_suboptimal_point():
    p = small_problem(seed=8, n_eq=0)
    sf = to_standard_form(p)
    sol = solve_relaxation(sf)
    # a different feasible point: identity-scaled (satisfies the trace row)
    other = {"y": np.eye(3) / 3.0}
    t = p.cost_of(other)
    if abs(t - sol.cost) < 1e-6:  # pathological draw; nudge assertion off
        pytest.skip("random objective happened to be minimized at I/3")
    report = kkt_certify((other, {}, t), sol.certificate, sf, tol=1e-6)
    assert not report.certified
    assert report.reason in ("complementarity_lmi", "complementarity_blocks", "gap_scaled")


def test_kkt_rejects_infeasible_dual():
    p = small_problem(seed=9)
    sf = to_standard_form(p)
    sol = solve_relaxation(sf)
    cert = sol.certificate
    cert.S = {k: v.copy() for k, v in cert.S.items()}
    cert.S["y"] = cert.S["y"] - np.diag([1.0, 0.0, 0.0])
    t = p.cost_of(sol.blocks)
    report = kkt_certify((sol.blocks, sol.frees, t), cert, sf, tol=1e-6)
    assert not report.certified
    assert report.residuals["dual_feasibility"] >= 0.9
