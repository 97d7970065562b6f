import itertools

import numpy as np
import pytest
from scipy.optimize import linprog
from hypothesis import given, settings, strategies as st

from hqcbenders.errors import DimensionMismatch
from hqcbenders.lp import (LinearProgram, LpStatus, RhsFamily, TOL_FEAS, check_certificate,
                           solve_lp)

ENGINES = ("simplex", "highs")


def vertex_enumeration_min(lp: LinearProgram):
    """Minimum over all basic feasible solutions of ``A x >= b, x >= 0``."""
    A, b, c = lp.constraint_matrix, lp.rhs, lp.objective
    m, n = A.shape
    # active set candidates: constraint rows and nonnegativity bounds
    G = np.vstack([A, np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    best = np.inf
    for rows in itertools.combinations(range(m + n), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-9:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x >= h - 1e-7):
            best = min(best, float(c @ x))
    return best


def random_feasible_lp(seed, m=6, n=8):
    rng = np.random.default_rng(seed)
    A = rng.integers(-3, 5, size=(m, n)).astype(float)
    x0 = rng.uniform(0, 3, size=n)
    b = A @ x0 - rng.uniform(0, 2, size=m)
    c = rng.uniform(0.5, 4, size=n)
    return LinearProgram(c, A, b, [">="] * m)


@pytest.mark.parametrize("engine", ENGINES)
def test_one_variable_lp(engine):
    out = solve_lp(LinearProgram([1.0], [[1.0]], [3.0], [">="]), engine)
    assert out.status is LpStatus.OPTIMAL
    assert out.primal[0] == pytest.approx(3.0)
    assert out.duals[0] == pytest.approx(1.0)
    assert out.objective_value == pytest.approx(3.0)


@pytest.mark.parametrize("engine", ENGINES)
def test_contradictory_bounds_give_ray(engine):
    lp = LinearProgram([0.0], [[1.0], [-1.0]], [1.0, 0.0], [">=", ">="])
    out = solve_lp(lp, engine)
    assert out.status is LpStatus.INFEASIBLE
    u = out.farkas_ray
    assert np.abs(u).max() == pytest.approx(1.0)
    assert u @ lp.rhs > 0
    assert u[0] + u[1] > 0


@pytest.mark.parametrize("seed", range(8))
def test_random_lp_matches_vertex_enumeration(seed):
    lp = random_feasible_lp(seed)
    ref = vertex_enumeration_min(lp)
    for engine in ENGINES:
        out = solve_lp(lp, engine)
        assert out.status is LpStatus.OPTIMAL
        assert out.objective_value == pytest.approx(ref, rel=1e-7, abs=1e-7)


def test_certificate_of_optimal_outcome_is_clean():
    lp = LinearProgram([1.0], [[1.0]], [3.0], [">="])
    rep = check_certificate(lp, solve_lp(lp, "simplex"))
    assert rep.primal_residual == 0 and rep.dual_residual == 0
    assert rep.complementarity_gap == 0
    assert rep.ok()


def test_certificate_reports_farkas_slack():
    lp = LinearProgram([0.0], [[1.0], [-1.0]], [1.0, 0.0], [">=", ">="])
    rep = check_certificate(lp, solve_lp(lp, "simplex"))
    assert rep.status is LpStatus.INFEASIBLE
    assert rep.farkas_slack > 0
    assert rep.ok()


def test_perturbed_duals_are_flagged():
    lp = random_feasible_lp(3)
    out = solve_lp(lp, "simplex")
    v = out.duals.copy()
    v[0] += 1.0
    bad = type(out)(out.status, out.primal, v, None, out.objective_value)
    rep = check_certificate(lp, bad)
    assert not rep.ok()
    assert max(rep.dual_residual, rep.complementarity_gap) >= 0.5


@pytest.mark.parametrize("engine", ENGINES)
@pytest.mark.parametrize("seed", range(20))
def test_strong_duality_and_certificates(engine, seed):
    rng = np.random.default_rng(100 + seed)
    m, n = 5, 6
    A = rng.normal(size=(m, n)).round(2)
    b = rng.normal(size=m).round(2)
    senses = rng.choice([">=", "<=", "="], size=m)
    lp = LinearProgram(rng.uniform(0.1, 2, size=n), A, b, list(senses))
    out = solve_lp(lp, engine)
    rep = check_certificate(lp, out)
    if out.status is LpStatus.OPTIMAL:
        assert rep.ok(1e-6)
        assert rep.duality_gap <= 1e-6 * max(1.0, abs(out.objective_value))
    elif out.status is LpStatus.INFEASIBLE:
        u = out.farkas_ray
        assert rep.dual_residual <= TOL_FEAS
        assert lp.rhs @ u >= 10 * TOL_FEAS


def test_simplex_and_highs_agree_on_status():
    for seed in range(30):
        rng = np.random.default_rng(seed)
        lp = LinearProgram(rng.uniform(0, 2, 4), rng.integers(-2, 3, (4, 4)),
                           rng.integers(-3, 4, 4), ["<=", ">=", ">=", "="])
        a, b = solve_lp(lp, "simplex"), solve_lp(lp, "highs")
        assert a.status is b.status
        if a.is_optimal:
            assert a.objective_value == pytest.approx(b.objective_value, abs=1e-7)


def test_simplex_is_deterministic():
    lp = random_feasible_lp(11)
    a, b = solve_lp(lp, "simplex"), solve_lp(lp, "simplex")
    assert np.array_equal(a.primal, b.primal) and np.array_equal(a.duals, b.duals)


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        LinearProgram([1.0, 2.0], [[1.0]], [1.0])
    with pytest.raises(DimensionMismatch):
        LinearProgram([1.0], [[1.0]], [1.0, 2.0])
    with pytest.raises(ValueError):
        LinearProgram([1.0], [[1.0]], [1.0], lower=[2.0], upper=[1.0])


def test_rhs_family_matches_cold_solves():
    rng = np.random.default_rng(7)
    q, n = 60, 50
    A = rng.normal(size=(q, n)) * (rng.random((q, n)) < 0.2)
    c = rng.uniform(0.1, 1, n)
    fam_hot = RhsFamily(c, A, [">="] * q, engine="highs")
    for k in range(15):
        b = rng.normal(size=q)
        hot = fam_hot.solve(b)
        cold = solve_lp(LinearProgram(c, A, b, [">="] * q), "highs")
        assert hot.status is cold.status
        lp = fam_hot.member(b)
        assert check_certificate(lp, hot).ok(1e-6)
        if hot.is_optimal:
            assert hot.objective_value == pytest.approx(cold.objective_value, rel=1e-7, abs=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_feasible_construction_always_optimal(seed):
    lp = random_feasible_lp(seed, m=4, n=5)
    out = solve_lp(lp, "simplex")
    assert out.status is LpStatus.OPTIMAL
    assert check_certificate(lp, out).ok(1e-6)


def _feasible(A, b, senses, bounded):
    """Feasibility of ``A x (sense) b`` with ``x_j >= 0`` only where ``bounded``."""
    A, b, senses = np.asarray(A, float), np.asarray(b, float), np.asarray(senses)
    bounds = [(0, None) if f else (None, None) for f in bounded]
    if A.shape[0] == 0:
        return True
    ge, le, eq = senses == ">=", senses == "<=", senses == "="
    A_ub = np.vstack([-A[ge], A[le]])
    b_ub = np.concatenate([-b[ge], b[le]])
    res = linprog(np.zeros(A.shape[1]), A_ub=A_ub if len(b_ub) else None,
                  b_ub=b_ub if len(b_ub) else None, A_eq=A[eq] if eq.any() else None,
                  b_eq=b[eq] if eq.any() else None, bounds=bounds, method="highs")
    return res.status == 0


def _rays(lp):
    fam = RhsFamily(lp.objective, lp.constraint_matrix, lp.row_senses, engine="highs")
    return {"simplex": solve_lp(lp, "simplex"), "highs": solve_lp(lp, "highs"),
            "family": fam.solve(lp.rhs)}


def test_ray_takes_one_conflict_not_both():
    # two unrelated contradictions; the second is violated by more
    lp = LinearProgram([1.0, 1.0], [[1, 0], [-1, 0], [0, 1], [0, -1]], [1.0, 0.0, 3.0, 0.0])
    for name, out in _rays(lp).items():
        assert out.status is LpStatus.INFEASIBLE, name
        support = set(np.flatnonzero(np.abs(out.farkas_ray) > 1e-9))
        assert support == {2, 3}, name
        assert np.abs(out.farkas_ray).max() == pytest.approx(1.0)


def test_ray_support_is_an_irreducible_infeasible_subsystem():
    found = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        m, n = 7, 4
        A = rng.integers(-3, 4, size=(m, n)).astype(float)
        b = rng.integers(-2, 6, size=m).astype(float)
        senses = list(rng.choice([">=", "<=", "="], size=m, p=[0.5, 0.3, 0.2]))
        if _feasible(A, b, senses, np.ones(n, bool)):
            continue
        found += 1
        lp = LinearProgram(np.ones(n), A, b, senses)
        for name, out in _rays(lp).items():
            assert out.status is LpStatus.INFEASIBLE, (seed, name)
            assert check_certificate(lp, out).ok(1e-6)
            # the subsystem: support rows plus the x >= 0 bounds the ray leans on
            u = out.farkas_ray
            S = np.flatnonzero(np.abs(u) > 1e-7)
            used = A.T @ u < -1e-7
            sub = lambda rows, bnd: (A[rows], b[rows], np.asarray(senses)[rows], bnd)
            assert not _feasible(*sub(S, used)), (seed, name)
            for i in S:
                assert _feasible(*sub(S[S != i], used)), (seed, name, "row", i)
            for j in np.flatnonzero(used):
                assert _feasible(*sub(S, used & (np.arange(n) != j))), (seed, name, "bound", j)
        if found >= 25:
            break
    assert found >= 25
