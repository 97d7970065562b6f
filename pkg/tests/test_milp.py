import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from hqcbenders.errors import DimensionMismatch, InfeasibleError
from hqcbenders.lp import LinearProgram
from hqcbenders.milp import MilpProblem, evaluate_solution, solve_milp_with_pool


def enumerate_milp(p: MilpProblem):
    """Optimum by trying every binary assignment; continuous part via scipy."""
    lp = p.lp_part
    mask = p.binary_mask
    nb = int(mask.sum())
    A, b, c = lp.constraint_matrix, lp.rhs, lp.objective
    senses = np.array(lp.row_senses)
    best = np.inf
    for bits in itertools.product((0.0, 1.0), repeat=nb):
        lo, hi = lp.lower.copy(), lp.upper.copy()
        lo[mask] = hi[mask] = bits
        A_ub = np.vstack([A[senses == "<="], -A[senses == ">="]])
        b_ub = np.concatenate([b[senses == "<="], -b[senses == ">="]])
        res = linprog(c, A_ub=A_ub if A_ub.size else None, b_ub=b_ub if b_ub.size else None,
                      A_eq=A[senses == "="] if (senses == "=").any() else None,
                      b_eq=b[senses == "="] if (senses == "=").any() else None,
                      bounds=list(zip(lo, [None if np.isinf(h) else h for h in hi])),
                      method="highs")
        if res.status == 0:
            best = min(best, res.fun)
    return best


def random_milp(seed, nb=10, nc=2, rows=6, pool=5):
    rng = np.random.default_rng(seed)
    n = nb + nc
    A = rng.integers(-4, 5, size=(rows, n)).astype(float)
    y0 = (rng.random(nb) < 0.5).astype(float)
    x0 = rng.uniform(0, 2, nc)
    z0 = np.concatenate([y0, x0])
    b = A @ z0 - rng.uniform(0, 2, rows)
    c = np.concatenate([rng.integers(-5, 6, nb), rng.uniform(0.5, 3, nc)])
    lp = LinearProgram(c, A, b, [">="] * rows, upper=np.concatenate([np.ones(nb),
                                                                      np.full(nc, 10.0)]))
    return MilpProblem(lp, np.concatenate([np.ones(nb, bool), np.zeros(nc, bool)]), pool)


def small_example(pool=4):
    lp = LinearProgram([-1.0, -1.0], [[1.0, 1.0]], [1.0], ["<="])
    return MilpProblem(lp, [True, True], pool)


def test_two_binary_pool():
    pool = solve_milp_with_pool(small_example())
    assert 1 <= len(pool) <= 3
    assert pool.best.objective == pytest.approx(-1.0)
    assert tuple(pool.best.assignment) in ((1.0, 0.0), (0.0, 1.0))
    objs = [e.objective for e in pool]
    assert objs == sorted(objs)
    keys = {tuple(e.assignment) for e in pool}
    assert len(keys) == len(pool)
    assert all(set(e.assignment) <= {0.0, 1.0} for e in pool)


def test_cut_free_master_sits_at_zeta_low():
    zlow = -1e3
    d = np.array([2.0, 0.5, 1.0])
    # variables y (3), zeta
    lp = LinearProgram(np.append(d, 1.0), [[0, 0, 0, 1.0]], [zlow], [">="],
                       lower=[0, 0, 0, -np.inf], upper=[1, 1, 1, np.inf])
    pool = solve_milp_with_pool(MilpProblem(lp, [True, True, True, False], 1))
    assert pool.best.objective == pytest.approx(zlow)
    assert np.allclose(pool.best.assignment[:3], 0.0)


@pytest.mark.parametrize("prover", ["bb", "highs"])
@pytest.mark.parametrize("seed", range(6))
def test_optimum_matches_enumeration(seed, prover):
    p = random_milp(seed)
    pool = solve_milp_with_pool(p, prover=prover)
    assert pool.best.objective == pytest.approx(enumerate_milp(p), rel=1e-7, abs=1e-7)
    assert len(pool) <= p.pool_size
    objs = [e.objective for e in pool]
    assert objs == sorted(objs)
    for e in pool:
        ev = evaluate_solution(p, e.assignment)
        assert ev.feasible, ev.violations
        assert ev.objective == pytest.approx(e.objective, abs=1e-7)


def test_pure_binary_against_enumeration():
    for seed in range(10):
        rng = np.random.default_rng(50 + seed)
        nb = 8
        A = rng.integers(-3, 4, size=(4, nb)).astype(float)
        y0 = (rng.random(nb) < 0.5).astype(float)
        b = A @ y0 - rng.integers(0, 2, 4)
        lp = LinearProgram(rng.integers(-6, 7, nb), A, b, [">="] * 4)
        p = MilpProblem(lp, np.ones(nb, bool), 6)
        best = min(float(lp.objective @ np.array(y)) for y in itertools.product((0, 1), repeat=nb)
                   if np.all(A @ np.array(y) >= b - 1e-9))
        pool = solve_milp_with_pool(p)
        assert pool.best.objective == pytest.approx(best)


def test_evaluate_solution_examples():
    p = small_example()
    pool = solve_milp_with_pool(p)
    ev = evaluate_solution(p, pool.best.assignment)
    assert ev.feasible and ev.objective == pytest.approx(pool.best.objective)

    ev = evaluate_solution(p, [1.0, 1.0])
    assert not ev.feasible
    (v,) = [v for v in ev.violations if v.kind == "row"]
    assert v.index == 0 and v.amount == pytest.approx(1.0)

    ev = evaluate_solution(p, [0.5, 0.0])
    assert any(v.kind == "integrality" and v.index == 0 for v in ev.violations)

    with pytest.raises(DimensionMismatch):
        evaluate_solution(p, [1.0])


def test_infeasible_milp():
    lp = LinearProgram([1.0, 1.0], [[1.0, 1.0]], [3.0], [">="])
    with pytest.raises(InfeasibleError):
        solve_milp_with_pool(MilpProblem(lp, [True, True], 2))


def test_pool_fills_up_to_size():
    lp = LinearProgram(np.arange(1.0, 6.0), np.ones((1, 5)), [1.0], [">="])
    pool = solve_milp_with_pool(MilpProblem(lp, np.ones(5, bool), 4), pool_gap=10.0)
    assert len(pool) == 4
    assert pool.best.objective == pytest.approx(1.0)
