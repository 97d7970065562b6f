from pathlib import Path

import numpy as np
import pytest

from hqcbenders import BendersConfig, run_benders, solve_direct
from hqcbenders.benders import decompose, solve_subproblem_for
from hqcbenders.errors import DimensionMismatch, InvalidInstance
from hqcbenders.uc import (BOTH, GENERATION, LOAD, TRANSFER, Bus, Generator, Load, PowerSystem,
                           UcInstance, UcLayout, build_uc_milp, default_profile, dsp_objective,
                           find_feasible_instance, generate_loads, generate_power_system,
                           make_instance, map_uc_duals, u_coefficients, validate_dispatch)

FIXTURES = Path(__file__).parent / "fixtures"


def one_bus(T=1, demand=50.0):
    gen = Generator(0, 100.0, 20.0, 40.0, 40.0, 10.0, 10.0, 12.0, 40.0, 1, 20.0)
    sys_ = PowerSystem([Bus(0, BOTH, 0.5, 0.5)], [], [gen], [Load(0, 1.0)], 0)
    return UcInstance(sys_, T, np.full(T, demand / 100.0))


@pytest.fixture(scope="module")
def small():
    return find_feasible_instance(8, 4, 0)


def test_one_bus_row_count():
    p = build_uc_milp(one_bus())
    assert p.q == 6 and p.m == 3 and p.n == 2


@pytest.mark.parametrize("n,T,seed", [(8, 24, 0), (12, 6, 3), (30, 8, 0)])
def test_row_and_binary_counts(n, T, seed):
    inst = make_instance(n, T, seed)
    s = inst.system
    G, I, L = len(s.generators), s.n_buses, len(s.lines)
    p = build_uc_milp(inst)
    assert p.q == 2 * G * T + 2 * G * T + 2 * L * T + T + I * T
    assert p.m == 3 * G * T
    master, _ = decompose(p)
    assert master.m == 3 * G * T
    assert master.n_constraints == 1 + G * T


def test_golden_instance_regenerates_bitwise():
    assert make_instance(8, 24, 0).to_json() == (FIXTURES / "uc_8bus_seed0.json").read_text()


def test_json_round_trip():
    inst = make_instance(10, 5, 4)
    back = UcInstance.from_json(inst.to_json())
    assert np.array_equal(back.demand, inst.demand)
    assert back.to_json() == inst.to_json()


@pytest.mark.parametrize("seed", range(10))
def test_generated_system_properties(seed):
    s = generate_power_system(14, seed)
    assert s.is_connected()
    total = s.total_capacity
    kinds = [b.kind for b in s.buses]
    assert kinds.count(LOAD) == 7 and kinds.count(GENERATION) == 2 and kinds.count(BOTH) == 4
    assert kinds.count(TRANSFER) == 1
    for g in s.generators:
        assert 60 <= g.p_max <= 600
        assert 0.2 <= g.p_min / g.p_max <= 0.4
        assert g.ramp_up == g.ramp_down and g.ramp_up >= g.p_min
        assert g.ramp_up <= max(g.p_min, 0.4 * g.p_max) + 1e-9
        assert g.shutdown_cost == g.startup_cost and 5 <= g.startup_cost <= 1600
        assert 5 <= g.cost <= 30 and 3 * g.cost <= g.no_load_cost <= 6 * g.cost
        assert g.p_ini == g.p_min * g.u_ini
    for ln in s.lines:
        assert 0.15 * total <= ln.capacity <= 0.35 * total
        bi, bj = s.buses[ln.i], s.buses[ln.j]
        assert ln.reactance == pytest.approx(0.1 * np.hypot(bi.x - bj.x, bi.y - bj.y))
    assert sum(ld.share for ld in s.loads) == pytest.approx(1.0)


def test_admittance_matrix():
    s = generate_power_system(9, 2)
    Bm = s.admittance()
    assert np.allclose(Bm.sum(axis=1), 0.0)
    for ln in s.lines:
        assert Bm[ln.i, ln.j] == pytest.approx(-1.0 / ln.reactance)


def test_generator_is_deterministic():
    assert generate_power_system(11, 5).to_dict() == generate_power_system(11, 5).to_dict()
    with pytest.raises(InvalidInstance):
        generate_power_system(1, 0)


def test_loads():
    inst = one_bus(3)
    prof = np.array([0.3, 0.6, 0.9])
    D = generate_loads(inst.system, prof)
    assert np.allclose(D[0], prof * 100.0)
    s = generate_power_system(12, 1)
    prof = default_profile(6)
    D = generate_loads(s, prof, seed=8)
    assert np.allclose(D.sum(axis=0), prof * s.total_capacity)
    assert np.array_equal(D, generate_loads(s, prof, seed=8))
    with pytest.raises(ValueError):
        generate_loads(s, [0.0])


def test_default_profile_range():
    prof = default_profile()
    assert prof.size == 24 and 0.35 <= prof.min() and prof.max() <= 0.85


def test_all_off_commitment_gives_feasibility_cut(small):
    p = build_uc_milp(small)
    _, tmpl = decompose(p)
    y = np.zeros(p.m)
    out = solve_subproblem_for(tmpl, y)
    assert out.kind == "feasibility"
    assert out.cut.lhs(y) > 0


def test_dual_mapping_and_cut_shape(small):
    p = build_uc_milp(small)
    opt, x, y = solve_direct(p)
    _, tmpl = decompose(p)
    out = solve_subproblem_for(tmpl, y)
    assert out.kind == "optimality"
    view = map_uc_duals(small, out.cut.dual)
    lay = UcLayout.for_instance(small)
    u = y[:lay.G * lay.T]
    assert dsp_objective(small, view, u) == pytest.approx(out.dsp_value, rel=1e-6)
    assert np.allclose(out.cut.coeff_y[:lay.G * lay.T], u_coefficients(small, view).ravel(),
                       atol=1e-9)
    assert np.allclose(out.cut.coeff_y[lay.G * lay.T:], 0.0)
    # the constant is the u-independent part of the dual objective
    assert out.cut.constant == pytest.approx(dsp_objective(small, view, np.zeros_like(u)),
                                             rel=1e-9, abs=1e-6)
    for grp in (view.mu_plus, view.mu_minus, view.nu_plus, view.nu_minus, view.psi):
        assert grp.min() >= -1e-9
    zero = map_uc_duals(small, np.zeros(p.q))
    assert dsp_objective(small, zero, u) == 0.0
    with pytest.raises(DimensionMismatch):
        map_uc_duals(small, np.zeros(p.q + 1))


def test_benders_matches_direct_and_dispatch_is_valid(small):
    p = build_uc_milp(small)
    opt, _, _ = solve_direct(p)
    res = run_benders(p, BendersConfig(mode="all", pool_size=5))
    assert res.converged
    assert res.objective == pytest.approx(opt, rel=0.005)
    rep = validate_dispatch(small, res.x, res.y)
    assert rep.ok(1e-6), rep
    lay = UcLayout.for_instance(small)
    P = res.x[:lay.G * lay.T].reshape(lay.G, lay.T)
    assert np.allclose(P.sum(axis=0), small.demand.sum(axis=0), atol=1e-6)
    # susceptance rows sum to zero, so nodal injections cancel network-wide
    th = res.x[lay.G * lay.T:].reshape(lay.I, lay.T)
    assert np.allclose((small.system.admittance() @ th).sum(axis=0), 0.0, atol=1e-6)


def test_flipped_commitment_is_reported(small):
    p = build_uc_milp(small)
    _, x, y = solve_direct(p)
    lay = UcLayout.for_instance(small)
    g, t = np.argwhere(x[:lay.G * lay.T].reshape(lay.G, lay.T) > 1e-3)[0]
    y = y.copy()
    y[lay.u(g, t)] = 0.0
    rep = validate_dispatch(small, x, y)
    assert rep.limit_violation > 1e-3 and not rep.ok()


def test_invalid_instance_rejected():
    base = one_bus(1)
    inst = UcInstance(base.system, 1, base.profile, demand=[[150.0]])
    with pytest.raises(InvalidInstance):
        build_uc_milp(inst)
