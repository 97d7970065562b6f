"""Unit commitment with a DC network: instance generation and the MILP.

Continuous variables are generator outputs ``P[g, t]`` (nonnegative) and bus
angles ``theta[i, t]`` (free). Binaries are commitment ``u``, start-up ``y``
and shut-down ``z``, each indexed by ``(g, t)``. Every network and output row
is written as ``A x + B y (>= or =) b`` so the Benders machinery can use it
unchanged; the binary-only commitment logic goes to the ``y`` constraints.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .benders import DEFAULT_ZETA_LOW, MixedProblem, YConstraints
from .errors import DimensionMismatch, GenerationFailure, InvalidInstance
from .lp import EQ, GE, TOL_FEAS

LOAD, GENERATION, BOTH, TRANSFER = "load", "generation", "both", "transfer"


@dataclass
class Bus:
    index: int
    kind: str
    x: float
    y: float


@dataclass
class Line:
    i: int
    j: int
    reactance: float
    capacity: float


@dataclass
class Generator:
    bus: int
    p_max: float
    p_min: float
    ramp_up: float
    ramp_down: float
    startup_cost: float
    shutdown_cost: float
    cost: float
    no_load_cost: float
    u_ini: int
    p_ini: float


@dataclass
class Load:
    bus: int
    share: float


@dataclass
class GeneratorRanges:
    p_max: tuple = (60.0, 600.0)
    p_min_frac: tuple = (0.2, 0.4)
    ramp_frac: tuple = (0.2, 0.4)
    startup_cost: tuple = (5.0, 1600.0)
    cost: tuple = (5.0, 30.0)
    no_load_mult: tuple = (3.0, 6.0)


@dataclass
class PowerSystem:
    buses: list
    lines: list
    generators: list
    loads: list
    reference_bus: int = 0

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def total_capacity(self) -> float:
        return float(sum(g.p_max for g in self.generators))

    def admittance(self) -> np.ndarray:
        n = self.n_buses
        Bm = np.zeros((n, n))
        for ln in self.lines:
            s = 1.0 / ln.reactance
            Bm[ln.i, ln.i] += s
            Bm[ln.j, ln.j] += s
            Bm[ln.i, ln.j] -= s
            Bm[ln.j, ln.i] -= s
        return Bm

    def is_connected(self) -> bool:
        return _connected(self.n_buses, [(ln.i, ln.j) for ln in self.lines])

    def to_dict(self) -> dict:
        return {"buses": [asdict(b) for b in self.buses],
                "lines": [asdict(ln) for ln in self.lines],
                "generators": [asdict(g) for g in self.generators],
                "loads": [asdict(ld) for ld in self.loads],
                "reference_bus": self.reference_bus}

    @classmethod
    def from_dict(cls, d: dict) -> "PowerSystem":
        return cls([Bus(**b) for b in d["buses"]], [Line(**ln) for ln in d["lines"]],
                   [Generator(**g) for g in d["generators"]], [Load(**ld) for ld in d["loads"]],
                   int(d.get("reference_bus", 0)))


def _connected(n: int, edges) -> bool:
    if n <= 1:
        return True
    if not edges:
        return False
    r, c = zip(*edges)
    g = coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    return connected_components(g, directed=False)[0] == 1


def _sample_lines(pos: np.ndarray, rng, radius: float, mean_degree: float):
    """Each bus draws ``max(1, Poisson(mean))`` links to its nearest neighbours
    within ``radius`` (the single nearest bus if none is that close)."""
    n = len(pos)
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    edges = set()
    for i in range(n):
        k = max(1, int(rng.poisson(mean_degree)))
        order = [j for j in np.argsort(dist[i], kind="stable") if j != i]
        near = [j for j in order if dist[i, j] <= radius] or order[:1]
        for j in near[:k]:
            edges.add((int(min(i, j)), int(max(i, j))))
    return sorted(edges), dist


def _bus_kinds(n: int, rng) -> list:
    counts = [(LOAD, int(math.floor(0.5 * n))), (GENERATION, int(math.floor(0.2 * n))),
              (BOTH, int(math.floor(0.3 * n)))]
    kinds = [k for k, c in counts for _ in range(c)]
    kinds += [TRANSFER] * (n - len(kinds))
    if not any(k in (GENERATION, BOTH) for k in kinds):
        # too few buses for the split to place a generator
        kinds[kinds.index(TRANSFER) if TRANSFER in kinds else -1] = BOTH
    perm = rng.permutation(n)
    out = [None] * n
    for slot, bus in enumerate(perm):
        out[int(bus)] = kinds[slot]
    return out


def generate_power_system(n_buses: int, seed: int,
                          gen_params: Optional[GeneratorRanges] = None,
                          radius: float = 0.4, mean_degree: float = 2.67,
                          max_retries: int = 100) -> PowerSystem:
    if n_buses < 2:
        raise InvalidInstance("a power system needs at least two buses")
    gp = gen_params or GeneratorRanges()
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        pos = rng.random((n_buses, 2))
        edges, dist = _sample_lines(pos, rng, radius, mean_degree)
        if _connected(n_buses, edges):
            break
    else:
        raise GenerationFailure(f"no connected topology in {max_retries} attempts")
    kinds = _bus_kinds(n_buses, rng)
    buses = [Bus(i, kinds[i], float(pos[i, 0]), float(pos[i, 1])) for i in range(n_buses)]

    gens = []
    for i in range(n_buses):
        if kinds[i] not in (GENERATION, BOTH):
            continue
        p_max = rng.uniform(*gp.p_max)
        p_min = rng.uniform(*gp.p_min_frac) * p_max
        ramp = max(p_min, rng.uniform(*gp.ramp_frac) * p_max)
        suc = rng.uniform(*gp.startup_cost)
        cost = rng.uniform(*gp.cost)
        nlc = rng.uniform(gp.no_load_mult[0] * cost, gp.no_load_mult[1] * cost)
        u_ini = int(rng.integers(0, 2))
        gens.append(Generator(i, p_max, p_min, ramp, ramp, suc, suc, cost, nlc, u_ini,
                              p_min * u_ini))
    total = sum(g.p_max for g in gens)
    lines = [Line(i, j, 0.1 * float(dist[i, j]), rng.uniform(0.15, 0.35) * total)
             for i, j in edges]
    load_buses = [i for i in range(n_buses) if kinds[i] in (LOAD, BOTH)]
    shares = rng.dirichlet(np.ones(len(load_buses))) if load_buses else []
    loads = [Load(i, float(s)) for i, s in zip(load_buses, shares)]
    return PowerSystem(buses, lines, gens, loads, 0)


def default_profile(horizon: int = 24) -> np.ndarray:
    """The bundled synthetic 24-hour profile, truncated to ``horizon``."""
    text = resources.files("hqcbenders.data").joinpath("load_profile.csv").read_text()
    rows = [r for r in csv.reader(line for line in text.splitlines()
                                  if line and not line.startswith("#"))]
    vals = np.array([float(r[1]) for r in rows[1:]])
    if not 1 <= horizon <= vals.size:
        raise ValueError(f"horizon must be between 1 and {vals.size}")
    return vals[:horizon]


def generate_loads(system: PowerSystem, profile, seed: Optional[int] = None) -> np.ndarray:
    """``D[l, t] = share_l * profile_t * total capacity``.

    With ``seed`` the load shares are redrawn from a unit Dirichlet instead
    of taken from ``system``.
    """
    prof = np.asarray(profile, dtype=float).ravel()
    if np.any(prof <= 0) or np.any(prof > 1):
        raise ValueError("profile values must lie in (0, 1]")
    shares = np.array([ld.share for ld in system.loads])
    if seed is not None and len(shares):
        shares = np.random.default_rng(seed).dirichlet(np.ones(len(shares)))
    return np.outer(shares, prof) * system.total_capacity


@dataclass
class UcInstance:
    system: PowerSystem
    horizon: int
    profile: np.ndarray
    demand: np.ndarray = None
    seed: Optional[int] = None

    def __post_init__(self):
        self.profile = np.asarray(self.profile, dtype=float).ravel()
        if self.profile.size != self.horizon:
            raise InvalidInstance("profile length must equal the horizon")
        if self.demand is None:
            self.demand = generate_loads(self.system, self.profile)
        self.demand = np.asarray(self.demand, dtype=float).reshape(len(self.system.loads),
                                                                   self.horizon)

    def validate(self):
        s = self.system
        if not s.generators:
            raise InvalidInstance("instance has no generators")
        if not s.is_connected():
            raise InvalidInstance("network is not connected")
        if np.any(self.demand < 0):
            raise InvalidInstance("negative demand")
        if np.any(self.demand.sum(axis=0) > s.total_capacity + 1e-9):
            raise InvalidInstance("demand exceeds generating capacity")
        for ln in s.lines:
            if ln.reactance <= 0:
                raise InvalidInstance("line reactance must be positive")

    def to_json(self) -> str:
        return json.dumps({"system": self.system.to_dict(), "horizon": self.horizon,
                           "profile": self.profile.tolist(), "seed": self.seed}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "UcInstance":
        d = json.loads(text)
        return cls(PowerSystem.from_dict(d["system"]), int(d["horizon"]), d["profile"],
                   seed=d.get("seed"))


def make_instance(n_buses: int, horizon: int, seed: int, profile=None) -> UcInstance:
    system = generate_power_system(n_buses, seed)
    prof = default_profile(horizon) if profile is None else profile
    return UcInstance(system, horizon, prof, seed=seed)


@dataclass
class UcLayout:
    """Index bookkeeping for variables and row groups."""

    G: int
    T: int
    I: int
    L: int
    rows: dict = field(default_factory=dict)

    @classmethod
    def for_instance(cls, inst: UcInstance) -> "UcLayout":
        s = inst.system
        lay = cls(len(s.generators), inst.horizon, s.n_buses, len(s.lines))
        G, T, I, L = lay.G, lay.T, lay.I, lay.L
        start = 0
        for name, size in (("mu_plus", G * T), ("mu_minus", G * T), ("nu_plus", G * T),
                           ("nu_minus", G * T), ("psi", 2 * L * T), ("lambda0", T),
                           ("lambda", I * T)):
            lay.rows[name] = slice(start, start + size)
            start += size
        return lay

    @property
    def n_rows(self) -> int:
        return self.rows["lambda"].stop

    @property
    def n_x(self) -> int:
        return self.G * self.T + self.I * self.T

    @property
    def n_y(self) -> int:
        return 3 * self.G * self.T

    def p(self, g, t) -> int:
        return g * self.T + t

    def theta(self, i, t) -> int:
        return self.G * self.T + i * self.T + t

    def u(self, g, t) -> int:
        return g * self.T + t

    def y(self, g, t) -> int:
        return self.G * self.T + g * self.T + t

    def z(self, g, t) -> int:
        return 2 * self.G * self.T + g * self.T + t


def build_uc_milp(inst: UcInstance, zeta_low: float = DEFAULT_ZETA_LOW) -> MixedProblem:
    inst.validate()
    s = inst.system
    lay = UcLayout.for_instance(inst)
    G, T, I, L = lay.G, lay.T, lay.I, lay.L
    A = np.zeros((lay.n_rows, lay.n_x))
    B = np.zeros((lay.n_rows, lay.n_y))
    b = np.zeros(lay.n_rows)
    senses = [GE] * lay.n_rows

    r0 = lay.rows["mu_plus"].start
    r1 = lay.rows["mu_minus"].start
    r2 = lay.rows["nu_plus"].start
    r3 = lay.rows["nu_minus"].start
    for g, gen in enumerate(s.generators):
        for t in range(T):
            k = g * T + t
            # -P + Pmax u >= 0  and  P - Pmin u >= 0
            A[r0 + k, lay.p(g, t)] = -1.0
            B[r0 + k, lay.u(g, t)] = gen.p_max
            A[r1 + k, lay.p(g, t)] = 1.0
            B[r1 + k, lay.u(g, t)] = -gen.p_min
            # ramping, with the initial output standing in for t = 0
            A[r2 + k, lay.p(g, t)] = -1.0
            A[r3 + k, lay.p(g, t)] = 1.0
            if t == 0:
                b[r2 + k] = -gen.ramp_up - gen.p_ini
                b[r3 + k] = -gen.ramp_down + gen.p_ini
            else:
                A[r2 + k, lay.p(g, t - 1)] = 1.0
                A[r3 + k, lay.p(g, t - 1)] = -1.0
                b[r2 + k] = -gen.ramp_up
                b[r3 + k] = -gen.ramp_down

    r = lay.rows["psi"].start
    for ln in s.lines:
        for a, c in ((ln.i, ln.j), (ln.j, ln.i)):
            for t in range(T):
                # (theta_c - theta_a) / X >= -Fmax
                A[r, lay.theta(c, t)] = 1.0 / ln.reactance
                A[r, lay.theta(a, t)] = -1.0 / ln.reactance
                b[r] = -ln.capacity
                r += 1

    r = lay.rows["lambda0"].start
    for t in range(T):
        A[r + t, lay.theta(s.reference_bus, t)] = 1.0
        senses[r + t] = EQ

    Bm = s.admittance()
    bus_load = np.zeros((I, T))
    for l, ld in enumerate(s.loads):
        bus_load[ld.bus] += inst.demand[l]
    r = lay.rows["lambda"].start
    for i in range(I):
        for t in range(T):
            k = r + i * T + t
            for j in np.flatnonzero(Bm[i]):
                A[k, lay.theta(j, t)] = Bm[i, j]
            for g, gen in enumerate(s.generators):
                if gen.bus == i:
                    A[k, lay.p(g, t)] = -1.0
            b[k] = -bus_load[i, t]
            senses[k] = EQ

    c = np.zeros(lay.n_x)
    d = np.zeros(lay.n_y)
    for g, gen in enumerate(s.generators):
        for t in range(T):
            c[lay.p(g, t)] = gen.cost
            d[lay.u(g, t)] = gen.no_load_cost
            d[lay.y(g, t)] = gen.startup_cost
            d[lay.z(g, t)] = gen.shutdown_cost

    # y - z - u_t + u_{t-1} = 0, with u_ini on the right at t = 0
    Ymat = np.zeros((G * T, lay.n_y))
    yrhs = np.zeros(G * T)
    for g, gen in enumerate(s.generators):
        for t in range(T):
            k = g * T + t
            Ymat[k, lay.y(g, t)] = 1.0
            Ymat[k, lay.z(g, t)] = -1.0
            Ymat[k, lay.u(g, t)] = -1.0
            if t == 0:
                yrhs[k] = -gen.u_ini
            else:
                Ymat[k, lay.u(g, t - 1)] = 1.0
    x_free = np.zeros(lay.n_x, dtype=bool)
    x_free[G * T:] = True
    return MixedProblem(c, d, A, B, b, senses, x_free,
                        YConstraints(Ymat, yrhs, [EQ] * (G * T)), zeta_low)


@dataclass
class UcDualView:
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    nu_plus: np.ndarray
    nu0_plus: np.ndarray
    nu_minus: np.ndarray
    nu0_minus: np.ndarray
    psi: np.ndarray  # (line, orientation, t)
    lambda0: np.ndarray
    lam: np.ndarray  # (bus, t)


def map_uc_duals(inst: UcInstance, duals) -> UcDualView:
    lay = UcLayout.for_instance(inst)
    w = np.asarray(duals, dtype=float).ravel()
    if w.size != lay.n_rows:
        raise DimensionMismatch(f"expected {lay.n_rows} duals, got {w.size}")
    G, T = lay.G, lay.T

    def grab(name, shape):
        return w[lay.rows[name]].reshape(shape)

    nu_p = grab("nu_plus", (G, T))
    nu_m = grab("nu_minus", (G, T))
    return UcDualView(grab("mu_plus", (G, T)), grab("mu_minus", (G, T)),
                      nu_p[:, 1:], nu_p[:, 0], nu_m[:, 1:], nu_m[:, 0],
                      grab("psi", (lay.L, 2, T)), grab("lambda0", (T,)),
                      grab("lambda", (lay.I, T)))


def dsp_objective(inst: UcInstance, view: UcDualView, u_hat) -> float:
    """Dual subproblem objective written out group by group."""
    s = inst.system
    G, T = len(s.generators), inst.horizon
    u = np.asarray(u_hat, dtype=float).reshape(G, T)
    pmax = np.array([g.p_max for g in s.generators])[:, None]
    pmin = np.array([g.p_min for g in s.generators])[:, None]
    ru = np.array([g.ramp_up for g in s.generators])
    rd = np.array([g.ramp_down for g in s.generators])
    pini = np.array([g.p_ini for g in s.generators])
    fmax = np.array([ln.capacity for ln in s.lines])
    bus_load = np.zeros((s.n_buses, T))
    for l, ld in enumerate(s.loads):
        bus_load[ld.bus] += inst.demand[l]
    val = float(np.sum((view.mu_minus * pmin - view.mu_plus * pmax) * u))
    val -= float(np.sum(view.nu_plus * ru[:, None])) + float(np.sum(view.nu0_plus * (ru + pini)))
    val -= float(np.sum(view.nu_minus * rd[:, None]))
    val += float(np.sum(view.nu0_minus * (pini - rd)))
    val -= float(np.sum(view.lam * bus_load))
    if fmax.size:
        val -= float(np.sum(view.psi * fmax[:, None, None]))
    return val


def u_coefficients(inst: UcInstance, view: UcDualView) -> np.ndarray:
    """Cut coefficients on ``u``: ``mu_minus * Pmin - mu_plus * Pmax``."""
    s = inst.system
    pmax = np.array([g.p_max for g in s.generators])[:, None]
    pmin = np.array([g.p_min for g in s.generators])[:, None]
    return view.mu_minus * pmin - view.mu_plus * pmax


@dataclass
class DispatchReport:
    balance_residual: float  # worst per-period |generation - demand|
    bus_residual: float  # worst nodal balance residual
    limit_violation: float
    ramp_violation: float
    flow_violation: float
    reference_violation: float
    logic_violation: float
    integrality_violation: float
    notes: list = field(default_factory=list)

    def ok(self, tol: float = 1e-6) -> bool:
        return max(self.balance_residual, self.bus_residual, self.limit_violation,
                   self.ramp_violation, self.flow_violation, self.reference_violation,
                   self.logic_violation, self.integrality_violation) <= tol


def validate_dispatch(inst: UcInstance, x, y) -> DispatchReport:
    s = inst.system
    lay = UcLayout.for_instance(inst)
    G, T, I = lay.G, lay.T, lay.I
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    P = x[:G * T].reshape(G, T)
    th = x[G * T:].reshape(I, T)
    u = y[:G * T].reshape(G, T)
    su = y[G * T:2 * G * T].reshape(G, T)
    sd = y[2 * G * T:].reshape(G, T)
    notes = []
    load_t = inst.demand.sum(axis=0)
    balance = float(np.max(np.abs(P.sum(axis=0) - load_t)))
    bus_load = np.zeros((I, T))
    for l, ld in enumerate(s.loads):
        bus_load[ld.bus] += inst.demand[l]
    inj = np.zeros((I, T))
    for g, gen in enumerate(s.generators):
        inj[gen.bus] += P[g]
    nodal = s.admittance() @ th - inj + bus_load
    bus_res = float(np.max(np.abs(nodal)))
    lim = 0.0
    ramp = 0.0
    for g, gen in enumerate(s.generators):
        lim = max(lim, float(np.max(P[g] - gen.p_max * u[g])),
                  float(np.max(gen.p_min * u[g] - P[g])), float(np.max(-P[g])))
        prev = np.concatenate([[gen.p_ini], P[g, :-1]])
        ramp = max(ramp, float(np.max(P[g] - prev - gen.ramp_up)),
                   float(np.max(prev - P[g] - gen.ramp_down)))
    if lim > TOL_FEAS:
        notes.append("output limits violated")
    flow = 0.0
    for ln in s.lines:
        f = (th[ln.i] - th[ln.j]) / ln.reactance
        flow = max(flow, float(np.max(np.abs(f) - ln.capacity)))
    ref = float(np.max(np.abs(th[s.reference_bus])))
    logic = 0.0
    for g, gen in enumerate(s.generators):
        prev = np.concatenate([[gen.u_ini], u[g, :-1]])
        logic = max(logic, float(np.max(np.abs(su[g] - sd[g] - (u[g] - prev)))))
    integ = float(np.max(np.abs(y - np.round(y)))) if y.size else 0.0
    return DispatchReport(balance, bus_res, max(lim, 0.0), max(ramp, 0.0), max(flow, 0.0),
                          ref, logic, integ, notes)


def all_on_feasible(inst: UcInstance) -> bool:
    """Whether the dispatch LP is feasible with every unit committed throughout.

    Any commitment schedule satisfies the start-up/shut-down logic, so this is
    a sufficient test for the whole MILP being feasible.
    """
    from .benders import decompose, solve_subproblem_for

    p = build_uc_milp(inst)
    lay = UcLayout.for_instance(inst)
    y = np.zeros(lay.n_y)
    y[:lay.G * lay.T] = 1.0
    for g, gen in enumerate(inst.system.generators):
        if not gen.u_ini:
            y[lay.y(g, 0)] = 1.0
    _, tmpl = decompose(p)
    return solve_subproblem_for(tmpl, y).kind == "optimality"


def find_feasible_instance(n_buses: int, horizon: int, seed: int, max_tries: int = 200,
                           profile=None) -> UcInstance:
    """First instance from ``seed, seed + 1, ...`` that passes :func:`all_on_feasible`."""
    for s in range(seed, seed + max_tries):
        try:
            inst = make_instance(n_buses, horizon, s, profile)
            inst.validate()
        except (GenerationFailure, InvalidInstance):
            continue
        if all_on_feasible(inst):
            return inst
    raise GenerationFailure(f"no feasible instance among seeds {seed}..{seed + max_tries - 1}")
