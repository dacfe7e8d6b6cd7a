"""Experiment harness: configs, reference solutions, error tables, CSV output.

An experiment is one scheme on one problem, run for a list of step counts and
compared against a reference: either a fine implicit Euler run on the same
grid or, for the porous-medium family, the self-similar source solution.  The
emitted CSV is byte-reproducible for a fixed config and seed — timings are
kept in the in-memory report and the plain-text summary, never in the CSV.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import yaml
from scipy.integrate import quad

from .decomposition import DecompositionLayout, check_separating_condition, decompose
from .errors import (
    InvalidConfig,
    InvalidParams,
    ReferenceUnavailable,
)
from .grid import Field, build_grid, l2_norm
from .integrators import PERTURBATIONS, SchemeSpec, Trajectory, integrate
from .operators import (
    ProblemKind,
    decomposition_residual,
    dissipativity_gap,
    full_operator,
    pivot_norm,
    sub_operator,
)
from .resolvent import SolverConfig
from .vectorfields import VectorFieldSpec, check_coefficient_properties

__all__ = [
    "BarenblattParams",
    "barenblatt",
    "barenblatt_field",
    "barenblatt_support_radius",
    "mass_constant",
    "ExperimentConfig",
    "load_config",
    "config_from_dict",
    "RunContext",
    "build_context",
    "ConvergenceReport",
    "ReportRow",
    "run_convergence_study",
    "propagation_probe",
    "ProbeRow",
    "emit_csv",
    "read_csv",
    "summary_lines",
    "run_check",
    "random_smooth_field",
]


# ── Self-similar source solution ─────────────────────────────────────────────


@dataclass(frozen=True)
class BarenblattParams:
    """Parameters of the self-similar source solution of ``u_t = lap(u^m)``.

    ``c`` fixes the height/mass; ``t0`` the initial time.  The similarity
    exponents are ``a = d/(d(m-1)+2)``, ``b = a/d`` and the profile constant
    ``k = a(m-1)/(2dm)``.
    """

    d: int
    m: float
    c: float
    t0: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise InvalidParams(f"dimension must be 1 or 2, got {self.d}")
        if not self.m > 1:
            raise InvalidParams(f"need m > 1, got m = {self.m}")
        if self.c <= 0 or self.t0 <= 0:
            raise InvalidParams("need c > 0 and t0 > 0")

    @property
    def a(self):
        return self.d / (self.d * (self.m - 1.0) + 2.0)

    @property
    def b(self):
        return self.a / self.d

    @property
    def k(self):
        return self.a * (self.m - 1.0) / (2.0 * self.d * self.m)


def barenblatt(params, r, t):
    """Evaluate the source solution at radial distance ``r`` and time ``t``."""
    if t < params.t0:
        raise InvalidParams(f"time {t} precedes the profile's t0 = {params.t0}")
    r = np.asarray(r, dtype=float)
    core = params.c - params.k * r * r * t ** (-2.0 * params.b)
    return t ** (-params.a) * np.maximum(core, 0.0) ** (1.0 / (params.m - 1.0))


def barenblatt_field(params, grid, t, center=None):
    """Sample the source solution on a grid (centered by default)."""
    return Field(grid, barenblatt(params, grid.radial_distance(center), t))


def barenblatt_support_radius(params, t):
    """Radius of the support at time ``t``: ``sqrt(c/k) * t^b``."""
    return math.sqrt(params.c / params.k) * t**params.b


def mass_constant(d, m, mass=1.0):
    """Profile constant ``c`` that gives the requested total mass.

    The mass scales as ``c^(1/(m-1) + d/2)``, so one radial quadrature at
    ``c = 1`` fixes the constant.
    """
    if d not in (1, 2) or not m > 1 or mass <= 0:
        raise InvalidParams("need d in {1,2}, m > 1, mass > 0")
    a = d / (d * (m - 1.0) + 2.0)
    k = a * (m - 1.0) / (2.0 * d * m)
    rmax = math.sqrt(1.0 / k)
    if d == 1:
        m1 = 2.0 * quad(lambda r: (1.0 - k * r * r) ** (1.0 / (m - 1.0)), 0.0, rmax)[0]
    else:
        m1 = 2.0 * math.pi * quad(
            lambda r: r * (1.0 - k * r * r) ** (1.0 / (m - 1.0)), 0.0, rmax
        )[0]
    q = 1.0 / (m - 1.0) + d / 2.0
    return (mass / m1) ** (1.0 / q)


# ── Configuration ────────────────────────────────────────────────────────────


@dataclass
class ExperimentConfig:
    """One experiment: grid, cover, problem, scheme, times, reference."""

    name: str
    grid: dict
    layout: dict
    problem: dict
    scheme: dict
    initial: dict
    time: dict
    reference: dict
    solver: dict = field(default_factory=dict)
    seed: int = 0
    keep_trajectories: bool = False


_REQUIRED = ("name", "grid", "layout", "problem", "scheme", "initial", "time", "reference")


def config_from_dict(raw):
    """Validate a parsed mapping and normalize it into an ExperimentConfig."""
    if not isinstance(raw, dict):
        raise InvalidConfig("config root must be a mapping")
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise InvalidConfig(f"missing config sections: {', '.join(missing)}")
    known = set(_REQUIRED) | {"solver", "seed", "keep_trajectories"}
    unknown = set(raw) - known
    if unknown:
        raise InvalidConfig(f"unknown config sections: {', '.join(sorted(unknown))}")
    cfg = ExperimentConfig(
        name=str(raw["name"]),
        grid=dict(raw["grid"]),
        layout=dict(raw["layout"]),
        problem=dict(raw["problem"]),
        scheme=dict(raw["scheme"]),
        initial=dict(raw["initial"]),
        time=dict(raw["time"]),
        reference=dict(raw["reference"]),
        solver=dict(raw.get("solver") or {}),
        seed=int(raw.get("seed", 0)),
        keep_trajectories=bool(raw.get("keep_trajectories", False)),
    )
    if "total" not in cfg.time or "steps" not in cfg.time:
        raise InvalidConfig("time section needs 'total' and 'steps'")
    steps = cfg.time["steps"]
    if not isinstance(steps, (list, tuple)) or not steps:
        raise InvalidConfig("time.steps must be a non-empty list")
    if any(int(n) < 1 for n in steps):
        raise InvalidConfig("step counts must be positive")
    if list(steps) != sorted(int(n) for n in steps):
        raise InvalidConfig("time.steps must be increasing")
    return cfg


def load_config(path):
    """Read a YAML experiment file."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    return config_from_dict(raw)


@dataclass
class RunContext:
    """Config resolved into live objects."""

    config: ExperimentConfig
    grid: object
    pou: object
    problem: ProblemKind
    scheme: SchemeSpec
    eta: Field
    solver: SolverConfig
    barenblatt_params: BarenblattParams = None


def _build_scheme(section):
    kind = section.get("kind", "lie_splitting")
    pert = None
    pname = section.get("perturbation")
    if pname not in (None, "none"):
        if pname not in PERTURBATIONS:
            raise InvalidConfig(f"unknown perturbation {pname!r}")
        pert = PERTURBATIONS[pname]()
    sweep = section.get("sweep")
    return SchemeSpec(
        kind=kind,
        base=section.get("base", "lie_splitting"),
        perturbation=pert,
        sweep=tuple(sweep) if sweep else None,
    )


def _build_initial(section, grid, problem):
    ident = section.get("id")
    params = dict(section.get("params") or {})
    coords = grid.node_coordinates()
    if ident == "zero":
        return Field(grid, np.zeros(grid.shape)), None
    if ident == "constant":
        return Field(grid, np.full(grid.shape, float(params.get("value", 1.0)))), None
    if ident == "sin_plus_one":
        vals = np.sin(np.pi * coords[0])
        for a in range(1, grid.dim):
            vals = vals * np.sin(np.pi * coords[a])
        return Field(grid, vals + 1.0), None
    if ident == "gaussian":
        center = params.get("center") or [0.5 * (grid.lo[a] + grid.hi[a])
                                          for a in range(grid.dim)]
        width = float(params.get("width", 0.25))
        amp = float(params.get("amplitude", 1.0))
        r = grid.radial_distance(center)
        return Field(grid, amp * np.exp(-(r / width) ** 2)), None
    if ident == "barenblatt":
        m = float(params.get("m", problem.spec.p - 1.0))
        t0 = float(params.get("t0", 0.01))
        if "c" in params:
            c = float(params["c"])
        else:
            c = mass_constant(grid.dim, m, float(params.get("mass", 1.0)))
        bp = BarenblattParams(d=grid.dim, m=m, c=c, t0=t0)
        return barenblatt_field(bp, grid, bp.t0), bp
    raise InvalidConfig(f"unknown initial datum {ident!r}")


def build_context(config):
    """Resolve a validated config into grid, cover, problem, scheme, datum."""
    gsec = config.grid
    grid = build_grid(int(gsec["dim"]), gsec["n"], gsec["lo"], gsec["hi"])
    layout = DecompositionLayout(
        kind=config.layout.get("kind", "strips"),
        count=int(config.layout.get("count", 1)),
        overlap=float(config.layout.get("overlap", 0.2)),
        axis=int(config.layout.get("axis", 0)),
    )
    pou = decompose(grid, layout)
    asec = dict(config.problem.get("alpha") or {})
    spec_kwargs = {"kind": asec.get("kind", "p_laplace")}
    for key in ("p", "a", "b", "eps_reg"):
        if key in asec:
            spec_kwargs[key] = float(asec[key])
    spec = VectorFieldSpec(**spec_kwargs)
    spec.check_dimension(grid.dim)
    problem = ProblemKind(family=config.problem.get("family"), spec=spec)
    scheme = _build_scheme(config.scheme)
    eta, bp = _build_initial(config.initial, grid, problem)
    solver = SolverConfig(**config.solver) if config.solver else SolverConfig()
    return RunContext(config=config, grid=grid, pou=pou, problem=problem,
                      scheme=scheme, eta=eta, solver=solver, barenblatt_params=bp)


# ── Convergence studies ──────────────────────────────────────────────────────


@dataclass
class ReportRow:
    n: int
    h: float
    error_final: float
    error_sup: float
    observed_order: float      # nan in the first row
    wall_ms: float
    newton_total: int
    extras: dict = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    name: str
    scheme_kind: str
    pivot: str
    reference: str
    rows: list
    trajectories: list = None
    reference_final: Field = None

    def errors_final(self):
        return [row.error_final for row in self.rows]


def _reference_scheme(scheme):
    """Implicit Euler reference; perturbed runs get the matching perturbed one."""
    if scheme.is_perturbed:
        return SchemeSpec(kind="perturbed_modified", base="backward_euler",
                          perturbation=scheme.perturbation)
    return SchemeSpec(kind="backward_euler")


def run_convergence_study(config, threads=1):
    """Run one experiment for every step count and tabulate errors.

    The reference is either a fine implicit Euler run (``factor`` times the
    largest step count, which every entry of ``time.steps`` must divide) or
    the self-similar oracle evaluated at the shared times.  Errors are
    measured in the family's pivot norm at the final time, and as the max
    over all shared times.

    Returns
    -------
    ConvergenceReport
    """
    if isinstance(config, (str, bytes)) or hasattr(config, "__fspath__"):
        config = load_config(config)
    ctx = build_context(config)
    duration = float(config.time["total"])
    step_list = [int(n) for n in config.time["steps"]]
    ref_kind = config.reference.get("kind", "backward_euler")

    ref_states = None
    ref_desc = "none"
    oracle = None
    if ref_kind == "backward_euler":
        factor = int(config.reference.get("factor", 16))
        n_ref = factor * max(step_list)
        bad = [n for n in step_list if n_ref % n != 0]
        if bad:
            raise ReferenceUnavailable(
                f"step counts {bad} do not divide the reference count {n_ref}"
            )
        ref_traj = integrate(_reference_scheme(ctx.scheme), ctx.problem, ctx.pou,
                             ctx.eta, duration, n_ref, ctx.solver, threads=threads)
        ref_states = ref_traj.states
        ref_desc = f"backward_euler n={n_ref}"
    elif ref_kind == "barenblatt":
        if ctx.barenblatt_params is None:
            raise ReferenceUnavailable(
                "self-similar reference needs the matching initial datum"
            )
        bp = ctx.barenblatt_params
        oracle = lambda t: barenblatt_field(bp, ctx.grid, bp.t0 + t)
        ref_desc = f"barenblatt m={bp.m} t0={bp.t0}"
    elif ref_kind != "none":
        raise ReferenceUnavailable(f"unknown reference kind {ref_kind!r}")

    rows = []
    trajectories = [] if config.keep_trajectories else None
    ref_final = None
    prev = None
    for n in step_list:
        t_start = time.perf_counter()
        traj = integrate(ctx.scheme, ctx.problem, ctx.pou, ctx.eta, duration, n,
                         ctx.solver, threads=threads)
        wall_ms = (time.perf_counter() - t_start) * 1e3
        newton_total = sum(st.newton_iters for st in traj.stats)

        e_final = float("nan")
        e_sup = float("nan")
        extras = {}
        if ref_kind == "backward_euler":
            stride = (len(ref_states) - 1) // n
            errs = []
            for k in range(1, n + 1):
                diff = Field(ctx.grid, traj.states[k].values - ref_states[k * stride].values)
                errs.append(pivot_norm(ctx.problem, diff))
            e_final = errs[-1]
            e_sup = max(errs)
            ref_final = ref_states[-1]
        elif ref_kind == "barenblatt":
            errs = []
            for k in range(1, n + 1):
                exact = oracle(traj.times[k])
                diff = Field(ctx.grid, traj.states[k].values - exact.values)
                errs.append(pivot_norm(ctx.problem, diff))
            e_final = errs[-1]
            e_sup = max(errs)
            exact = oracle(duration)
            ref_final = exact
            w = ctx.grid.node_weights
            l1_ref = float(np.sum(w * np.abs(exact.values)))
            l1_err = float(np.sum(w * np.abs(traj.final.values - exact.values)))
            extras["error_l1_rel"] = l1_err / l1_ref
            extras["error_pivot_rel"] = e_final / pivot_norm(ctx.problem, exact)

        order = float("nan")
        if prev is not None and prev[1] > 0 and e_final > 0:
            order = math.log(prev[1] / e_final) / math.log(n / prev[0])
        rows.append(ReportRow(n=n, h=duration / n, error_final=e_final,
                              error_sup=e_sup, observed_order=order, wall_ms=wall_ms,
                              newton_total=newton_total, extras=extras))
        prev = (n, e_final)
        if trajectories is not None:
            trajectories.append(traj)

    return ConvergenceReport(
        name=config.name,
        scheme_kind=ctx.scheme.kind,
        pivot=ctx.problem.pivot,
        reference=ref_desc,
        rows=rows,
        trajectories=trajectories,
        reference_final=ref_final,
    )


# ── Support probe ────────────────────────────────────────────────────────────


@dataclass
class ProbeRow:
    t: float
    radius: float
    cells_grown: float


def propagation_probe(trajectory, initial_support_radius, threshold=1e-8, center=None):
    """Support radius of ``{|u| > threshold}`` at every recorded time.

    ``cells_grown`` counts the growth relative to ``initial_support_radius``
    in units of the largest grid spacing.
    """
    grid = trajectory.states[0].grid
    dist = grid.radial_distance(center)
    dx = max(grid.dx)
    rows = []
    for t, state in zip(trajectory.times, trajectory.states):
        active = np.abs(state.values) > threshold
        radius = float(dist[active].max()) if np.any(active) else 0.0
        rows.append(ProbeRow(t=float(t), radius=radius,
                             cells_grown=(radius - initial_support_radius) / dx))
    return rows


# ── CSV emission ─────────────────────────────────────────────────────────────

CSV_HEADER = "n,h,error_final,error_sup,observed_order,wall_ms,newton_total"


def _fmt(x):
    return "%.17g" % x


def emit_csv(report, path, include_timing=False):
    """Write the error table; bytes are reproducible for a fixed config.

    The wall-clock column is zeroed unless ``include_timing`` is set, so two
    runs of the same experiment produce identical files; measured timings
    live in the report object and the plain-text summary.
    """
    lines = [CSV_HEADER]
    for i, row in enumerate(report.rows):
        order = "" if i == 0 else _fmt(row.observed_order)
        wall = _fmt(row.wall_ms) if include_timing else "0"
        lines.append(",".join([
            str(row.n), _fmt(row.h), _fmt(row.error_final), _fmt(row.error_sup),
            order, wall, str(row.newton_total),
        ]))
    data = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(data)
    return data


def read_csv(path):
    """Parse an emitted error table back into per-row dictionaries."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise InvalidConfig(f"unrecognized table header in {path}")
    names = CSV_HEADER.split(",")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        row = {}
        for name, part in zip(names, parts):
            if name == "n" or name == "newton_total":
                row[name] = int(part)
            elif name == "observed_order" and part == "":
                row[name] = float("nan")
            else:
                row[name] = float(part)
        rows.append(row)
    return rows


def summary_lines(report):
    """Human-readable run summary (with real timings)."""
    lines = [
        f"experiment: {report.name}",
        f"scheme: {report.scheme_kind}   pivot: {report.pivot}   reference: {report.reference}",
        f"{'n':>6} {'h':>12} {'err_final':>13} {'err_sup':>13} {'order':>8} "
        f"{'wall_ms':>10} {'newton':>8}",
    ]
    for i, row in enumerate(report.rows):
        order = "" if i == 0 else f"{row.observed_order:8.3f}"
        lines.append(
            f"{row.n:>6} {row.h:>12.5g} {row.error_final:>13.5e} {row.error_sup:>13.5e} "
            f"{order:>8} {row.wall_ms:>10.1f} {row.newton_total:>8}"
        )
        for key, val in sorted(row.extras.items()):
            lines.append(f"       {key} = {val:.5e}")
    return lines


# ── Property audits (CLI check) ──────────────────────────────────────────────


def random_smooth_field(grid, rng, amplitude=1.0, modes=3):
    """A random low-frequency field, normalized to the requested amplitude."""
    vals = np.zeros(grid.shape)
    coords = grid.node_coordinates()
    xi = [(coords[a] - grid.lo[a]) / (grid.hi[a] - grid.lo[a]) for a in range(grid.dim)]
    for m in range(1, modes + 1):
        cs = np.ones(grid.shape)
        sn = np.ones(grid.shape)
        for a in range(grid.dim):
            cs = cs * np.cos(m * np.pi * xi[a])
            sn = sn * np.sin(m * np.pi * xi[a])
        vals += (rng.standard_normal() * cs + rng.standard_normal() * sn) / m**2
    peak = np.max(np.abs(vals))
    if peak > 0:
        vals *= amplitude / peak
    return Field(grid, vals)


def run_check(config):
    """Structural audits for a config: cover, identity, dissipativity, map.

    Returns ``(passed, lines)`` where lines carry one PASS/FAIL entry per
    audit.
    """
    ctx = build_context(config)
    grid, pou, problem = ctx.grid, ctx.pou, ctx.problem
    rng = np.random.default_rng(ctx.config.seed)
    lines = []
    ok = True

    def record(label, passed, detail):
        nonlocal ok
        ok = ok and passed
        lines.append(f"{'PASS' if passed else 'FAIL'} {label}: {detail}")

    dev = abs(pou.node_weights.sum(axis=0) - 1.0).max()
    for a in range(grid.dim):
        dev = max(dev, abs(pou.face_weights[a].sum(axis=0) - 1.0).max())
    record("partition-of-unity sum", dev <= 1e-14, f"max deviation {dev:.2e}")

    lips = 0.0
    for k in range(pou.count):
        chi = Field(grid, pou.node_weights[k])
        for a in range(grid.dim):
            lips = max(lips, float(np.max(np.abs(np.diff(chi.values, axis=a) / grid.dx[a]))))
    bound = 1.0 / pou.overlap_width + 1e-12
    record("weight Lipschitz bound", lips <= bound, f"max slope {lips:.4g} <= {bound:.4g}")

    res = max(
        decomposition_residual(problem, pou, random_smooth_field(grid, rng))
        for _ in range(3)
    )
    record("decomposition identity", res <= 1e-12, f"relative residual {res:.2e}")

    gap = -np.inf
    ops = [full_operator(problem, grid)] + [sub_operator(problem, pou, k)
                                            for k in range(pou.count)]
    for op in ops:
        for _ in range(3):
            u = random_smooth_field(grid, rng, amplitude=0.5)
            v = random_smooth_field(grid, rng, amplitude=0.5)
            gap = max(gap, dissipativity_gap(problem, op, u, v))
    record("dissipativity", gap <= 1e-10, f"max pairing {gap:.2e}")

    report = check_coefficient_properties(problem.spec, sample_count=2000,
                                          domain_radius=5.0, seed=ctx.config.seed)
    record("coefficient map", report.passed, report.summary())

    subs = pou.subdomains
    sep = check_separating_condition(subs, grid)
    lines.append(f"INFO separating condition: {sep}")
    return ok, lines
