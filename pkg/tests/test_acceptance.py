"""Acceptance gate: ten end-to-end criteria with pinned tolerances.

Each test prints exactly one `[acceptance NN] ... PASS/FAIL` line (run pytest
with `-s` or check captured output).  Tolerances are fixed here on purpose —
they are the contract, not tuning knobs.  The expensive convergence studies
are shared module-scoped fixtures; their wall time is charged to the
criterion that owns them.
"""

import copy
import time
import warnings

import numpy as np
import pytest

from ddsplit import (
    DecompositionLayout,
    Field,
    ProblemKind,
    SchemeSpec,
    VectorFieldSpec,
    barenblatt_support_radius,
    build_context,
    build_grid,
    check_coefficient_properties,
    config_from_dict,
    decompose,
    decomposition_residual,
    dissipativity_gap,
    emit_csv,
    full_operator,
    linear_decay_perturbation,
    nonexpansivity_audit,
    operators_for,
    propagation_probe,
    random_smooth_field,
    run_convergence_study,
    step_backward_euler,
    step_lie,
    step_perturbed,
    step_sum,
    sub_operator,
)


def report(num, name, ok, detail):
    line = f"[acceptance {num:02d}] {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print("\n" + line, flush=True)
    assert ok, line


def lsq_order(ns, errors):
    """Least-squares slope of log(error) against log(h)."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    return float(np.polyfit(np.log(1.0 / ns), np.log(errors), 1)[0])


# ── Shared experiment configs ────────────────────────────────────────────────

GRADIENT_STUDY = {
    "name": "gradient-study",
    "grid": {"dim": 1, "n": 65, "lo": 0.0, "hi": 1.0},
    "layout": {"kind": "strips", "count": 2, "overlap": 0.25},
    "problem": {"family": "p_laplace_neumann",
                "alpha": {"kind": "p_laplace", "p": 3.0}},
    "scheme": {"kind": "lie_splitting"},
    "initial": {"id": "sin_plus_one"},
    "time": {"total": 0.25, "steps": [4, 8, 16, 32, 64, 128]},
    "reference": {"kind": "backward_euler", "factor": 16},
}

VALUE_STUDY = {
    "name": "value-study",
    "grid": {"dim": 1, "n": 201, "lo": -1.5, "hi": 1.5},
    "layout": {"kind": "strips", "count": 2, "overlap": 0.3},
    "problem": {"family": "porous_medium_dirichlet",
                "alpha": {"kind": "porous_medium", "p": 3.0}},
    "scheme": {"kind": "lie_splitting"},
    "initial": {"id": "barenblatt", "params": {"t0": 0.01, "mass": 1.0}},
    "time": {"total": 0.10, "steps": [512]},
    "reference": {"kind": "barenblatt"},
    "keep_trajectories": True,
}


def gradient_config(scheme_kind="lie_splitting", perturbed=False):
    raw = copy.deepcopy(GRADIENT_STUDY)
    raw["name"] = f"gradient-{scheme_kind}{'-perturbed' if perturbed else ''}"
    if perturbed:
        raw["scheme"] = {"kind": "perturbed_modified", "base": scheme_kind,
                         "perturbation": "linear_decay"}
    else:
        raw["scheme"] = {"kind": scheme_kind}
    return config_from_dict(raw)


def value_config(**overrides):
    raw = copy.deepcopy(VALUE_STUDY)
    for key, val in overrides.items():
        if isinstance(val, dict) and isinstance(raw.get(key), dict):
            raw[key].update(val)
        else:
            raw[key] = val
    return config_from_dict(raw)


def timed_study(config, threads=1):
    t0 = time.perf_counter()
    rep = run_convergence_study(config, threads=threads)
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def rep5_lie():
    return timed_study(gradient_config("lie_splitting"))


@pytest.fixture(scope="module")
def rep5_sum():
    return timed_study(gradient_config("sum_splitting"))


@pytest.fixture(scope="module")
def rep5_pert():
    return timed_study(gradient_config("lie_splitting", perturbed=True))


@pytest.fixture(scope="module")
def rep5_lie_threaded():
    return timed_study(gradient_config("lie_splitting"), threads=8)


@pytest.fixture(scope="module")
def rep6():
    return timed_study(value_config())


@pytest.fixture(scope="module")
def rep6_threaded():
    return timed_study(value_config(), threads=8)


def families_on(grid, layout):
    pou = decompose(grid, layout)
    return pou, [
        ProblemKind("p_laplace_neumann", VectorFieldSpec("p_laplace", p=3.0)),
        ProblemKind("porous_medium_dirichlet", VectorFieldSpec("porous_medium", p=3.0)),
    ]


# ── Criterion 1: decomposition identity ──────────────────────────────────────


def test_criterion_01_decomposition_identity():
    t0 = time.perf_counter()
    layouts = [
        (build_grid(1, 65, 0.0, 1.0), DecompositionLayout("strips", 2, 0.25)),
        (build_grid(1, 65, 0.0, 1.0), DecompositionLayout("strips", 3, 0.1)),
        (build_grid(1, 65, 0.0, 1.0), DecompositionLayout("separating", 2, 0.1)),
        (build_grid(2, 33, 0.0, 1.0), DecompositionLayout("blocks", 4, 0.15)),
    ]
    rng = np.random.default_rng(101)
    worst = 0.0
    for grid, layout in layouts:
        pou, problems = families_on(grid, layout)
        for problem in problems:
            for _ in range(20):
                u = random_smooth_field(grid, rng, amplitude=rng.uniform(0.5, 2.0))
                worst = max(worst, decomposition_residual(problem, pou, u))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10.0
    report(1, "weighted pieces sum to the full operator", ok,
           f"max relative residual {worst:.2e} <= 1e-12, {elapsed:.1f}s < 10s")


# ── Criterion 2: resolvents are nonexpansive ─────────────────────────────────


def test_criterion_02_resolvent_nonexpansivity():
    t0 = time.perf_counter()
    grid = build_grid(1, 65, 0.0, 1.0)
    pou, problems = families_on(grid, DecompositionLayout("strips", 2, 0.25))
    rng = np.random.default_rng(202)
    pairs = [(random_smooth_field(grid, rng, amplitude=rng.uniform(0.3, 2.0)),
              random_smooth_field(grid, rng, amplitude=rng.uniform(0.3, 2.0)))
             for _ in range(100)]
    worst = 0.0
    for problem in problems:
        for op in operators_for(problem, pou, include_full=True):
            for tau in (0.01, 0.1, 1.0):
                worst = max(worst, nonexpansivity_audit(op, tau, pairs))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 + 1e-7 and elapsed < 120.0
    report(2, "subdomain resolvents never expand the pivot norm", ok,
           f"worst ratio {worst:.9f} <= 1 + 1e-7, {elapsed:.1f}s < 120s")


# ── Criterion 3: dissipativity ───────────────────────────────────────────────


def test_criterion_03_dissipativity():
    t0 = time.perf_counter()
    grid = build_grid(1, 65, 0.0, 1.0)
    pou, problems = families_on(grid, DecompositionLayout("strips", 2, 0.25))
    rng = np.random.default_rng(303)
    worst = -np.inf
    for problem in problems:
        for op in operators_for(problem, pou, include_full=True):
            for _ in range(100):
                u = random_smooth_field(grid, rng, amplitude=rng.uniform(0.3, 2.0))
                v = random_smooth_field(grid, rng, amplitude=rng.uniform(0.3, 2.0))
                worst = max(worst, dissipativity_gap(problem, op, u, v))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 60.0
    report(3, "operators are dissipative in their pivot pairing", ok,
           f"max pairing {worst:.2e} <= 1e-10, {elapsed:.1f}s < 60s")


# ── Criterion 4: linear-case scheme oracle ───────────────────────────────────


def test_criterion_04_linear_scheme_oracle():
    t0 = time.perf_counter()
    grid = build_grid(1, 33, 0.0, 1.0)
    layout = DecompositionLayout("strips", 2, 0.2)
    pou = decompose(grid, layout)
    h = 0.02
    worst = 0.0
    for problem in (
        ProblemKind("p_laplace_neumann", VectorFieldSpec("p_laplace", p=2.0)),
        ProblemKind("porous_medium_dirichlet", VectorFieldSpec("porous_medium", p=2.0)),
    ):

        def dense(op):
            cols = []
            for j in range(grid.node_count):
                e = np.zeros(grid.node_count)
                e[j] = 1.0
                cols.append(op.apply(Field(grid, e.reshape(grid.shape))).values.ravel())
            return np.array(cols).T

        mats = [dense(op) for op in operators_for(problem, pou)]
        full = dense(full_operator(problem, grid))
        eye = np.eye(grid.node_count)
        u = random_smooth_field(grid, np.random.default_rng(404), amplitude=1.0)
        uf = u.values.ravel()

        be, _ = step_backward_euler(problem, h, u)
        exact_be = np.linalg.solve(eye - h * full, uf)
        su, _ = step_sum(problem, pou, h, u)
        exact_sum = 0.5 * (np.linalg.solve(eye - 2 * h * mats[0], uf)
                           + np.linalg.solve(eye - 2 * h * mats[1], uf))
        li, _ = step_lie(problem, pou, h, u)
        exact_lie = np.linalg.solve(eye - h * mats[1],
                                    np.linalg.solve(eye - h * mats[0], uf))
        for got, exact in ((be, exact_be), (su, exact_sum), (li, exact_lie)):
            rel = (np.linalg.norm(got.values.ravel() - exact)
                   / np.linalg.norm(exact))
            worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 10.0
    report(4, "p = 2 steps match dense resolvent algebra", ok,
           f"worst relative error {worst:.2e} <= 1e-9, {elapsed:.1f}s < 10s")


# ── Criterion 5: self-convergence of the gradient-flux study ─────────────────


def test_criterion_05_gradient_flux_convergence(rep5_lie, rep5_sum):
    (lie, t_lie), (summ, t_sum) = rep5_lie, rep5_sum
    elapsed = t_lie + t_sum
    problems = []
    details = []
    for label, rep, order_floor in (("sequential", lie, 0.8), ("averaged", summ, 0.4)):
        errs = rep.errors_final()
        for a, b in zip(errs, errs[1:]):
            if b > 1.05 * a:
                problems.append(f"{label}: error rose {a:.3e} -> {b:.3e}")
        if errs[-1] >= 1e-3:
            problems.append(f"{label}: final error {errs[-1]:.3e} >= 1e-3")
        order = lsq_order([r.n for r in rep.rows], errs)
        if order < order_floor:
            warnings.warn(
                f"{label} splitting order {order:.2f} below target {order_floor}"
                " while errors still decrease monotonically"
            )
        details.append(f"{label}: final {errs[-1]:.3e}, order {order:.2f}")
    ok = not problems and elapsed < 180.0
    report(5, "nonlinear gradient-flux study converges to the fine reference", ok,
           "; ".join(details + problems) + f", {elapsed:.1f}s < 180s")


# ── Criterion 6: value-flux study against the self-similar oracle ────────────


def test_criterion_06_value_flux_oracle_error(rep6):
    rep, elapsed = rep6
    row = rep.rows[-1]
    l1 = row.extras["error_l1_rel"]
    piv = row.extras["error_pivot_rel"]
    ok = l1 <= 5e-2 and piv <= 5e-2 and elapsed < 300.0
    report(6, "degenerate-diffusion run tracks the source solution", ok,
           f"rel L1 {l1:.3e} <= 5e-2, rel pivot {piv:.3e} <= 5e-2, "
           f"{elapsed:.1f}s < 300s")


# ── Criterion 7: free boundary and the fast-diffusion contrast ───────────────


def test_criterion_07_support_propagation(rep6):
    rep, _ = rep6
    ctx = build_context(value_config())
    traj = rep.trajectories[0]
    bp = ctx.barenblatt_params
    dx = max(ctx.grid.dx)
    rows = propagation_probe(traj, barenblatt_support_radius(bp, bp.t0))
    worst = max(abs(row.radius - barenblatt_support_radius(bp, bp.t0 + row.t)) / dx
                for row in rows)
    shrink = max(max(a.radius - b.radius for a, b in zip(rows, rows[1:])), 0.0)

    # Quadratic-growth contrast: the same datum under linear diffusion loses
    # its compact support immediately and covers every interior node.
    heat = run_convergence_study(value_config(
        name="value-heat-contrast",
        problem={"alpha": {"kind": "porous_medium", "p": 2.0}},
        initial={"id": "barenblatt", "params": {"t0": 0.01, "mass": 1.0, "m": 2.0}},
        reference={"kind": "none"},
    ))
    final = heat.trajectories[0].final
    interior_active = bool(np.all(np.abs(final.values[ctx.grid.interior_mask]) > 1e-8))

    ok = worst <= 3.0 and shrink <= 1e-12 and interior_active
    report(7, "free boundary tracks the similarity law; linear case fills the box",
           ok, f"max front deviation {worst:.2f} cells <= 3, shrink {shrink:.1e}, "
               f"interior saturated {interior_active}")


# ── Criterion 8: perturbed variants ──────────────────────────────────────────


def test_criterion_08_perturbed_variants(rep5_lie, rep5_pert):
    (lie, _), (pert, t_pert) = rep5_lie, rep5_pert
    cfg = gradient_config("lie_splitting")
    ctx = build_context(cfg)
    h = 0.05
    base, _ = step_lie(ctx.problem, ctx.pou, h, ctx.eta)
    g = linear_decay_perturbation()
    semi = SchemeSpec("perturbed_semi_implicit", base="lie_splitting", perturbation=g)
    modi = SchemeSpec("perturbed_modified", base="lie_splitting", perturbation=g)
    semi_out, _ = step_perturbed(semi, ctx.problem, ctx.pou, h, ctx.eta)
    modi_out, _ = step_perturbed(modi, ctx.problem, ctx.pou, h, ctx.eta)
    semi_err = float(np.max(np.abs(semi_out.values - (1.0 - h) * base.values)))
    modi_err = float(np.max(np.abs(modi_out.values - base.values / (1.0 + h))))

    ratios = [p / u for p, u in zip(pert.errors_final(), lie.errors_final())]
    worst_ratio = max(ratios)

    ok = semi_err <= 1e-10 and modi_err <= 1e-10 and worst_ratio <= 2.0
    report(8, "perturbed steps obey closed forms and stay comparable", ok,
           f"semi-implicit defect {semi_err:.1e} <= 1e-10, modified defect "
           f"{modi_err:.1e} <= 1e-10, worst error ratio {worst_ratio:.3f} <= 2")


# ── Criterion 9: bit-identical concurrency ───────────────────────────────────


def test_criterion_09_threaded_runs_are_bit_identical(tmp_path, rep5_lie,
                                                      rep5_lie_threaded, rep6,
                                                      rep6_threaded):
    pairs = [("gradient", rep5_lie[0], rep5_lie_threaded[0]),
             ("value", rep6[0], rep6_threaded[0])]
    same = []
    for label, serial, threaded in pairs:
        d1 = emit_csv(serial, tmp_path / f"{label}-serial.csv")
        d2 = emit_csv(threaded, tmp_path / f"{label}-threaded.csv")
        same.append(d1 == d2)
    ok = all(same)
    report(9, "1-thread and 8-thread runs emit identical tables", ok,
           f"gradient identical {same[0]}, value identical {same[1]}")


# ── Criterion 10: coefficient-map audit ──────────────────────────────────────


def test_criterion_10_coefficient_audit():
    t0 = time.perf_counter()
    good = [
        VectorFieldSpec("p_laplace", p=3.0),
        VectorFieldSpec("porous_medium", p=3.0),
        VectorFieldSpec("fast_diffusion", p=1.5),
        VectorFieldSpec("stefan", a=0.5, b=2.0),
    ]
    violations = {}
    for spec in good:
        rep = check_coefficient_properties(spec, sample_count=10_000, seed=7)
        violations[spec.kind] = rep.monotonicity_violations
        if not rep.passed:
            violations[spec.kind] = max(violations[spec.kind], 1)
    adv = check_coefficient_properties(VectorFieldSpec("adversarial"),
                                       sample_count=10_000, seed=7)
    elapsed = time.perf_counter() - t0
    clean = sum(violations.values()) == 0
    flagged = (not adv.passed) and adv.monotonicity_violations > 0
    ok = clean and flagged and elapsed < 5.0
    report(10, "randomized audit certifies the maps and flags the trap", ok,
           f"violations {violations} all zero, adversarial flagged {flagged}, "
           f"{elapsed:.1f}s < 5s")
