"""Nonlinear resolvent solves: linear oracles, residuals, and contraction.

For quadratic growth the resolvent is a sparse linear solve, checked against
a dense factorization.  Nonlinear solves are verified by back-substitution,
by exact locality, and by the contraction property that drives every
stability estimate downstream.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import numpy.testing as npt
import pytest

from ddsplit import (
    DecompositionLayout,
    Field,
    InvalidStep,
    NonConvergence,
    ProblemKind,
    SolverConfig,
    VectorFieldSpec,
    build_grid,
    decompose,
    full_operator,
    nonexpansivity_audit,
    pivot_norm,
    solve_resolvent,
    sub_operator,
    yosida_consistency,
)


def plaplace_problem(p=3.0):
    return ProblemKind("p_laplace_neumann", VectorFieldSpec("p_laplace", p=p))


def pme_problem(p=3.0):
    return ProblemKind("porous_medium_dirichlet", VectorFieldSpec("porous_medium", p=p))


def smooth_field(grid, seed=0, amplitude=1.0):
    rng = np.random.default_rng(seed)
    coords = grid.node_coordinates()
    vals = np.zeros(grid.shape)
    for m in range(1, 4):
        wave = np.ones(grid.shape)
        for a in range(grid.dim):
            xi = (coords[a] - grid.lo[a]) / (grid.hi[a] - grid.lo[a])
            wave = wave * np.cos(m * np.pi * xi + rng.uniform(0, 2 * np.pi))
        vals += rng.standard_normal() * wave / m**2
    return Field(grid, amplitude * vals / max(np.max(np.abs(vals)), 1e-12))


def dense_matrix(op):
    """Dense matrix of a linear operator by applying it to unit fields."""
    g = op.grid
    cols = []
    for j in range(g.node_count):
        e = np.zeros(g.node_count)
        e[j] = 1.0
        cols.append(op.apply(Field(g, e.reshape(g.shape))).values.ravel())
    return np.array(cols).T


# ── Config validation ────────────────────────────────────────────────────────


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol_abs=0.0)
    with pytest.raises(ValueError):
        SolverConfig(tol_abs=1e-3)  # looser than the supported ceiling
    with pytest.raises(ValueError):
        SolverConfig(max_newton=0)
    with pytest.raises(ValueError):
        SolverConfig(max_backtrack=0)
    with pytest.raises(ValueError):
        SolverConfig(fallback_picard=0)


def test_step_must_be_positive():
    g = build_grid(1, 17, 0.0, 1.0)
    op = full_operator(plaplace_problem(), g)
    u = smooth_field(g)
    for tau in (0.0, -0.1):
        with pytest.raises(InvalidStep):
            solve_resolvent(op, tau, u)


# ── Linear oracle ────────────────────────────────────────────────────────────


@pytest.mark.parametrize("family", ["gradient", "value"])
def test_p2_resolvent_matches_dense_solve(family):
    g = build_grid(1, 33, 0.0, 1.0)
    pou = decompose(g, DecompositionLayout("strips", 2, 0.2))
    problem = plaplace_problem(p=2.0) if family == "gradient" else pme_problem(p=2.0)
    tau = 0.05
    gfield = smooth_field(g, seed=1)
    for k in range(pou.count):
        op = sub_operator(problem, pou, k)
        A = dense_matrix(op)
        exact = np.linalg.solve(np.eye(g.node_count) - tau * A, gfield.values.ravel())
        got = solve_resolvent(op, tau, gfield).u.values.ravel()
        npt.assert_allclose(got, exact, rtol=1e-9, atol=1e-11)


# ── Back-substitution for nonlinear solves ───────────────────────────────────


@pytest.mark.parametrize("family,amplitude", [("gradient", 1.0), ("value", 0.8)])
def test_nonlinear_solution_satisfies_the_equation(family, amplitude):
    g = build_grid(1, 65, 0.0, 1.0)
    pou = decompose(g, DecompositionLayout("strips", 2, 0.2))
    problem = plaplace_problem() if family == "gradient" else pme_problem()
    cfg = SolverConfig()
    tau = 0.1
    gfield = smooth_field(g, seed=2, amplitude=amplitude)
    for k in range(pou.count):
        op = sub_operator(problem, pou, k)
        res = solve_resolvent(op, tau, gfield, cfg)
        defect = Field(g, res.u.values - tau * op.apply(res.u).values - gfield.values)
        budget = cfg.tol_abs + cfg.tol_rel * pivot_norm(problem, gfield)
        assert pivot_norm(problem, defect) <= 2 * budget
        assert res.residual <= budget


def test_resolvent_of_2d_blocks_satisfies_the_equation():
    g = build_grid(2, 17, 0.0, 1.0)
    pou = decompose(g, DecompositionLayout("blocks", 4, 0.25))
    problem = plaplace_problem()
    cfg = SolverConfig()
    gfield = smooth_field(g, seed=3)
    op = sub_operator(problem, pou, 0)
    res = solve_resolvent(op, 0.05, gfield, cfg)
    defect = Field(g, res.u.values - 0.05 * op.apply(res.u).values - gfield.values)
    budget = cfg.tol_abs + cfg.tol_rel * pivot_norm(problem, gfield)
    assert pivot_norm(problem, defect) <= 2 * budget


def test_resolvent_is_identity_outside_the_support():
    g = build_grid(1, 65, 0.0, 1.0)
    pou = decompose(g, DecompositionLayout("strips", 2, 0.2))
    problem = plaplace_problem()
    gfield = smooth_field(g, seed=4)
    op = sub_operator(problem, pou, 0)
    res = solve_resolvent(op, 0.1, gfield)
    outside = ~op.support
    assert outside.any()
    npt.assert_array_equal(res.u.values[outside], gfield.values[outside])


def test_zero_state_is_a_fixed_point():
    g = build_grid(1, 33, 0.0, 1.0)
    op = full_operator(plaplace_problem(), g)
    zero = Field(g, np.zeros(g.shape))
    res = solve_resolvent(op, 0.3, zero)
    npt.assert_array_equal(res.u.values, 0.0)
    assert res.iterations == 0


# ── Contraction ──────────────────────────────────────────────────────────────


@pytest.mark.parametrize("family", ["gradient", "value"])
def test_resolvents_are_nonexpansive(family):
    g = build_grid(1, 65, 0.0, 1.0)
    pou = decompose(g, DecompositionLayout("strips", 2, 0.2))
    problem = plaplace_problem() if family == "gradient" else pme_problem()
    rng = np.random.default_rng(5)
    pairs = [(smooth_field(g, seed=i, amplitude=rng.uniform(0.3, 2.0)),
              smooth_field(g, seed=i + 50, amplitude=rng.uniform(0.3, 2.0)))
             for i in range(5)]
    for index in (0, 1):
        op = sub_operator(problem, pou, index)
        for tau in (0.01, 0.5):
            assert nonexpansivity_audit(op, tau, pairs) <= 1.0 + 1e-7


def test_yosida_defect_decreases_with_the_step():
    # The regularized decomposition approaches the full map once the step
    # resolves the grid stiffness (~dx^-2), hence the small steps here.
    g = build_grid(1, 17, 0.0, 1.0)
    pou = decompose(g, DecompositionLayout("strips", 2, 0.2))
    problem = plaplace_problem()
    x = g.axes[0]
    u = Field(g, np.sin(np.pi * x) + 0.3 * np.sin(2 * np.pi * x))
    rows = yosida_consistency(problem, pou, u, [1e-3, 1e-5, 1e-7])
    defects = [d for _, d in rows]
    assert defects[2] < defects[1] < defects[0]
    assert defects[2] < 0.01 * defects[0]


# ── Failure modes ────────────────────────────────────────────────────────────


def test_nonconvergence_carries_diagnostics():
    g = build_grid(1, 65, 0.0, 1.0)
    op = full_operator(plaplace_problem(p=4.0), g)
    gfield = smooth_field(g, seed=7, amplitude=3.0)
    tiny = SolverConfig(max_newton=1, max_backtrack=1, fallback_picard=1)
    with pytest.raises(NonConvergence) as info:
        solve_resolvent(op, 5.0, gfield, tiny)
    err = info.value
    assert err.best is not None
    assert np.all(np.isfinite(np.asarray(err.best)))
    assert np.isfinite(err.residual) and err.residual > 0
    assert err.iterations >= 1


# ── Determinism under threading ──────────────────────────────────────────────


@pytest.mark.parametrize("family", ["gradient", "value"])
def test_component_solves_are_bit_identical_under_threads(family):
    # The separating layout gives the collar several disjoint components, so
    # the executor actually distributes work.
    g = build_grid(1, 129, 0.0, 1.0)
    pou = decompose(g, DecompositionLayout("separating", 2, 0.05))
    problem = plaplace_problem() if family == "gradient" else pme_problem()
    gfield = smooth_field(g, seed=8)
    op = sub_operator(problem, pou, pou.count - 1)
    assert len(op.components) >= 2
    serial = solve_resolvent(op, 0.1, gfield).u.values
    with ThreadPoolExecutor(max_workers=4) as pool:
        threaded = solve_resolvent(op, 0.1, gfield, executor=pool).u.values
    npt.assert_array_equal(serial, threaded)
