"""Splitting time steppers built from the subdomain resolvents.

One step of size ``h`` from state ``u``:

* averaged splitting: ``(1/s) * sum_k (I - h*s*f_k)^{-1} u`` — the subdomain
  solves are independent and may run concurrently; the average is always
  taken in ascending subdomain order so results are bit-reproducible.
* multiplicative (sequential) splitting: sweep ``(I - h*f_k)^{-1}`` over the
  subdomains in ascending order.
* implicit Euler: one resolvent of the full operator, used as the reference
  integrator.
* perturbed variants: wrap a base step ``B_h`` with a Lipschitz map ``g``,
  either solving ``w - h*g(w) = B_h u`` (modified) or applying
  ``(I + h*g) B_h u`` (semi-implicit).  Both need ``h < 1/M`` when the
  perturbation carries a positive shift constant ``M``.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DDSplitError, IntegrationError, InvalidStep, StepTooLarge
from .grid import Field
from .operators import full_operator, operators_for
from .resolvent import SolverConfig, solve_resolvent

__all__ = [
    "SchemeSpec",
    "Perturbation",
    "Trajectory",
    "StepStats",
    "step_sum",
    "step_lie",
    "step_backward_euler",
    "step_perturbed",
    "integrate",
    "SCHEME_KINDS",
]

SCHEME_KINDS = (
    "sum_splitting",
    "lie_splitting",
    "backward_euler",
    "perturbed_modified",
    "perturbed_semi_implicit",
)


@dataclass(frozen=True)
class Perturbation:
    """A Lipschitz map added to the split operator.

    func:
        Acts on the raw value array of a field.
    shift:
        One-sided (shift) constant M: ``<g(u)-g(v), u-v> <= M ||u-v||^2``.
        Step sizes must satisfy ``h < 1/M`` when M > 0.
    lipschitz:
        Plain Lipschitz bound, used by the fixed-point solve of the modified
        variant.
    resolve:
        Optional closed form for ``w - h*g(w) = rhs``; when absent the
        modified variant iterates ``w <- rhs + h*g(w)``.
    """

    name: str
    func: callable
    shift: float = 0.0
    lipschitz: float = 1.0
    resolve: callable = None


def linear_decay_perturbation():
    """g(u) = -u; its shift constant is zero and its resolvent is exact."""
    return Perturbation(
        name="linear_decay",
        func=lambda v: -v,
        shift=0.0,
        lipschitz=1.0,
        resolve=lambda h, rhs: rhs / (1.0 + h),
    )


PERTURBATIONS = {"linear_decay": linear_decay_perturbation}


@dataclass(frozen=True)
class SchemeSpec:
    """Which stepper to run, plus the optional perturbation."""

    kind: str
    base: str = "lie_splitting"
    perturbation: Perturbation = None
    sweep: tuple = None   # optional subdomain order for the sequential sweep

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise InvalidStep(f"unknown scheme kind {self.kind!r}")
        if self.kind.startswith("perturbed"):
            if self.perturbation is None:
                raise InvalidStep(f"{self.kind} needs a perturbation")
            if self.base not in ("sum_splitting", "lie_splitting", "backward_euler"):
                raise InvalidStep(f"invalid base scheme {self.base!r}")

    @property
    def is_perturbed(self):
        return self.kind.startswith("perturbed")


@dataclass
class StepStats:
    newton_iters: int = 0
    residual: float = 0.0
    used_fallback: bool = False


@dataclass
class Trajectory:
    """Recorded states (including the initial one) and per-step solver stats."""

    times: np.ndarray
    states: list
    stats: list = field(default_factory=list)

    @property
    def final(self):
        return self.states[-1]


def _merge(stats, result):
    stats.newton_iters += result.iterations
    stats.residual = max(stats.residual, result.residual)
    stats.used_fallback = stats.used_fallback or result.used_fallback


# ── Single steps ─────────────────────────────────────────────────────────────


def step_sum(problem, pou, h, u_n, config=None, ops=None, executor=None):
    """One averaged-splitting step of size ``h``.

    Each subdomain resolvent uses the stretched step ``s*h``; the results are
    averaged in ascending subdomain order.

    Returns
    -------
    (Field, StepStats)
    """
    ops = ops if ops is not None else operators_for(problem, pou)
    s = len(ops)
    stats = StepStats()

    def solve_one(op):
        return solve_resolvent(op, s * h, u_n, config)

    if executor is not None and s > 1:
        results = list(executor.map(solve_one, ops))
    else:
        results = [solve_one(op) for op in ops]
    acc = np.zeros(u_n.grid.shape)
    for res in results:                      # ascending subdomain order
        acc += res.u.values
        _merge(stats, res)
    return Field(u_n.grid, acc / s), stats


def step_lie(problem, pou, h, u_n, config=None, ops=None, executor=None, sweep=None):
    """One sequential-splitting sweep of size ``h`` (ascending order)."""
    ops = ops if ops is not None else operators_for(problem, pou)
    order = list(sweep) if sweep is not None else list(range(len(ops)))
    stats = StepStats()
    u = u_n
    for k in order:
        res = solve_resolvent(ops[k], h, u, config, executor=executor)
        u = res.u
        _merge(stats, res)
    return u, stats


def step_backward_euler(problem, h, u_n, config=None, op=None, executor=None):
    """One implicit Euler step with the full (unweighted) operator."""
    op = op if op is not None else full_operator(problem, u_n.grid)
    res = solve_resolvent(op, h, u_n, config, executor=executor)
    stats = StepStats()
    _merge(stats, res)
    return res.u, stats


def _base_step(base, problem, pou, h, u_n, config, ops, full_op, executor, sweep):
    if base == "sum_splitting":
        return step_sum(problem, pou, h, u_n, config, ops=ops, executor=executor)
    if base == "lie_splitting":
        return step_lie(problem, pou, h, u_n, config, ops=ops, executor=executor,
                        sweep=sweep)
    return step_backward_euler(problem, h, u_n, config, op=full_op, executor=executor)


def step_perturbed(scheme, problem, pou, h, u_n, config=None, ops=None,
                   full_op=None, executor=None):
    """One perturbed step: base splitting step composed with the map ``g``."""
    pert = scheme.perturbation
    if pert.shift > 0 and h >= 1.0 / pert.shift:
        raise StepTooLarge(f"need h < {1.0 / pert.shift:.3g}, got h = {h:.3g}")
    base, stats = _base_step(scheme.base, problem, pou, h, u_n, config, ops,
                             full_op, executor, scheme.sweep)
    if scheme.kind == "perturbed_semi_implicit":
        return Field(u_n.grid, base.values + h * pert.func(base.values)), stats
    # modified variant: solve w - h*g(w) = base
    if pert.resolve is not None:
        return Field(u_n.grid, pert.resolve(h, base.values)), stats
    if h * pert.lipschitz >= 1.0:
        raise StepTooLarge(
            f"fixed-point solve needs h < {1.0 / pert.lipschitz:.3g} "
            f"for Lipschitz constant {pert.lipschitz:.3g}"
        )
    w = base.values.copy()
    scale = max(1.0, float(np.max(np.abs(base.values))))
    for _ in range(200):
        w_next = base.values + h * pert.func(w)
        if np.max(np.abs(w_next - w)) <= 1e-14 * scale:
            w = w_next
            break
        w = w_next
    return Field(u_n.grid, w), stats


# ── Time loop ────────────────────────────────────────────────────────────────


def integrate(scheme, problem, pou, eta, duration, steps, config=None,
              threads=1, record_states=True):
    """Run ``steps`` uniform steps of the chosen scheme over ``duration``.

    Parameters
    ----------
    scheme : SchemeSpec
    problem : ProblemKind
    pou : PartitionOfUnity or None
        Not needed for the pure implicit Euler scheme.
    eta : Field
        Initial state.
    duration : float
        Total integration time; the step size is ``duration / steps``.
    steps : int
    config : SolverConfig, optional
    threads : int
        Worker threads for the independent subdomain/component solves.
        Results are identical for any thread count.
    record_states : bool
        Keep every state (needed for shared-time error tables and support
        probes); otherwise only the final state is retained.

    Returns
    -------
    Trajectory
    """
    if steps < 1:
        raise InvalidStep(f"need at least one step, got {steps}")
    if not np.isfinite(duration) or duration <= 0:
        raise InvalidStep(f"duration must be positive, got {duration}")
    cfg = config or SolverConfig()
    h = duration / steps
    if scheme.is_perturbed and scheme.perturbation.shift > 0:
        if h >= 1.0 / scheme.perturbation.shift:
            raise StepTooLarge(
                f"h = {h:.3g} violates h < {1.0 / scheme.perturbation.shift:.3g}"
            )

    needs_pou = scheme.kind != "backward_euler" and not (
        scheme.is_perturbed and scheme.base == "backward_euler"
    )
    ops = operators_for(problem, pou) if needs_pou and pou is not None else None
    if needs_pou and ops is None:
        raise InvalidStep(f"scheme {scheme.kind} needs a partition of unity")
    full_op = full_operator(problem, eta.grid)

    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    times = np.linspace(0.0, duration, steps + 1)
    states = [eta.copy()]
    stats = []
    u = eta.copy()
    try:
        for k in range(steps):
            try:
                if scheme.kind == "sum_splitting":
                    u, st = step_sum(problem, pou, h, u, cfg, ops=ops, executor=executor)
                elif scheme.kind == "lie_splitting":
                    u, st = step_lie(problem, pou, h, u, cfg, ops=ops,
                                     executor=executor, sweep=scheme.sweep)
                elif scheme.kind == "backward_euler":
                    u, st = step_backward_euler(problem, h, u, cfg, op=full_op,
                                                executor=executor)
                else:
                    u, st = step_perturbed(scheme, problem, pou, h, u, cfg,
                                           ops=ops, full_op=full_op, executor=executor)
            except DDSplitError as exc:
                raise IntegrationError(
                    f"step {k + 1}/{steps} at t = {times[k + 1]:.6g} failed: {exc}",
                    step=k + 1, time=float(times[k + 1]),
                ) from exc
            if not np.all(np.isfinite(u.values)):
                raise IntegrationError(
                    f"step {k + 1}/{steps} produced non-finite values",
                    step=k + 1, time=float(times[k + 1]),
                )
            stats.append(st)
            if record_states:
                states.append(u.copy())
        if not record_states:
            states.append(u.copy())
            times = np.array([0.0, duration])
    finally:
        if executor is not None:
            executor.shutdown()
    return Trajectory(times=times, states=states, stats=stats)
