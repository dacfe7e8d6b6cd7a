"""Built-in experiment definitions.

These are complete, runnable configs: two convergence studies for the
gradient-flux family (sequential and averaged splitting against a fine
implicit Euler reference), a perturbed variant, and two porous-medium runs
(one against the self-similar oracle, one heat-equation contrast for the
support probe).  ``ddsplit demo <name>`` runs them; the test suite reuses
them as fixtures.
"""

from __future__ import annotations

import copy

from .errors import InvalidConfig
from .harness import config_from_dict

__all__ = ["DEMOS", "demo_names", "demo_config"]

_PLAPLACE_BASE = {
    "grid": {"dim": 1, "n": 65, "lo": 0.0, "hi": 1.0},
    "layout": {"kind": "strips", "count": 2, "overlap": 0.25},
    "problem": {"family": "p_laplace_neumann", "alpha": {"kind": "p_laplace", "p": 3.0}},
    "initial": {"id": "sin_plus_one"},
    "time": {"total": 0.25, "steps": [4, 8, 16, 32, 64, 128]},
    "reference": {"kind": "backward_euler", "factor": 16},
    "seed": 0,
}

_PME_BASE = {
    "grid": {"dim": 1, "n": 201, "lo": -1.5, "hi": 1.5},
    "layout": {"kind": "strips", "count": 2, "overlap": 0.3},
    "problem": {"family": "porous_medium_dirichlet",
                "alpha": {"kind": "porous_medium", "p": 3.0}},
    "initial": {"id": "barenblatt", "params": {"t0": 0.01, "mass": 1.0}},
    "time": {"total": 0.10, "steps": [512]},
    "reference": {"kind": "barenblatt"},
    "seed": 0,
    "keep_trajectories": True,
}


def _named(base, name, **overrides):
    raw = copy.deepcopy(base)
    raw["name"] = name
    for key, val in overrides.items():
        if isinstance(val, dict) and isinstance(raw.get(key), dict):
            raw[key] = {**raw[key], **val}
        else:
            raw[key] = val
    return raw


_RAW = {
    "plaplace-lie": _named(_PLAPLACE_BASE, "plaplace-lie",
                           scheme={"kind": "lie_splitting"}),
    "plaplace-sum": _named(_PLAPLACE_BASE, "plaplace-sum",
                           scheme={"kind": "sum_splitting"}),
    "plaplace-lie-perturbed": _named(
        _PLAPLACE_BASE, "plaplace-lie-perturbed",
        scheme={"kind": "perturbed_modified", "base": "lie_splitting",
                "perturbation": "linear_decay"}),
    "pme-barenblatt-lie": _named(_PME_BASE, "pme-barenblatt-lie",
                                 scheme={"kind": "lie_splitting"}),
    "pme-heat-contrast": _named(
        _PME_BASE, "pme-heat-contrast",
        problem={"family": "porous_medium_dirichlet",
                 "alpha": {"kind": "porous_medium", "p": 2.0}},
        initial={"id": "barenblatt", "params": {"t0": 0.01, "mass": 1.0, "m": 2.0}},
        scheme={"kind": "lie_splitting"},
        reference={"kind": "none"}),
}

DEMOS = dict(sorted(_RAW.items()))


def demo_names():
    return list(DEMOS)


def demo_config(name):
    """The named built-in experiment as a validated config."""
    if name not in DEMOS:
        raise InvalidConfig(
            f"unknown demo {name!r}; available: {', '.join(demo_names())}"
        )
    return config_from_dict(copy.deepcopy(DEMOS[name]))
