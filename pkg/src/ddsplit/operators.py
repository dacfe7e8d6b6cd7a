"""Weighted sub-operators: the localized pieces the splitting schemes sum.

Both problem families are realized so that their energy pairing is an exact
transpose identity at the discrete level:

* gradient-flux family (zero-flux boundary): the flux through each face is
  the coefficient map evaluated on the reconstructed gradient vector at the
  face midpoint, and the divergence is the exact negative transpose of that
  reconstruction under the node/face quadrature.  In 2D each of the two face
  families sees the full gradient, so their contributions carry a factor
  1/2; in 1D the factor is 1 and the operator is literally
  ``divergence_neumann(chi * alpha(gradient u))``.

* value-flux family (zero boundary values): ``laplacian(chi * alpha(u))``
  through the same assembled interior matrix that backs the negative-order
  inner product.

Together with pointwise monotonicity of the coefficient map this makes the
dissipativity pairing nonpositive to rounding, for the full operator and for
every weighted piece — there is no mesh-dependent defect to track.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .decomposition import PartitionOfUnity, support_closure
from .errors import InvalidCoefficient
from .grid import Field, Grid, hminus1_inner, hminus1_norm, l2_inner, l2_norm
from .vectorfields import SCALAR_KINDS, VectorFieldSpec, alpha, alpha_jacobian

__all__ = [
    "FULL",
    "P_LAPLACE_NEUMANN",
    "POROUS_MEDIUM_DIRICHLET",
    "ProblemKind",
    "SubOperator",
    "sub_operator",
    "full_operator",
    "operators_for",
    "apply_operator",
    "decomposition_residual",
    "dissipativity_gap",
    "pivot_inner",
    "pivot_norm",
]

FULL = -1

P_LAPLACE_NEUMANN = "p_laplace_neumann"
POROUS_MEDIUM_DIRICHLET = "porous_medium_dirichlet"


@dataclass(frozen=True)
class ProblemKind:
    """Problem family plus its coefficient map.

    The gradient-flux family pairs with the trapezoid L2 inner product; the
    value-flux family evolves in the negative-order norm built from the same
    Dirichlet operator it applies, which is what keeps its resolvents
    contractive on the discrete level.
    """

    family: str
    spec: VectorFieldSpec

    def __post_init__(self):
        if self.family not in (P_LAPLACE_NEUMANN, POROUS_MEDIUM_DIRICHLET):
            raise InvalidCoefficient(f"unknown family {self.family!r}")
        if self.family == P_LAPLACE_NEUMANN and self.spec.kind != "p_laplace":
            raise InvalidCoefficient(
                "gradient-flux family needs the vector power map 'p_laplace'"
            )
        if self.family == POROUS_MEDIUM_DIRICHLET and self.spec.kind not in SCALAR_KINDS:
            raise InvalidCoefficient(
                f"value-flux family needs a scalar map, got {self.spec.kind!r}"
            )

    @property
    def pivot(self):
        return "l2" if self.family == P_LAPLACE_NEUMANN else "hminus1"


def pivot_inner(problem, u, v):
    """Inner product of the pivot space the family evolves in."""
    if problem.pivot == "l2":
        return l2_inner(u, v)
    return hminus1_inner(u, v)


def pivot_norm(problem, u):
    if problem.pivot == "l2":
        return l2_norm(u)
    return hminus1_norm(u)


class SubOperator:
    """One weighted piece of the diffusion operator (or the full operator).

    ``index`` is the subdomain number, or :data:`FULL` for the unweighted
    operator.  The action vanishes outside ``support`` and depends only on
    values inside it, so resolvents reduce to independent solves on the
    connected components of the support.
    """

    def __init__(self, problem, grid, index, chi_node, chi_faces, support):
        self.problem = problem
        self.grid = grid
        self.index = index
        self.chi_node = np.asarray(chi_node, dtype=float)
        self.chi_node_flat = self.chi_node.ravel()
        self.chi_faces = [np.asarray(c, dtype=float) for c in chi_faces]
        self.support = np.asarray(support, dtype=bool)

        # Face scale: quadrature weight x partition weight x family factor.
        self.face_scale = [
            (grid.face_weights[a] * self.chi_faces[a]).ravel() / grid.dim
            for a in range(grid.dim)
        ]
        labels, count = ndimage.label(self.support, structure=np.ones((3,) * grid.dim, bool))
        flat = labels.ravel()
        self.components = [np.flatnonzero(flat == c + 1) for c in range(count)]

    # -- action --------------------------------------------------------------

    def _face_vectors(self, a, u_flat):
        g = self.grid
        cols = []
        for c in range(g.dim):
            op = g._diff[a] if c == a else g._tang[a]
            cols.append(op @ u_flat)
        return np.stack(cols, axis=-1)

    def apply(self, u):
        """Evaluate the weighted operator at ``u``; zero outside the support."""
        g = self.grid
        if self.problem.family == P_LAPLACE_NEUMANN:
            u_flat = u.values.ravel()
            out = np.zeros(g.node_count)
            for a in range(g.dim):
                z = self._face_vectors(a, u_flat)
                flux = alpha(self.problem.spec, z)
                for c in range(g.dim):
                    op = g._diff[a] if c == a else g._tang[a]
                    out += op.T @ (self.face_scale[a] * flux[:, c])
            return Field(g, (-out / g._w_flat).reshape(g.shape))
        # value-flux family: laplacian of the weighted map, zero boundary data
        anode = alpha(self.problem.spec, u.values)
        prod = self.chi_node * anode
        out = np.zeros(g.node_count)
        out[g._int_flat] = -(g._lap_int @ prod.ravel()[g._int_flat])
        return Field(g, out.reshape(g.shape))


def sub_operator(problem, pou, index):
    """The weighted operator of subdomain ``index`` of a partition of unity."""
    grid = pou.grid
    return SubOperator(
        problem, grid, index,
        chi_node=pou.node_weights[index],
        chi_faces=[pou.face_weights[a][index] for a in range(grid.dim)],
        support=support_closure(pou, index),
    )


def full_operator(problem, grid):
    """The unweighted operator on the whole grid."""
    ones_node = np.ones(grid.shape)
    ones_faces = [np.ones(grid.face_shapes[a]) for a in range(grid.dim)]
    return SubOperator(problem, grid, FULL, ones_node, ones_faces,
                       np.ones(grid.shape, dtype=bool))


def operators_for(problem, pou, include_full=False):
    ops = [sub_operator(problem, pou, k) for k in range(pou.count)]
    if include_full:
        ops.append(full_operator(problem, pou.grid))
    return ops


def apply_operator(op, u):
    return op.apply(u)


# ── Structural diagnostics ───────────────────────────────────────────────────


def decomposition_residual(problem, pou, u):
    """Relative L2 defect between the full operator and the sum of its pieces.

    The partition weights sum to one at every node and face midpoint, so this
    is zero up to rounding for any field and any admissible layout.
    """
    grid = pou.grid
    total = np.zeros(grid.shape)
    for k in range(pou.count):
        total += sub_operator(problem, pou, k).apply(u).values
    full = full_operator(problem, grid).apply(u)
    defect = l2_norm(Field(grid, total - full.values))
    return defect / max(1.0, l2_norm(full))


def dissipativity_gap(problem, op, u, v):
    """Pivot pairing ``<op(u) - op(v), u - v>``; nonpositive to rounding."""
    grid = op.grid
    du = Field(grid, op.apply(u).values - op.apply(v).values)
    dv = Field(grid, u.values - v.values)
    return pivot_inner(problem, du, dv)
