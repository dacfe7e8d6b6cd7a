"""Uniform tensor grids and the discrete calculus the time integrators build on.

Vertex-centered nodes, fluxes on the faces between adjacent nodes, trapezoidal
quadrature.  The difference and divergence operators form an exact transpose
pair under these weights, which is what makes the nonlinear solvers contract
in the discrete norms without any mesh-dependent slack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import GridMismatch, InvalidExtent, SingularOperator, TooCoarse

__all__ = [
    "Grid",
    "Field",
    "FluxField",
    "build_grid",
    "gradient",
    "divergence_neumann",
    "dirichlet_laplacian",
    "l2_inner",
    "l2_norm",
    "flux_inner",
    "hminus1_inner",
    "hminus1_norm",
]


# ── Grid and field containers ────────────────────────────────────────────────


class Grid:
    """Uniform 1D/2D tensor grid on a box, with cached discrete operators.

    Nodes sit at ``lo + i*dx`` with ``dx = (hi - lo)/(n - 1)`` per axis.  The
    constructor eagerly assembles everything the solvers reuse: trapezoid
    quadrature weights, per-axis difference matrices, the tangential-average
    matrices used by the 2D flux reconstruction, and the interior Dirichlet
    Laplacian together with its factorization.

    Use :func:`build_grid` rather than calling this directly.
    """

    def __init__(self, dim, n, lo, hi):
        if dim not in (1, 2):
            raise InvalidExtent(f"only 1D and 2D grids are supported, got dim={dim}")
        n = tuple(int(k) for k in n)
        lo = tuple(float(x) for x in lo)
        hi = tuple(float(x) for x in hi)
        if not (len(n) == len(lo) == len(hi) == dim):
            raise InvalidExtent("n, lo, hi must all have one entry per axis")
        for a in range(dim):
            if not np.isfinite(lo[a]) or not np.isfinite(hi[a]) or hi[a] <= lo[a]:
                raise InvalidExtent(f"axis {a}: need lo < hi, got [{lo[a]}, {hi[a]}]")
            if n[a] < 3:
                raise TooCoarse(f"axis {a}: need at least 3 nodes, got {n[a]}")

        self.dim = dim
        self.n = n
        self.lo = lo
        self.hi = hi
        self.dx = tuple((hi[a] - lo[a]) / (n[a] - 1) for a in range(dim))
        self.shape = n
        self.node_count = int(np.prod(n))
        self.axes = [np.linspace(lo[a], hi[a], n[a]) for a in range(dim)]

        # Trapezoid weights: half at the two ends of each axis, tensorized.
        self.axis_weights = []
        for a in range(dim):
            w = np.full(n[a], self.dx[a])
            w[0] *= 0.5
            w[-1] *= 0.5
            self.axis_weights.append(w)
        if dim == 1:
            self.node_weights = self.axis_weights[0].copy()
        else:
            self.node_weights = np.multiply.outer(self.axis_weights[0], self.axis_weights[1])
        self._w_flat = self.node_weights.ravel()

        bmask = np.zeros(n, dtype=bool)
        for a in range(dim):
            idx = [slice(None)] * dim
            idx[a] = 0
            bmask[tuple(idx)] = True
            idx[a] = n[a] - 1
            bmask[tuple(idx)] = True
        self.boundary_mask = bmask
        self.interior_mask = ~bmask
        self._int_flat = np.flatnonzero(self.interior_mask.ravel())
        # Map flat node id -> position in the interior ordering (-1 outside).
        self._int_pos = np.full(self.node_count, -1, dtype=np.int64)
        self._int_pos[self._int_flat] = np.arange(self._int_flat.size)
        self.interior_weight = float(np.prod(self.dx))

        # Face quadrature: face length along the axis times the transverse
        # trapezoid weight, so that div is the exact negative transpose of grad.
        self.face_shapes = []
        self.face_weights = []
        for a in range(dim):
            fshape = tuple(n[b] - 1 if b == a else n[b] for b in range(dim))
            self.face_shapes.append(fshape)
            if dim == 1:
                fw = np.full(fshape, self.dx[0])
            else:
                t = 1 - a
                fw = np.full(fshape, self.dx[a])
                tr = self.axis_weights[t]
                fw = fw * (tr if a == 0 else tr[:, None])
            self.face_weights.append(fw)

        self._diff = [self._difference_matrix(a) for a in range(dim)]
        self._tang = [self._tangential_matrix(a) for a in range(dim)] if dim == 2 else []
        self._lap_int = self._dirichlet_matrix()
        try:
            self._lap_lu = splu(self._lap_int.tocsc())
        except RuntimeError as exc:  # pragma: no cover - defensive
            raise SingularOperator(f"Dirichlet operator factorization failed: {exc}") from exc

    # -- operator assembly -------------------------------------------------

    def _difference_matrix(self, a):
        """Sparse map from node values to forward differences on axis-a faces."""
        fshape = self.face_shapes[a]
        nf = int(np.prod(fshape))
        idx = np.indices(fshape).reshape(self.dim, nf)
        lo_idx = idx.copy()
        hi_idx = idx.copy()
        hi_idx[a] += 1
        lo_flat = np.ravel_multi_index(tuple(lo_idx), self.shape)
        hi_flat = np.ravel_multi_index(tuple(hi_idx), self.shape)
        rows = np.concatenate([np.arange(nf), np.arange(nf)])
        cols = np.concatenate([lo_flat, hi_flat])
        vals = np.concatenate([np.full(nf, -1.0 / self.dx[a]), np.full(nf, 1.0 / self.dx[a])])
        return sp.csr_matrix((vals, (rows, cols)), shape=(nf, self.node_count))

    def _tangential_matrix(self, a):
        """Average of the adjacent transverse differences, at axis-a faces.

        At an interior face this is the mean of the four neighbouring
        differences along the other axis; at faces on the transverse hull only
        the two inward differences exist and the mean degrades gracefully.
        """
        t = 1 - a
        fshape = self.face_shapes[a]
        nf = int(np.prod(fshape))
        rows, cols, vals = [], [], []
        inv_dt = 1.0 / self.dx[t]
        for fid, midx in enumerate(np.ndindex(fshape)):
            it = midx[t]
            down = it > 0
            up = it < self.shape[t] - 1
            cnt = 2 * (int(down) + int(up))
            coef = inv_dt / cnt
            for off in (0, 1):  # the two endpoint nodes along axis a
                node = list(midx)
                node[a] += off
                if up:
                    plus = list(node)
                    plus[t] += 1
                    rows += [fid, fid]
                    cols += [np.ravel_multi_index(tuple(plus), self.shape),
                             np.ravel_multi_index(tuple(node), self.shape)]
                    vals += [coef, -coef]
                if down:
                    minus = list(node)
                    minus[t] -= 1
                    rows += [fid, fid]
                    cols += [np.ravel_multi_index(tuple(node), self.shape),
                             np.ravel_multi_index(tuple(minus), self.shape)]
                    vals += [coef, -coef]
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(nf, self.node_count))
        mat.sum_duplicates()
        return mat

    def _dirichlet_matrix(self):
        """Minus the Dirichlet Laplacian on interior nodes (SPD, C ordering)."""
        def second_diff(m, dx):
            e = np.ones(m)
            return sp.diags([-e, 2 * e, -e], [-1, 0, 1], shape=(m, m)) / dx**2

        if self.dim == 1:
            return second_diff(self.n[0] - 2, self.dx[0]).tocsr()
        tx = second_diff(self.n[0] - 2, self.dx[0])
        ty = second_diff(self.n[1] - 2, self.dx[1])
        ix = sp.identity(self.n[0] - 2)
        iy = sp.identity(self.n[1] - 2)
        return (sp.kron(tx, iy) + sp.kron(ix, ty)).tocsr()

    # -- geometry helpers ----------------------------------------------------

    def node_coordinates(self):
        """Per-axis coordinate arrays of shape ``grid.shape`` (ij indexing)."""
        if self.dim == 1:
            return [self.axes[0]]
        return list(np.meshgrid(*self.axes, indexing="ij"))

    def face_midpoints(self, a):
        """Per-axis coordinate arrays at the midpoints of axis-``a`` faces."""
        coords = []
        for b in range(self.dim):
            c = self.axes[b]
            if b == a:
                c = 0.5 * (c[:-1] + c[1:])
            coords.append(c)
        if self.dim == 1:
            return [coords[0]]
        return list(np.meshgrid(*coords, indexing="ij"))

    def radial_distance(self, center=None):
        """Euclidean distance of every node from ``center`` (domain midpoint)."""
        if center is None:
            center = [0.5 * (self.lo[a] + self.hi[a]) for a in range(self.dim)]
        coords = self.node_coordinates()
        r2 = np.zeros(self.shape)
        for a in range(self.dim):
            r2 = r2 + (coords[a] - center[a]) ** 2
        return np.sqrt(r2)

    def compatible(self, other):
        return (
            self.dim == other.dim
            and self.n == other.n
            and self.lo == other.lo
            and self.hi == other.hi
        )

    def __repr__(self):
        return f"Grid(dim={self.dim}, n={self.n}, lo={self.lo}, hi={self.hi})"


@dataclass
class Field:
    """Nodal values on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridMismatch(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def copy(self):
        return Field(self.grid, self.values.copy())


@dataclass
class FluxField:
    """One value per interior face, per axis."""

    grid: Grid
    values: list

    def __post_init__(self):
        if len(self.values) != self.grid.dim:
            raise GridMismatch("need one face array per axis")
        self.values = [np.asarray(v, dtype=float) for v in self.values]
        for a, v in enumerate(self.values):
            if v.shape != self.grid.face_shapes[a]:
                raise GridMismatch(
                    f"axis {a}: face shape {v.shape} != {self.grid.face_shapes[a]}"
                )


def build_grid(dim, n_per_axis, lo, hi):
    """Construct a uniform tensor grid.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    n_per_axis : int or sequence of int
        Node counts per axis (each at least 3); a scalar applies to all axes.
    lo, hi : float or sequence of float
        Box extents per axis, ``lo < hi``; scalars apply to all axes.

    Returns
    -------
    Grid
    """
    def _per_axis(x):
        if np.isscalar(x):
            return (x,) * dim
        return tuple(x)

    return Grid(dim, _per_axis(n_per_axis), _per_axis(lo), _per_axis(hi))


def _check_same(u, v):
    if u.grid is not v.grid and not u.grid.compatible(v.grid):
        raise GridMismatch("fields live on different grids")


# ── Discrete calculus ────────────────────────────────────────────────────────


def gradient(u):
    """Forward differences of ``u`` on the faces between adjacent nodes.

    The face value between nodes ``i`` and ``i+1`` along axis ``a`` is
    ``(u[i+1] - u[i]) / dx_a``.
    """
    g = u.grid
    return FluxField(g, [np.diff(u.values, axis=a) / g.dx[a] for a in range(g.dim)])


def divergence_neumann(q):
    """Negative transpose of :func:`gradient` under the node/face quadrature.

    Zero-flux boundary faces are implied: boundary nodes divide by their half
    (quarter, at 2D corners) trapezoid weight, so ``<div q, v> = -<q, grad v>``
    holds exactly for every pair of fields.
    """
    g = q.grid
    out = np.zeros(g.shape)
    for a in range(g.dim):
        pad = [(0, 0)] * g.dim
        pad[a] = (1, 1)
        padded = np.pad(q.values[a], pad)
        jump = np.diff(padded, axis=a)
        w = g.axis_weights[a]
        if g.dim == 2 and a == 1:
            w = w[None, :]
        elif g.dim == 2:
            w = w[:, None]
        out += jump / w
    return Field(g, out)


def dirichlet_laplacian(w):
    """Five-point (three-point in 1D) Laplacian with zero Dirichlet data.

    Boundary entries of ``w`` are ignored; the output is zero on the boundary.
    Applied through the same assembled interior matrix that backs the
    negative-order inner product, so the two stay consistent to rounding.
    """
    g = w.grid
    out = np.zeros(g.node_count)
    interior = w.values.ravel()[g._int_flat]
    out[g._int_flat] = -(g._lap_int @ interior)
    return Field(g, out.reshape(g.shape))


# ── Inner products ───────────────────────────────────────────────────────────


def l2_inner(u, v):
    """Trapezoid-quadrature L2 inner product of two nodal fields."""
    _check_same(u, v)
    return float(np.sum(u.grid.node_weights * u.values * v.values))


def l2_norm(u):
    return float(np.sqrt(max(l2_inner(u, u), 0.0)))


def flux_inner(q, r):
    """Face-quadrature inner product of two flux fields."""
    _check_same(q, r)
    total = 0.0
    for a in range(q.grid.dim):
        total += float(np.sum(q.grid.face_weights[a] * q.values[a] * r.values[a]))
    return total


def hminus1_inner(u, v):
    """Negative-order inner product ``<u, L^{-1} v>`` on interior nodes.

    ``L`` is minus the Dirichlet Laplacian of this grid; its factorization is
    cached on the grid.  Boundary values of ``u`` and ``v`` do not enter.
    """
    _check_same(u, v)
    g = u.grid
    ui = u.values.ravel()[g._int_flat]
    vi = v.values.ravel()[g._int_flat]
    sol = g._lap_lu.solve(vi)
    if not np.all(np.isfinite(sol)):  # pragma: no cover - defensive
        raise SingularOperator("Dirichlet solve produced non-finite values")
    return float(g.interior_weight * np.dot(ui, sol))


def hminus1_norm(u):
    return float(np.sqrt(max(hminus1_inner(u, u), 0.0)))
