"""Overlapping subdomain layouts and piecewise-linear partitions of unity.

Subdomains are unions of axis-aligned, grid-snapped boxes.  Each box carries
a product of per-axis hat ramps: along every axis the weight rises linearly
from zero at a non-boundary box side to one at depth ``overlap_width``.  The
product form keeps the normalized weights exact: for tensor covers (strips,
blocks) the normalization factorizes axis by axis, so the per-axis slope of
every weight stays bounded by ``1/overlap_width`` — a plain minimum-distance
ramp loses that bound where perpendicular overlap bands cross.  The
separating layout (interior pieces shielded from the hull by one collar) is
assembled hierarchically instead: the interior pieces share a hat supported
on the inner box and the collar carries its complement, which again makes
the sums and the slope bound exact.  Weights are evaluated analytically at
nodes and at face midpoints (no mollification).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InfeasibleLayout, UncoveredNode
from .grid import Grid

__all__ = [
    "Box",
    "Subdomain",
    "DecompositionLayout",
    "PartitionOfUnity",
    "build_decomposition",
    "build_partition_of_unity",
    "decompose",
    "check_separating_condition",
    "support_closure",
    "snapped_overlap",
]


@dataclass(frozen=True)
class Box:
    """Inclusive node-index ranges, one (lo, hi) pair per axis."""

    lo: tuple
    hi: tuple

    def contains_node_grid(self, grid):
        """Boolean node mask of this box on ``grid``."""
        mask = np.ones(grid.shape, dtype=bool)
        for a in range(grid.dim):
            idx = np.arange(grid.n[a])
            axis_mask = (idx >= self.lo[a]) & (idx <= self.hi[a])
            shape = [1] * grid.dim
            shape[a] = grid.n[a]
            mask &= axis_mask.reshape(shape)
        return mask


@dataclass
class Subdomain:
    """A union of pairwise-disjoint axis-aligned node boxes."""

    id: int
    components: list
    node_mask: np.ndarray = field(repr=False, default=None)

    def attach_grid(self, grid):
        masks = [box.contains_node_grid(grid) for box in self.components]
        total = np.zeros(grid.shape, dtype=np.int8)
        for m in masks:
            total += m
        if np.any(total > 1):
            raise InfeasibleLayout(f"subdomain {self.id}: components share nodes")
        self.node_mask = total.astype(bool)
        return self


@dataclass
class DecompositionLayout:
    """Declarative description of an overlapping cover.

    kind:
        ``"strips"`` cuts the domain along ``axis``; ``"blocks"`` crosses
        strips on both axes (2D); ``"separating"`` builds interior subdomains
        plus one boundary collar that is the only subdomain touching the hull.
    count:
        Number of subdomains.
    overlap:
        Requested physical overlap width; snapped to whole cells (at least 2).
    """

    kind: str
    count: int
    overlap: float
    axis: int = 0

    def __post_init__(self):
        if self.kind not in ("strips", "blocks", "separating"):
            raise InfeasibleLayout(f"unknown layout kind {self.kind!r}")
        if self.count < 1:
            raise InfeasibleLayout("count must be at least 1")
        if not np.isfinite(self.overlap) or self.overlap <= 0:
            raise InfeasibleLayout("overlap must be positive")


@dataclass
class PartitionOfUnity:
    """Normalized weights at nodes and face midpoints, plus support masks."""

    grid: Grid
    subdomains: list
    node_weights: np.ndarray          # (s, *grid.shape)
    face_weights: list                # per axis: (s, *face_shape)
    support: np.ndarray               # (s, *grid.shape) bool
    overlap_width: float

    @property
    def count(self):
        return len(self.subdomains)


# ── Layout construction ──────────────────────────────────────────────────────


def _overlap_cells(grid, layout):
    cells = [int(round(layout.overlap / grid.dx[a])) for a in range(grid.dim)]
    for a, c in enumerate(cells):
        if c < 2:
            raise InfeasibleLayout(
                f"axis {a}: overlap {layout.overlap} snaps below two cells (dx={grid.dx[a]})"
            )
    return cells


def snapped_overlap(grid, layout):
    """Physical overlap width after snapping to whole cells (min over axes)."""
    cells = _overlap_cells(grid, layout)
    return min(c * grid.dx[a] for a, c in enumerate(cells))


def _strip_ranges(n_nodes, count, ov):
    """Index ranges for ``count`` strips with exact ``ov``-cell overlaps."""
    cells = n_nodes - 1
    if count == 1:
        return [(0, n_nodes - 1)]
    if cells // count < ov:
        raise InfeasibleLayout(
            f"{count} strips with {ov}-cell overlap do not fit on {cells} cells"
        )
    cuts = [round(k * cells / count) for k in range(count + 1)]
    if any(cuts[k + 1] <= cuts[k] for k in range(count)):
        raise InfeasibleLayout("strip cuts collapsed; grid too coarse")
    lo_half = ov // 2
    hi_half = ov - lo_half
    ranges = []
    for k in range(count):
        lo = cuts[k] - (lo_half if k > 0 else 0)
        hi = cuts[k + 1] + (hi_half if k < count - 1 else 0)
        if lo < 0 or hi > n_nodes - 1 or hi - lo < ov + 1:
            raise InfeasibleLayout("strip extension leaves the grid or degenerates")
        ranges.append((lo, hi))
    # Overlap bands must stay pairwise: a node shared by three strips would
    # break the exact pairwise ramp sums.
    for k in range(count - 2):
        if ranges[k][1] > ranges[k + 2][0]:
            raise InfeasibleLayout("strips overlap beyond neighbors; reduce overlap")
    return ranges


def _full_range(grid, a):
    return (0, grid.n[a] - 1)


def _strips(grid, layout, ov_cells):
    a = layout.axis
    if a >= grid.dim:
        raise InfeasibleLayout(f"strip axis {a} out of range for dim {grid.dim}")
    ranges = _strip_ranges(grid.n[a], layout.count, ov_cells[a])
    subs = []
    for k, (lo, hi) in enumerate(ranges):
        lo_t = [0] * grid.dim
        hi_t = [grid.n[b] - 1 for b in range(grid.dim)]
        lo_t[a], hi_t[a] = lo, hi
        subs.append(Subdomain(k, [Box(tuple(lo_t), tuple(hi_t))]))
    return subs


def _blocks(grid, layout, ov_cells):
    if grid.dim != 2:
        raise InfeasibleLayout("block layouts need a 2D grid")
    s = layout.count
    sx = int(np.floor(np.sqrt(s)))
    while sx > 1 and s % sx != 0:
        sx -= 1
    sy = s // sx
    rx = _strip_ranges(grid.n[0], sx, ov_cells[0])
    ry = _strip_ranges(grid.n[1], sy, ov_cells[1])
    subs = []
    for ix in range(sx):
        for iy in range(sy):
            box = Box((rx[ix][0], ry[iy][0]), (rx[ix][1], ry[iy][1]))
            subs.append(Subdomain(ix * sy + iy, [box]))
    return subs


def _separating(grid, layout, ov_cells):
    """Interior subdomains plus a boundary collar as the last subdomain."""
    s = layout.count
    if s < 2:
        raise InfeasibleLayout("separating layouts need at least 2 subdomains")
    margin = list(ov_cells)  # collar thickness before the overlap zone
    inner_lo = [margin[a] for a in range(grid.dim)]
    inner_hi = [grid.n[a] - 1 - margin[a] for a in range(grid.dim)]
    for a in range(grid.dim):
        if inner_hi[a] - inner_lo[a] < ov_cells[a] + 2:
            raise InfeasibleLayout("grid too coarse for a separating collar")

    # Interior strips along axis 0 inside the inner box.
    a0 = 0
    inner_nodes = inner_hi[a0] - inner_lo[a0] + 1
    ranges = _strip_ranges(inner_nodes, s - 1, ov_cells[a0])
    # Interior cut ramps must clear the collar transition band; otherwise two
    # ramps would stack along one axis and break the weight slope bound.
    ov0 = ov_cells[a0]
    limit = inner_nodes - 1 - ov0
    for k, (lo, hi) in enumerate(ranges):
        if k > 0 and (lo < ov0 or lo + ov0 > limit):
            raise InfeasibleLayout("interior strip ramp meets the collar band")
        if k < len(ranges) - 1 and (hi > limit or hi - ov0 < ov0):
            raise InfeasibleLayout("interior strip ramp meets the collar band")
    subs = []
    for k, (lo, hi) in enumerate(ranges):
        lo_t = list(inner_lo)
        hi_t = list(inner_hi)
        lo_t[a0] = inner_lo[a0] + lo
        hi_t[a0] = inner_lo[a0] + hi
        subs.append(Subdomain(k, [Box(tuple(lo_t), tuple(hi_t))]))

    reach = [margin[a] + ov_cells[a] for a in range(grid.dim)]
    if grid.dim == 1:
        n0 = grid.n[0]
        collar = [Box((0,), (reach[0],)), Box((n0 - 1 - reach[0],), (n0 - 1,))]
    else:
        nx, ny = grid.n
        collar = [
            Box((0, 0), (reach[0], ny - 1)),                       # left
            Box((nx - 1 - reach[0], 0), (nx - 1, ny - 1)),          # right
            Box((reach[0] + 1, 0), (nx - 2 - reach[0], reach[1])),  # bottom middle
            Box((reach[0] + 1, ny - 1 - reach[1]), (nx - 2 - reach[0], ny - 1)),  # top
        ]
    subs.append(Subdomain(s - 1, collar))
    return subs


def build_decomposition(grid, layout):
    """Build the overlapping subdomain cover described by ``layout``.

    Returns a list of :class:`Subdomain` with node masks attached.  Raises
    :class:`InfeasibleLayout` when the requested cover does not fit.
    """
    ov_cells = _overlap_cells(grid, layout)
    if layout.kind == "strips":
        subs = _strips(grid, layout, ov_cells)
    elif layout.kind == "blocks":
        subs = _blocks(grid, layout, ov_cells)
    else:
        subs = _separating(grid, layout, ov_cells)
    for sub in subs:
        sub.attach_grid(grid)
    covered = np.zeros(grid.shape, dtype=bool)
    for sub in subs:
        covered |= sub.node_mask
    if not covered.all():
        raise InfeasibleLayout("layout leaves nodes uncovered")
    return subs


# ── Partition of unity ───────────────────────────────────────────────────────


def _box_physical(grid, box):
    lo = [grid.axes[a][box.lo[a]] for a in range(grid.dim)]
    hi = [grid.axes[a][box.hi[a]] for a in range(grid.dim)]
    on_lo = [box.lo[a] == 0 for a in range(grid.dim)]
    on_hi = [box.hi[a] == grid.n[a] - 1 for a in range(grid.dim)]
    return lo, hi, on_lo, on_hi


def _raw_on_points(grid, sub, width, coords, inside_masks):
    """Product-hat weight of ``sub`` evaluated at a point set.

    Each component box contributes the product over axes of a ramp that
    rises from zero at a non-boundary box side to one at depth ``width``
    (sides on the hull stay flat at one).  Components combine by maximum.

    coords: list of per-axis coordinate arrays (common shape).
    inside_masks: per component box, boolean mask of points inside the box
    (decided by index logic upstream, so no floating comparisons).
    """
    shape = coords[0].shape
    raw = np.zeros(shape)
    for box, inside in zip(sub.components, inside_masks):
        lo, hi, on_lo, on_hi = _box_physical(grid, box)
        hat = np.ones(shape)
        for a in range(grid.dim):
            up = 1.0 if on_lo[a] else np.clip((coords[a] - lo[a]) / width, 0.0, 1.0)
            dn = 1.0 if on_hi[a] else np.clip((hi[a] - coords[a]) / width, 0.0, 1.0)
            hat = hat * np.minimum(up, dn)
        raw = np.maximum(raw, np.where(inside, hat, 0.0))
    return raw


def _separating_chi_on_points(grid, subdomains, width, coords):
    """Hierarchical weights for a separating cover, at an arbitrary point set.

    The interior strips share the inner-box hat ``q`` (zero on the collar's
    outer region, one past the transition band); each strip scales ``q`` by
    its one-dimensional hat along the strip axis, and the collar carries the
    complement ``1 - q``.  All sums are exactly one and every per-axis slope
    is bounded by ``1/width``.
    """
    strips = subdomains[:-1]
    boxes = [sub.components[0] for sub in strips]
    ilo = [grid.axes[a][min(box.lo[a] for box in boxes)] for a in range(grid.dim)]
    ihi = [grid.axes[a][max(box.hi[a] for box in boxes)] for a in range(grid.dim)]
    q = np.ones(coords[0].shape)
    for a in range(grid.dim):
        depth = np.minimum(coords[a] - ilo[a], ihi[a] - coords[a])
        q = q * np.clip(depth / width, 0.0, 1.0)
    chis = []
    for k, box in enumerate(boxes):        # strips ordered along axis 0
        lo0 = grid.axes[0][box.lo[0]]
        hi0 = grid.axes[0][box.hi[0]]
        up = 1.0 if k == 0 else np.clip((coords[0] - lo0) / width, 0.0, 1.0)
        dn = 1.0 if k == len(boxes) - 1 else np.clip((hi0 - coords[0]) / width, 0.0, 1.0)
        chis.append(np.minimum(up, dn) * q)
    chis.append(1.0 - q)
    return np.stack(chis)


def _node_inside_masks(grid, sub):
    return [box.contains_node_grid(grid) for box in sub.components]


def _face_inside_masks(grid, sub, a):
    """Inside masks for axis-``a`` face midpoints, by index arithmetic."""
    fshape = grid.face_shapes[a]
    masks = []
    for box in sub.components:
        mask = np.ones(fshape, dtype=bool)
        for b in range(grid.dim):
            idx = np.arange(fshape[b])
            if b == a:
                axis_ok = (idx >= box.lo[b]) & (idx + 1 <= box.hi[b])
            else:
                axis_ok = (idx >= box.lo[b]) & (idx <= box.hi[b])
            shape = [1] * grid.dim
            shape[b] = fshape[b]
            mask &= axis_ok.reshape(shape)
        masks.append(mask)
    return masks


def _chi_on_points(grid, subdomains, overlap_width, coords, inside_masks, label,
                   separating):
    if separating:
        return _separating_chi_on_points(grid, subdomains, overlap_width, coords)
    raw = np.stack([
        _raw_on_points(grid, sub, overlap_width, coords, masks)
        for sub, masks in zip(subdomains, inside_masks)
    ])
    total = raw.sum(axis=0)
    if np.any(total <= 0):
        where = np.argwhere(total <= 0)[0]
        raise UncoveredNode(f"{label} {tuple(where)} not covered by any subdomain")
    return raw / total


def build_partition_of_unity(grid, subdomains, overlap_width, separating=False):
    """Normalized hat weights at nodes and face midpoints.

    With ``separating`` set, the last subdomain is treated as a boundary
    collar and the weights are assembled hierarchically (interior hats times
    the inner-box hat, complement on the collar); :func:`decompose` sets this
    automatically.  The plain product-hat path assumes the subdomain boxes
    form per-axis interval covers, which holds for strip and block layouts.

    Raises :class:`UncoveredNode` if the raw weights sum to zero anywhere.
    """
    if overlap_width <= 0:
        raise InfeasibleLayout("overlap_width must be positive")
    chi_nodes = _chi_on_points(
        grid, subdomains, overlap_width, grid.node_coordinates(),
        [_node_inside_masks(grid, sub) for sub in subdomains],
        "node index", separating,
    )
    chi_faces = [
        _chi_on_points(
            grid, subdomains, overlap_width, grid.face_midpoints(a),
            [_face_inside_masks(grid, sub, a) for sub in subdomains],
            f"axis-{a} face", separating,
        )
        for a in range(grid.dim)
    ]

    support = np.zeros((len(subdomains),) + grid.shape, dtype=bool)
    for k in range(len(subdomains)):
        mask = chi_nodes[k] > 0
        for a in range(grid.dim):
            fmask = chi_faces[a][k] > 0
            pad = [(0, 0)] * grid.dim
            pad[a] = (1, 0)
            mask |= np.pad(fmask, pad)          # face touches its upper node
            pad[a] = (0, 1)
            mask |= np.pad(fmask, pad)          # and its lower node
        support[k] = mask

    return PartitionOfUnity(
        grid=grid,
        subdomains=list(subdomains),
        node_weights=chi_nodes,
        face_weights=chi_faces,
        support=support,
        overlap_width=float(overlap_width),
    )


def decompose(grid, layout):
    """Layout -> subdomains -> partition of unity, with the snapped width."""
    subs = build_decomposition(grid, layout)
    return build_partition_of_unity(grid, subs, snapped_overlap(grid, layout),
                                    separating=layout.kind == "separating")


# ── Queries ──────────────────────────────────────────────────────────────────


def check_separating_condition(subdomains, grid):
    """True iff the last subdomain shields the others from the hull.

    Checks that no node of the closure of the union of all but the last
    subdomain lies on the grid boundary.  A single-subdomain cover fails by
    convention (there is nothing to shield).
    """
    if len(subdomains) < 2:
        return False
    union = np.zeros(grid.shape, dtype=bool)
    for sub in subdomains[:-1]:
        union |= sub.node_mask
    if not union.any():
        return False
    return not bool(np.any(union & grid.boundary_mask))


def support_closure(pou, index):
    """Nodes a subdomain's resolvent may touch: weight support plus one ring."""
    structure = np.ones((3,) * pou.grid.dim, dtype=bool)
    return ndimage.binary_dilation(pou.support[index], structure=structure)
