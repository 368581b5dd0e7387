"""Structured simplicial meshes of the unit interval/square, refinement, dual
cells and coarse-layer neighbourhoods.

Vertices live on dyadic grids (k / (n 2^m)) so coarse vertices keep bitwise
identical coordinates through refinement.  Refinement never renumbers
existing vertices: new vertices are appended, hence a coarse vertex index is
also its index on every refined mesh.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError, StructuralError

__all__ = [
    "TriMesh",
    "DualMesh",
    "SubdomainMask",
    "build_structured",
    "refine",
    "dual_cells",
    "layer_region",
    "mesh_norm",
    "ancestor_cells",
    "write_mesh",
]


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Intervals (dim 1) or triangles (dim 2) tiling (0, 1)^dim.

    ``coarse_nodes`` holds vertex indices of the interpolation nodes, interior
    vertices only.  ``parent``/``parent_cell`` record the refinement lineage:
    ``parent_cell[t]`` is the cell of ``parent`` that contains cell ``t``.
    """

    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    coarse_nodes: np.ndarray
    parent: "TriMesh | None" = None
    parent_cell: "np.ndarray | None" = None
    boundary_nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        on_bnd = np.any((self.vertices == 0.0) | (self.vertices == 1.0), axis=1)
        object.__setattr__(self, "boundary_nodes", np.flatnonzero(on_bnd))
        for arr in (self.vertices, self.cells, self.coarse_nodes, self.boundary_nodes):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_coarse(self) -> int:
        return self.coarse_nodes.shape[0]

    @property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_nodes] = True
        return mask

    def measures(self) -> np.ndarray:
        """Signed length/area of every cell (positive for valid meshes)."""
        p = self.vertices[self.cells]
        if self.dim == 1:
            return p[:, 1, 0] - p[:, 0, 0]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def barycenters(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    def spacing(self) -> float:
        """Largest edge length (the fine resolution h)."""
        p = self.vertices[self.cells]
        k = self.cells.shape[1]
        lengths = [np.linalg.norm(p[:, a] - p[:, b], axis=1)
                   for a in range(k) for b in range(a + 1, k)]
        return float(np.max(lengths))

    def coarse_coordinates(self) -> np.ndarray:
        return self.vertices[self.coarse_nodes]

    def nearest_coarse_node(self, point) -> int:
        """Coarse-node index (position in ``coarse_nodes``) closest to ``point``."""
        d = np.linalg.norm(self.coarse_coordinates() - np.asarray(point, float), axis=1)
        return int(np.argmin(d))

    def root(self) -> "TriMesh":
        m = self
        while m.parent is not None:
            m = m.parent
        return m


def build_structured(dim: int, divisions: int) -> TriMesh:
    """Uniform mesh of (0,1)^dim with ``divisions`` intervals per axis.

    In 2D every square is cut along the (1,1) diagonal.  All interior grid
    vertices become coarse nodes.
    """
    if dim not in (1, 2):
        raise ConfigurationError(f"dimension must be 1 or 2, got {dim}", field="dimension")
    if int(divisions) != divisions or divisions < 2:
        raise ConfigurationError(f"must be an integer >= 2, got {divisions}",
                                 field="coarse_divisions")
    n = int(divisions)
    ticks = np.arange(n + 1) / n
    if dim == 1:
        vertices = ticks[:, None].copy()
        cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        coarse = np.arange(1, n)
    else:
        X, Y = np.meshgrid(ticks, ticks)  # vertex (i, j) -> j*(n+1) + i
        vertices = np.column_stack([X.ravel(), Y.ravel()])
        I, J = np.meshgrid(np.arange(n), np.arange(n))
        v00 = (J * (n + 1) + I).ravel()
        v10 = v00 + 1
        v01 = v00 + n + 1
        v11 = v01 + 1
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
        cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
        I, J = np.meshgrid(np.arange(1, n), np.arange(1, n))
        coarse = (J * (n + 1) + I).ravel()
    return TriMesh(dim, vertices, cells.astype(np.int64), coarse.astype(np.int64))


def _refine_once(mesh: TriMesh) -> TriMesh:
    nv = mesh.n_vertices
    c = mesh.cells
    if mesh.dim == 1:
        mid = nv + np.arange(mesh.n_cells)
        new_pts = 0.5 * (mesh.vertices[c[:, 0]] + mesh.vertices[c[:, 1]])
        children = np.stack([np.column_stack([c[:, 0], mid]),
                             np.column_stack([mid, c[:, 1]])], axis=1).reshape(-1, 2)
        nchild = 2
    else:
        edges = np.concatenate([c[:, [0, 1]], c[:, [1, 2]], c[:, [2, 0]]])
        edges.sort(axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        inv = inv.reshape(3, -1)
        m01, m12, m20 = nv + inv[0], nv + inv[1], nv + inv[2]
        new_pts = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
        children = np.stack([
            np.column_stack([c[:, 0], m01, m20]),
            np.column_stack([m01, c[:, 1], m12]),
            np.column_stack([m20, m12, c[:, 2]]),
            np.column_stack([m01, m12, m20]),
        ], axis=1).reshape(-1, 3)
        nchild = 4
    vertices = np.concatenate([mesh.vertices, new_pts])
    parent_cell = np.repeat(np.arange(mesh.n_cells), nchild)
    return TriMesh(mesh.dim, vertices, children.astype(np.int64),
                   np.array(mesh.coarse_nodes), parent=mesh, parent_cell=parent_cell)


def refine(mesh: TriMesh, times: int = 1) -> TriMesh:
    """Uniform refinement: halve intervals (1D) or red-refine triangles (2D)."""
    if times < 0:
        raise ConfigurationError(f"must be non-negative, got {times}", field="refinements")
    for _ in range(int(times)):
        mesh = _refine_once(mesh)
    return mesh


def ancestor_cells(fine: TriMesh, coarse: TriMesh) -> np.ndarray:
    """For each fine cell, the index of the ``coarse`` cell containing it."""
    idx = np.arange(fine.n_cells)
    m = fine
    while m is not coarse:
        if m.parent is None:
            raise StructuralError("fine mesh is not a refinement of the given coarse mesh")
        idx = m.parent_cell[idx]
        m = m.parent
    return idx


@dataclass(frozen=True, eq=False)
class DualMesh:
    """Median dual of a fine mesh.

    Dual boundaries are stored as flat segment arrays.  Segment ``s`` lies in
    fine cell ``seg_cell[s]``, belongs to the dual cell of ``seg_owner[s]``
    with unit normal ``seg_normal[s]`` pointing out of it, and separates it
    from ``seg_neighbor[s]`` (-1 when the segment is on the domain boundary).
    Interior segments are stored once; the neighbour sees the opposite
    orientation.  In 1D a segment is a point and ``seg_length`` is 1.
    """

    mesh: TriMesh
    volumes: np.ndarray
    seg_owner: np.ndarray
    seg_neighbor: np.ndarray
    seg_cell: np.ndarray
    seg_start: np.ndarray
    seg_end: np.ndarray
    seg_normal: np.ndarray
    seg_length: np.ndarray

    def polygon(self, vertex: int) -> np.ndarray:
        """Ordered boundary points of one dual cell (2D) or its interval (1D)."""
        own = np.flatnonzero(self.seg_owner == vertex)
        nbr = np.flatnonzero(self.seg_neighbor == vertex)
        if self.mesh.dim == 1:
            pts = np.concatenate([self.seg_start[own], self.seg_start[nbr]])[:, 0]
            return np.sort(pts)
        segs = [(self.seg_start[s], self.seg_end[s]) for s in own]
        segs += [(self.seg_end[s], self.seg_start[s]) for s in nbr]
        pts = np.array([p for seg in segs for p in seg])
        centre = pts.mean(axis=0)
        ang = np.arctan2(pts[:, 1] - centre[1], pts[:, 0] - centre[0])
        ordered = pts[np.argsort(ang, kind="stable")]
        keep = np.ones(len(ordered), dtype=bool)
        keep[1:] = np.any(np.abs(np.diff(ordered, axis=0)) > 1e-15, axis=1)
        return ordered[keep]


def dual_cells(mesh: TriMesh) -> DualMesh:
    """Median (barycentric) dual: edge midpoints joined to cell barycentres."""
    meas = mesh.measures()
    c = mesh.cells
    k = mesh.dim + 1
    volumes = np.bincount(c.ravel(), weights=np.repeat(meas / k, k),
                          minlength=mesh.n_vertices)
    if mesh.dim == 1:
        x = mesh.vertices[:, 0]
        mid = 0.5 * (x[c[:, 0]] + x[c[:, 1]])
        owner = [c[:, 0]]
        neighbor = [c[:, 1]]
        cell = [np.arange(mesh.n_cells)]
        start = [mid]
        normal = [np.sign(x[c[:, 1]] - x[c[:, 0]])]
        for end_pt, sgn in ((0.0, -1.0), (1.0, 1.0)):
            v = np.flatnonzero(x == end_pt)
            t = np.flatnonzero(np.any(c == v[0], axis=1))
            owner.append(v)
            neighbor.append(np.array([-1]))
            cell.append(t[:1])
            start.append(np.array([end_pt]))
            normal.append(np.array([sgn]))
        start = np.concatenate(start)[:, None]
        return DualMesh(mesh, volumes,
                        np.concatenate(owner), np.concatenate(neighbor),
                        np.concatenate(cell), start, start.copy(),
                        np.concatenate(normal)[:, None], np.ones(len(start)))

    p = mesh.vertices[c]
    bary = p.mean(axis=1)
    owner, neighbor, cell, start, end = [], [], [], [], []
    tids = np.arange(mesh.n_cells)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        owner.append(c[:, a])
        neighbor.append(c[:, b])
        cell.append(tids)
        start.append(0.5 * (p[:, a] + p[:, b]))
        end.append(bary)
    owner = np.concatenate(owner)
    neighbor = np.concatenate(neighbor)
    cell = np.concatenate(cell)
    start = np.concatenate(start)
    end = np.concatenate(end)
    vec = end - start
    normal = np.column_stack([vec[:, 1], -vec[:, 0]])
    flip = np.einsum("ij,ij->i", normal,
                     mesh.vertices[neighbor] - mesh.vertices[owner]) < 0
    normal[flip] *= -1

    # half-edges on the domain boundary: each boundary edge contributes one
    # segment to each of its two endpoints' dual cells
    edges = np.concatenate([c[:, [0, 1]], c[:, [1, 2]], c[:, [2, 0]]])
    ecell = np.concatenate([tids, tids, tids])
    key = np.sort(edges, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    on_bnd = counts[inv.ravel()] == 1
    be, bc = edges[on_bnd], ecell[on_bnd]
    pa, pb = mesh.vertices[be[:, 0]], mesh.vertices[be[:, 1]]
    mid = 0.5 * (pa + pb)
    tvec = pb - pa
    bn = np.column_stack([tvec[:, 1], -tvec[:, 0]])  # outward for CCW cells
    bn_sign = np.sign(meas[bc])
    bn *= bn_sign[:, None]
    b_owner = np.concatenate([be[:, 0], be[:, 1]])
    b_start = np.concatenate([pa, mid])
    b_end = np.concatenate([mid, pb])
    b_normal = np.concatenate([bn, bn])
    b_cell = np.concatenate([bc, bc])

    owner = np.concatenate([owner, b_owner])
    neighbor = np.concatenate([neighbor, np.full(len(b_owner), -1)])
    cell = np.concatenate([cell, b_cell])
    start = np.concatenate([start, b_start])
    end = np.concatenate([end, b_end])
    normal = np.concatenate([normal, b_normal])
    length = np.linalg.norm(end - start, axis=1)
    normal /= np.linalg.norm(normal, axis=1)[:, None]
    return DualMesh(mesh, volumes, owner, neighbor, cell, start, end, normal, length)


@dataclass(frozen=True, eq=False)
class SubdomainMask:
    """Fine-mesh footprint of the l-layer coarse neighbourhood of one node.

    ``fine_nodes`` are the fine vertices strictly inside the neighbourhood
    and off the domain boundary; ``local_coarse_nodes`` are coarse-node
    indices whose vertex is one of them.
    """

    center: int
    layers: int
    fine_nodes: np.ndarray
    fine_cells: np.ndarray
    coarse_cells: np.ndarray
    local_coarse_nodes: np.ndarray
    saturated: bool


def _ancestor_cache(coarse, fine):
    key = "_ancestors"
    cache = fine.__dict__.setdefault(key, {})
    if id(coarse) not in cache:
        cache[id(coarse)] = ancestor_cells(fine, coarse)
    return cache[id(coarse)]


def coarse_layers(coarse: TriMesh, i: int, l: int) -> np.ndarray:
    """Boolean mask over coarse cells of the l-layer patch around node ``i``."""
    vmask = np.zeros(coarse.n_vertices, dtype=bool)
    vmask[coarse.coarse_nodes[i]] = True
    cmask = vmask[coarse.cells].any(axis=1)
    for _ in range(l - 1):
        vmask[:] = False
        vmask[coarse.cells[cmask].ravel()] = True
        cmask = vmask[coarse.cells].any(axis=1)
    return cmask


def layer_region(coarse: TriMesh, fine: TriMesh, i: int, l: int) -> SubdomainMask:
    """Fine nodes and cells of the union of ``l`` coarse-cell layers around x_i."""
    if not 0 <= i < coarse.n_coarse:
        raise IndexError(f"coarse node index {i} out of range [0, {coarse.n_coarse})")
    if l < 1:
        raise ConfigurationError(f"must be >= 1, got {l}", field="layers")
    cmask = coarse_layers(coarse, i, l)
    fmask = cmask[_ancestor_cache(coarse, fine)]
    inside = np.zeros(fine.n_vertices, dtype=bool)
    inside[fine.cells[fmask].ravel()] = True
    touched_out = np.zeros(fine.n_vertices, dtype=bool)
    touched_out[fine.cells[~fmask].ravel()] = True
    free = inside & ~touched_out & ~fine.boundary_mask
    is_coarse = free[fine.coarse_nodes]
    return SubdomainMask(
        center=int(i),
        layers=int(l),
        fine_nodes=np.flatnonzero(free),
        fine_cells=np.flatnonzero(fmask),
        coarse_cells=np.flatnonzero(cmask),
        local_coarse_nodes=np.flatnonzero(is_coarse),
        saturated=bool(cmask.all()),
    )


def mesh_norm(coarse_nodes, fine: TriMesh) -> float:
    """Largest distance from a fine vertex to its nearest coarse node.

    The fine vertices stand in for the supremum over the whole domain.
    """
    pts = np.asarray(coarse_nodes, dtype=float)
    if pts.size == 0:
        raise ConfigurationError("coarse node set is empty", field="coarse_nodes")
    pts = pts.reshape(len(pts), -1)
    dist, _ = cKDTree(pts).query(fine.vertices)
    return float(dist.max())


def write_mesh(mesh: TriMesh, path) -> None:
    """Plain-text dump: vertices, cells, coarse node list."""
    with open(path, "w") as f:
        f.write(f"# dim={mesh.dim} vertices={mesh.n_vertices} cells={mesh.n_cells} "
                f"coarse_nodes={mesh.n_coarse}\n")
        f.write("vertices\n")
        for k, x in enumerate(mesh.vertices):
            f.write(f"{k} " + " ".join(repr(float(v)) for v in x) + "\n")
        f.write("cells\n")
        for cell in mesh.cells:
            f.write(" ".join(str(int(v)) for v in cell) + "\n")
        f.write("coarse_nodes\n")
        f.write(" ".join(str(int(v)) for v in mesh.coarse_nodes) + "\n")
