"""
mesh.py — Conforming triangular meshes with Dirichlet/Neumann boundary markers.

Conventions
-----------
  - cells are counter-clockwise vertex triples;
  - local facet i of a cell is the edge opposite its local vertex i;
  - facets are numbered in lexicographic order of their sorted vertex pairs;
  - the global facet normal points from the lower to the higher adjacent
    cell index, and outward on the boundary (`cell_signs` is +1 for the
    cell the normal leaves);
  - boundary facets carry exactly one marker, "D" or "N"; interior facets "".

Mesh file format (UTF-8, `#` starts a comment)
----------------------------------------------
    pbmix-mesh 1
    vertices N
    x y                 (N lines)
    cells M
    v0 v1 v2            (M lines, 0-based, counter-clockwise)
    boundary K
    v0 v1 D|N           (K lines)

Usage
-----
    from src.mesh import generate_structured, neumann_where, uniform_refine

    mesh = generate_structured(2, marker=neumann_where(lambda m: m[0] > 1 - 1e-12))
    fine = uniform_refine(mesh)
    patches = vertex_patches(fine)
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from src.config import GEOMETRY_TOL
from src.errors import (
    InvariantViolation,
    MeshMismatch,
    MissingInteriorNeighbour,
    MissingMarker,
    ParseError,
)

DIRICHLET = "D"
NEUMANN   = "N"
MARKERS   = (DIRICHLET, NEUMANN)
FORMAT_HEADER = "pbmix-mesh 1"

MarkerRule = Callable[[np.ndarray], str]
MarkerSpec = Union[MarkerRule, Mapping[Tuple[int, int], str]]


# ── Mesh container ────────────────────────────────────────────────────────────

@dataclass(eq=False)
class Mesh:
    """
    Immutable triangulation plus derived geometry.
    Build through build_mesh(); the constructor trusts its inputs.
    """
    vertices:     np.ndarray          # (Nv, 2)
    cells:        np.ndarray          # (M, 3)
    facets:       np.ndarray          # (E, 2) sorted vertex pairs
    facet_cells:  np.ndarray          # (E, 2), -1 in column 1 on the boundary
    cell_facets:  np.ndarray          # (M, 3)
    cell_signs:   np.ndarray          # (M, 3) ±1
    markers:      np.ndarray          # (E,) "", "D" or "N"
    parent:       Optional["Mesh"] = None
    parent_cells: Optional[np.ndarray] = None

    areas:         np.ndarray = field(init=False, repr=False)
    centroids:     np.ndarray = field(init=False, repr=False)
    diameters:     np.ndarray = field(init=False, repr=False)
    facet_lengths: np.ndarray = field(init=False, repr=False)
    facet_normals: np.ndarray = field(init=False, repr=False)
    h_max:         float = field(init=False)

    def __post_init__(self) -> None:
        xy = self.vertices[self.cells]                       # (M, 3, 2)
        e1 = xy[:, 1] - xy[:, 0]
        e2 = xy[:, 2] - xy[:, 0]
        self.areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        self.centroids = xy.mean(axis=1)
        edges = np.stack([xy[:, 2] - xy[:, 1], xy[:, 0] - xy[:, 2], xy[:, 1] - xy[:, 0]], axis=1)
        self.diameters = np.linalg.norm(edges, axis=2).max(axis=1)
        self.h_max = float(self.diameters.max()) if len(self.cells) else 0.0

        a = self.vertices[self.facets[:, 0]]
        b = self.vertices[self.facets[:, 1]]
        t = b - a
        self.facet_lengths = np.linalg.norm(t, axis=1)
        normals = np.stack([t[:, 1], -t[:, 0]], axis=1) / self.facet_lengths[:, None]
        # orient outward from the first adjacent cell
        owner = self.facet_cells[:, 0]
        opposite = self.centroids[owner] - a
        flip = np.einsum("ij,ij->i", opposite, normals) > 0.0
        normals[flip] *= -1.0
        self.facet_normals = normals

        for name in ("vertices", "cells", "facets", "facet_cells", "cell_facets",
                     "cell_signs", "markers", "areas", "centroids", "diameters",
                     "facet_lengths", "facet_normals"):
            getattr(self, name).setflags(write=False)

    # ── sizes ────────────────────────────────────────────────────────────────

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    @property
    def boundary_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] < 0)

    def facets_marked(self, marker: str) -> np.ndarray:
        return np.flatnonzero(self.markers == marker)

    def euler_characteristic(self) -> int:
        """V − E + C; equals 1 on simply connected meshes."""
        return self.n_vertices - self.n_facets + self.n_cells

    # ── adjacency ────────────────────────────────────────────────────────────

    def vertex_cells(self, vertex: int) -> np.ndarray:
        """Ascending indices of the cells containing `vertex`."""
        indptr, cell_ids = self._vertex_cell_csr()
        return cell_ids[indptr[vertex]:indptr[vertex + 1]]

    def _vertex_cell_csr(self) -> Tuple[np.ndarray, np.ndarray]:
        cached = self.__dict__.get("_vc_csr")
        if cached is None:
            flat = self.cells.ravel()
            order = np.argsort(flat, kind="stable")
            counts = np.bincount(flat, minlength=self.n_vertices)
            indptr = np.concatenate([[0], np.cumsum(counts)])
            cached = (indptr, order // 3)
            self.__dict__["_vc_csr"] = cached
        return cached

    # ── ancestry (uniform refinement) ────────────────────────────────────────

    def same_as(self, other: "Mesh") -> bool:
        return (self.vertices.shape == other.vertices.shape
                and self.cells.shape == other.cells.shape
                and np.array_equal(self.cells, other.cells)
                and np.array_equal(self.vertices, other.vertices))

    def ancestor_cells(self, ancestor: "Mesh") -> np.ndarray:
        """Index of the `ancestor` cell containing each cell of this mesh."""
        mapping = np.arange(self.n_cells)
        mesh: Optional[Mesh] = self
        while mesh is not None:
            if mesh is ancestor or mesh.same_as(ancestor):
                return mapping
            if mesh.parent is None:
                break
            mapping = mesh.parent_cells[mapping]
            mesh = mesh.parent
        raise MeshMismatch("coarse mesh is not an ancestor of the reference mesh "
                           "under uniform refinement")

    def locate(self, point: Sequence[float], tol: float = 1e-12) -> np.ndarray:
        """All cells whose closure contains `point` (barycentric test)."""
        p = np.asarray(point, dtype=float)
        xy = self.vertices[self.cells]
        e1 = xy[:, 1] - xy[:, 0]
        e2 = xy[:, 2] - xy[:, 0]
        d = p - xy[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        l1 = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
        l2 = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
        l0 = 1.0 - l1 - l2
        inside = (l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol)
        return np.flatnonzero(inside)


# ── Construction ──────────────────────────────────────────────────────────────

def _topology(cells: np.ndarray):
    """Facet numbering, facet→cell and cell→facet maps, orientation signs."""
    m = len(cells)
    local = np.stack([cells[:, [1, 2]], cells[:, [2, 0]], cells[:, [0, 1]]], axis=1)  # (M,3,2)
    directed = local.reshape(-1, 2)
    keys = np.sort(directed, axis=1)
    facets, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        bad = np.flatnonzero(counts > 2)[0]
        raise InvariantViolation(f"non-conforming mesh: facet {tuple(facets[bad])} "
                                 f"is shared by {counts[bad]} cells")

    cell_of = np.repeat(np.arange(m), 3)
    order = np.lexsort((cell_of, inverse))
    inv_s = inverse[order]
    first = np.concatenate([[True], inv_s[1:] != inv_s[:-1]])
    facet_cells = np.full((len(facets), 2), -1, dtype=np.int64)
    facet_cells[inv_s[first], 0] = cell_of[order][first]
    facet_cells[inv_s[~first], 1] = cell_of[order][~first]

    # two counter-clockwise cells must traverse a shared facet in opposite directions
    interior = np.flatnonzero(counts == 2)
    if len(interior):
        start = np.empty(len(facets), dtype=np.int64)
        start_second = np.empty(len(facets), dtype=np.int64)
        start[inv_s[first]] = directed[order][first, 0]
        start_second[inv_s[~first]] = directed[order][~first, 0]
        clash = interior[start[interior] == start_second[interior]]
        if len(clash):
            raise InvariantViolation(f"non-conforming mesh: cells overlap across facet "
                                     f"{tuple(facets[clash[0]])}")

    cell_facets = inverse.reshape(m, 3)
    owner = facet_cells[cell_facets, 0]
    cell_signs = np.where(owner == np.arange(m)[:, None], 1, -1).astype(np.int64)
    return facets.astype(np.int64), facet_cells, cell_facets.astype(np.int64), cell_signs


def _check_conformity(vertices: np.ndarray, cells: np.ndarray, facets: np.ndarray,
                      facet_cells: np.ndarray, tol: float = GEOMETRY_TOL) -> None:
    """
    Cells may meet only in a shared vertex or a whole shared facet.

    Hanging nodes are vertices strictly inside some facet. Overlaps show up
    as an interior vertex whose cell angles do not close to 2π, a boundary
    vertex whose angles exceed 2π, or two boundary facets that cross.
    """
    used = np.zeros(len(vertices), dtype=bool)
    used[cells.ravel()] = True
    a, b = vertices[facets[:, 0]], vertices[facets[:, 1]]
    d = b - a
    length = np.linalg.norm(d, axis=1)
    hits = cKDTree(vertices).query_ball_point(0.5 * (a + b), r=0.5 * length * (1.0 + tol))
    counts = np.fromiter(map(len, hits), dtype=np.int64, count=len(facets))
    if counts.sum():
        e = np.repeat(np.arange(len(facets)), counts)
        v = np.concatenate([np.asarray(h, dtype=np.int64) for h in hits if len(h)])
        p = vertices[v] - a[e]
        t = np.einsum("nd,nd->n", p, d[e]) / length[e] ** 2
        off = np.abs(p[:, 0] * d[e, 1] - p[:, 1] * d[e, 0]) / length[e]
        inside = used[v] & (t > tol) & (t < 1.0 - tol) & (off < tol * length[e])
        if np.any(inside):
            i = int(np.flatnonzero(inside)[0])
            raise InvariantViolation(f"non-conforming mesh: vertex {v[i]} hangs on facet "
                                     f"{tuple(facets[e[i]])}")

    xy = vertices[cells]
    angles = np.empty(cells.shape)
    for i in range(3):
        u = xy[:, (i + 1) % 3] - xy[:, i]
        w = xy[:, (i + 2) % 3] - xy[:, i]
        angles[:, i] = np.arctan2(u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0],
                                  np.einsum("cd,cd->c", u, w))
    total = np.bincount(cells.ravel(), weights=angles.ravel(), minlength=len(vertices))
    boundary = facet_cells[:, 1] < 0
    on_boundary = np.zeros(len(vertices), dtype=bool)
    on_boundary[facets[boundary].ravel()] = True
    angle_tol = 1e-8
    wrong = used & np.where(on_boundary, total > 2.0 * np.pi + angle_tol,
                            np.abs(total - 2.0 * np.pi) > angle_tol)
    if np.any(wrong):
        z = int(np.flatnonzero(wrong)[0])
        raise InvariantViolation(f"non-conforming mesh: cells overlap around vertex {z} "
                                 f"(angle sum {total[z] / np.pi:.3f}π)")

    # boundary facets that cross without sharing a vertex
    bf = facets[boundary]
    p0, p1 = vertices[bf[:, 0]], vertices[bf[:, 1]]
    r = p1 - p0

    def side(o, dirs, q):
        return dirs[:, None, 0] * (q[None, :, 1] - o[:, None, 1]) \
            - dirs[:, None, 1] * (q[None, :, 0] - o[:, None, 0])

    scale = tol * np.outer(np.linalg.norm(r, axis=1), np.linalg.norm(r, axis=1))
    s0, s1 = side(p0, r, p0), side(p0, r, p1)
    straddle = ((s0 > scale) & (s1 < -scale)) | ((s0 < -scale) & (s1 > scale))
    crossing = straddle & straddle.T
    if np.any(crossing):
        i, j = np.argwhere(crossing)[0]
        raise InvariantViolation(f"non-conforming mesh: boundary facets {tuple(bf[i])} "
                                 f"and {tuple(bf[j])} cross")


def build_mesh(
    vertices,
    cells,
    markers: MarkerSpec,
    parent: Optional[Mesh] = None,
    parent_cells: Optional[np.ndarray] = None,
) -> Mesh:
    """
    Validate and assemble a Mesh.

    Args:
        vertices: (N, 2) coordinates.
        cells:    (M, 3) counter-clockwise vertex triples.
        markers:  either a rule mapping a facet midpoint to "D"/"N", or a
                  mapping from vertex pairs (any order) to markers that
                  covers exactly the boundary facets.

    Raises:
        InvariantViolation: orientation, conformity or marker failures
                            (MissingMarker when a boundary facet is unmarked).
    """
    vertices = np.array(vertices, dtype=float).reshape(-1, 2)
    cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
    if len(cells) == 0:
        raise InvariantViolation("mesh has no cells")
    if cells.min() < 0 or cells.max() >= len(vertices):
        raise InvariantViolation("cell references a vertex index out of range")

    xy = vertices[cells]
    e1 = xy[:, 1] - xy[:, 0]
    e2 = xy[:, 2] - xy[:, 0]
    signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if np.any(signed <= 0.0):
        bad = int(np.flatnonzero(signed <= 0.0)[0])
        raise InvariantViolation(f"orientation: cell {bad} has non-positive signed area "
                                 f"({signed[bad]:.3e}); cells must be counter-clockwise")

    facets, facet_cells, cell_facets, cell_signs = _topology(cells)
    _check_conformity(vertices, cells, facets, facet_cells)
    boundary = facet_cells[:, 1] < 0
    marker_array = np.full(len(facets), "", dtype="<U1")

    if callable(markers):
        mids = 0.5 * (vertices[facets[:, 0]] + vertices[facets[:, 1]])
        for e in np.flatnonzero(boundary):
            marker_array[e] = markers(mids[e])
    else:
        lookup = {tuple(sorted((int(a), int(b)))): m for (a, b), m in markers.items()}
        index = {(int(a), int(b)): e for e, (a, b) in enumerate(facets)}
        for key, m in lookup.items():
            e = index.get(key)
            if e is None:
                raise InvariantViolation(f"marker given for {key}, which is not a mesh facet")
            if not boundary[e]:
                raise InvariantViolation(f"marker given for interior facet {key}")
            marker_array[e] = m
        missing = np.flatnonzero(boundary & (marker_array == ""))
        if len(missing):
            raise MissingMarker(f"boundary facet {tuple(facets[missing[0]])} has no marker")

    bad = boundary & ~np.isin(marker_array, MARKERS)
    if np.any(bad):
        e = int(np.flatnonzero(bad)[0])
        raise InvariantViolation(f"boundary facet {tuple(facets[e])} has invalid marker "
                                 f"{marker_array[e]!r}")

    return Mesh(vertices=vertices, cells=cells, facets=facets, facet_cells=facet_cells,
                cell_facets=cell_facets, cell_signs=cell_signs, markers=marker_array,
                parent=parent, parent_cells=parent_cells)


def neumann_where(predicate: Callable[[np.ndarray], bool]) -> MarkerRule:
    """Marker rule: Neumann where `predicate(midpoint)` holds, Dirichlet elsewhere."""
    def rule(midpoint: np.ndarray) -> str:
        return NEUMANN if predicate(midpoint) else DIRICHLET
    return rule


def all_dirichlet(midpoint: np.ndarray) -> str:
    return DIRICHLET


def generate_structured(
    nx: int,
    domain: Tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0),
    diagonal: str = "right",
    marker: Optional[MarkerRule] = None,
) -> Mesh:
    """
    Uniform nx × nx grid of squares, each split into two triangles.

    Args:
        nx:       cells per side (>= 1).
        domain:   (x0, x1, y0, y1).
        diagonal: "right" splits along the (x0,y0)→(x1,y1) direction of every
                  square, "left" along the other diagonal.
        marker:   boundary rule on facet midpoints (default all Dirichlet).
    """
    if nx < 1:
        raise ValueError(f"nx must be >= 1, got {nx}")
    if diagonal not in ("right", "left"):
        raise ValueError(f"diagonal must be 'right' or 'left', got {diagonal!r}")
    x0, x1, y0, y1 = domain
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, nx + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(nx))
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    if diagonal == "right":
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
    else:
        lower = np.column_stack([v00, v10, v01])
        upper = np.column_stack([v10, v11, v01])
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return build_mesh(vertices, cells, marker or all_dirichlet)


def uniform_refine(mesh: Mesh) -> Mesh:
    """Red refinement: four congruent children per cell, markers inherited."""
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[mesh.facets[:, 0]] + mesh.vertices[mesh.facets[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])

    a, b, c = mesh.cells.T
    ma, mb, mc = (nv + mesh.cell_facets).T
    children = np.stack([
        np.column_stack([a, mc, mb]),
        np.column_stack([mc, b, ma]),
        np.column_stack([mb, ma, c]),
        np.column_stack([ma, mb, mc]),
    ], axis=1).reshape(-1, 3)

    markers: Dict[Tuple[int, int], str] = {}
    for e in mesh.boundary_facets:
        p, q = mesh.facets[e]
        mid = nv + int(e)
        markers[(int(p), mid)] = mesh.markers[e]
        markers[(mid, int(q))] = mesh.markers[e]

    return build_mesh(vertices, children, markers, parent=mesh,
                      parent_cells=np.repeat(np.arange(mesh.n_cells), 4))


# ── Vertex classes and patches ────────────────────────────────────────────────

def dirichlet_vertices(mesh: Mesh) -> np.ndarray:
    """Boolean mask of vertices in the closure of Γ_D."""
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    mask[mesh.facets[mesh.facets_marked(DIRICHLET)].ravel()] = True
    return mask


def boundary_vertices(mesh: Mesh) -> np.ndarray:
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    mask[mesh.facets[mesh.boundary_facets].ravel()] = True
    return mask


@dataclass(frozen=True)
class VertexPatch:
    """Cells T_z used for the weight of vertex z (redirected for Neumann vertices)."""
    vertex:        int
    cells:         Tuple[int, ...]
    interior:      bool
    redirected_to: Optional[int] = None

    @property
    def centre_vertex(self) -> int:
        """Vertex every patch cell contains."""
        return self.vertex if self.redirected_to is None else self.redirected_to


def vertex_patches(mesh: Mesh) -> List[VertexPatch]:
    """
    One patch per vertex in V₀ ∪ V_N, in increasing vertex order.

    Interior vertices use their own star. A Neumann vertex z borrows the star
    of the smallest-index interior vertex sharing a cell with it.

    Raises:
        MissingInteriorNeighbour: some Neumann vertex has no interior neighbour.
    """
    on_boundary = boundary_vertices(mesh)
    on_dirichlet = dirichlet_vertices(mesh)
    interior = ~on_boundary

    patches: List[VertexPatch] = []
    for z in range(mesh.n_vertices):
        if on_dirichlet[z]:
            continue
        star = mesh.vertex_cells(z)
        if interior[z]:
            patches.append(VertexPatch(z, tuple(int(c) for c in star), True))
            continue
        neighbours = np.unique(mesh.cells[star].ravel())
        candidates = neighbours[interior[neighbours]]
        if len(candidates) == 0:
            x, y = mesh.vertices[z]
            raise MissingInteriorNeighbour(
                f"Neumann vertex {z} at ({x:.6g}, {y:.6g}) shares no cell with an "
                f"interior vertex; refine the mesh")
        z0 = int(candidates.min())
        patches.append(VertexPatch(z, tuple(int(c) for c in mesh.vertex_cells(z0)), False, z0))
    return patches


# ── File IO ───────────────────────────────────────────────────────────────────

def write_mesh(mesh: Mesh, path: str) -> None:
    """Write `mesh` in the pbmix-mesh text format (17 significant digits)."""
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    lines = [FORMAT_HEADER, f"vertices {mesh.n_vertices}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(f"cells {mesh.n_cells}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.cells]
    boundary = mesh.boundary_facets
    lines.append(f"boundary {len(boundary)}")
    lines += [f"{mesh.facets[e, 0]} {mesh.facets[e, 1]} {mesh.markers[e]}" for e in boundary]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def _content_lines(path: str):
    with open(path, encoding="utf-8") as f:
        for number, raw in enumerate(f, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                yield number, text


def read_mesh(path: str) -> Mesh:
    """
    Parse a pbmix-mesh file.

    Raises:
        ParseError:          malformed content (with line number), including a
                             boundary facet left without a marker.
        InvariantViolation:  well-formed file describing an invalid mesh.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"mesh file not found: {path}")
    lines = list(_content_lines(path))
    pos = 0

    def take(what: str) -> Tuple[int, str]:
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 1
            raise ParseError(f"unexpected end of file, expected {what}", last)
        item = lines[pos]
        pos += 1
        return item

    number, text = take("header")
    if text != FORMAT_HEADER:
        raise ParseError(f"expected header {FORMAT_HEADER!r}, got {text!r}", number)

    def section(name: str) -> Tuple[int, int]:
        number, text = take(f"'{name} <count>'")
        parts = text.split()
        if len(parts) != 2 or parts[0] != name:
            raise ParseError(f"expected '{name} <count>', got {text!r}", number)
        try:
            count = int(parts[1])
        except ValueError:
            raise ParseError(f"invalid {name} count {parts[1]!r}", number)
        if count < 0:
            raise ParseError(f"negative {name} count", number)
        return number, count

    _, nv = section("vertices")
    vertices = np.empty((nv, 2))
    for row in range(nv):
        number, text = take("vertex coordinates")
        parts = text.split()
        try:
            if len(parts) != 2:
                raise ValueError
            vertices[row] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise ParseError(f"expected 'x y', got {text!r}", number)

    _, nc = section("cells")
    cells = np.empty((nc, 3), dtype=np.int64)
    for row in range(nc):
        number, text = take("cell vertex triple")
        parts = text.split()
        try:
            if len(parts) != 3:
                raise ValueError
            cells[row] = [int(p) for p in parts]
        except ValueError:
            raise ParseError(f"expected 'v0 v1 v2', got {text!r}", number)
        if cells[row].min() < 0 or cells[row].max() >= nv:
            raise ParseError(f"cell vertex index out of range in {text!r}", number)

    boundary_line, nb = section("boundary")
    markers: Dict[Tuple[int, int], str] = {}
    for _ in range(nb):
        number, text = take("boundary facet")
        parts = text.split()
        if len(parts) != 3 or parts[2] not in MARKERS:
            raise ParseError(f"expected 'v0 v1 D|N', got {text!r}", number)
        try:
            key = tuple(sorted((int(parts[0]), int(parts[1]))))
        except ValueError:
            raise ParseError(f"invalid vertex index in {text!r}", number)
        if key in markers:
            raise ParseError(f"duplicate boundary facet {key}", number)
        markers[key] = parts[2]

    if pos < len(lines):
        number, text = lines[pos]
        raise ParseError(f"unexpected trailing content {text!r}", number)

    try:
        return build_mesh(vertices, cells, markers)
    except MissingMarker as e:
        raise ParseError(str(e), boundary_line)
