"""Primal polygonal meshes and their staggered triangular submeshes.

A primal mesh partitions the domain into star-shaped polygons, each with
a designated interior point. The staggered submesh joins every polygon's
interior point to its vertices, producing one triangle per polygon side.
Edges are classified as primal (original polygon sides) or dual (the new
interior spokes), with a fixed unit normal and signed triangle adjacency
used to define jumps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PRIMAL_INTERIOR = "primal-interior"
PRIMAL_BOUNDARY = "primal-boundary"
DUAL = "dual"


class MeshError(ValueError):
    """Invalid mesh: violated invariant or regularity assumption."""


class MeshFormatError(MeshError):
    """Malformed polygon mesh file."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _cross2(a: np.ndarray, b: np.ndarray):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _polygon_area(coords: np.ndarray) -> float:
    x, y = coords[:, 0], coords[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass
class PrimalMesh:
    """Polygonal partition of the domain with per-polygon interior points."""

    vertices: np.ndarray  # (nv, 2)
    polygons: list[list[int]]  # CCW vertex-index cycles
    interior_points: np.ndarray  # (npoly, 2)

    @property
    def num_polygons(self) -> int:
        return len(self.polygons)

    def polygon_coords(self, p: int) -> np.ndarray:
        return self.vertices[self.polygons[p]]

    def area(self) -> float:
        return sum(_polygon_area(self.polygon_coords(p)) for p in range(self.num_polygons))

    def validate(self, rho: float = 0.05) -> None:
        """Check orientation, star-shapedness and edge-length regularity."""
        for p, poly in enumerate(self.polygons):
            if len(poly) < 3:
                raise MeshError(f"polygon {p} has fewer than 3 vertices")
            if len(set(poly)) != len(poly):
                raise MeshError(f"polygon {p} repeats a vertex")
            coords = self.polygon_coords(p)
            area = _polygon_area(coords)
            if area <= 0.0:
                raise MeshError(f"polygon {p} is not counterclockwise (signed area {area:g})")
            nu = self.interior_points[p]
            h_s = _diameter(coords)
            for i in range(len(poly)):
                a = coords[i]
                b = coords[(i + 1) % len(poly)]
                tri_area = 0.5 * float(_cross2(b - a, nu - a))
                if tri_area <= 0.0:
                    raise MeshError(
                        f"polygon {p} is not star-shaped w.r.t. its interior point "
                        f"(side {i} subdivision triangle has area {tri_area:g})"
                    )
                h_e = float(np.linalg.norm(b - a))
                if h_e < rho * h_s:
                    raise MeshError(
                        f"polygon {p} side {i} too short: h_e={h_e:g} < {rho}*h_S={rho * h_s:g}"
                    )


def _diameter(coords: np.ndarray) -> float:
    d = coords[:, None, :] - coords[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1)).max())


@dataclass
class Edge:
    """Oriented mesh edge with signed triangle adjacency."""

    v0: int
    v1: int
    kind: str
    normal: np.ndarray  # fixed unit normal
    tangent: np.ndarray  # normal rotated by +90 degrees
    length: float
    tris: list[tuple[int, int]] = field(default_factory=list)  # (triangle id, sign)

    @property
    def is_primal(self) -> bool:
        return self.kind != DUAL


@dataclass
class StaggeredMesh:
    """Simplicial submesh with classified edges and dual patches."""

    primal: PrimalMesh
    vertices: np.ndarray  # primal vertices followed by interior points
    triangles: np.ndarray  # (nT, 3) vertex ids; third vertex is the interior point
    tri_poly: np.ndarray  # (nT,) parent polygon id
    tri_area: np.ndarray
    tri_diam: np.ndarray
    edges: list[Edge]
    tri_edges: np.ndarray  # (nT, 3) edge ids: [primal side, dual side 1, dual side 2]
    h: float

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def primal_edge_ids(self) -> list[int]:
        return [i for i, e in enumerate(self.edges) if e.is_primal]

    @property
    def interior_primal_edge_ids(self) -> list[int]:
        return [i for i, e in enumerate(self.edges) if e.kind == PRIMAL_INTERIOR]

    @property
    def dual_edge_ids(self) -> list[int]:
        return [i for i, e in enumerate(self.edges) if e.kind == DUAL]

    def dual_patch(self, edge_id: int) -> list[int]:
        """Triangles of D(e) for a primal edge e."""
        e = self.edges[edge_id]
        if not e.is_primal:
            raise MeshError("dual patches are defined for primal edges only")
        return [t for t, _ in e.tris]

    def tri_coords(self, t: int) -> np.ndarray:
        return self.vertices[self.triangles[t]]

    def validate(self) -> None:
        n_dual = len(self.dual_edge_ids)
        n_int = len(self.interior_primal_edge_ids)
        n_bnd = sum(1 for e in self.edges if e.kind == PRIMAL_BOUNDARY)
        nT = self.num_triangles
        if n_dual != nT:
            raise MeshError(f"|F_p|={n_dual} != |T_h|={nT}")
        if 2 * n_int + n_bnd != nT:
            raise MeshError(f"2|F_u0|+|F_u\\F_u0| = {2 * n_int + n_bnd} != |T_h|={nT}")
        for e in self.edges:
            expected = 1 if e.kind == PRIMAL_BOUNDARY else 2
            if len(e.tris) != expected:
                raise MeshError(f"edge ({e.v0},{e.v1}) kind {e.kind} has {len(e.tris)} triangles")
            if len(e.tris) == 2 and e.tris[0][1] * e.tris[1][1] != -1:
                raise MeshError(f"edge ({e.v0},{e.v1}) adjacency signs do not oppose")
        if abs(self.tri_area.sum() - self.primal.area()) > 1e-12 * max(1.0, self.primal.area()):
            raise MeshError("triangle areas do not sum to the domain area")


def build_square_grid(n: int) -> PrimalMesh:
    """Uniform n-by-n grid of squares on the unit square."""
    if n < 1:
        raise ValueError("grid size must be at least 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    polygons = []
    for j in range(n):
        for i in range(n):
            polygons.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    mesh = PrimalMesh(vertices, polygons, _centroids(vertices, polygons))
    mesh.validate()
    return mesh


def _centroids(vertices: np.ndarray, polygons: list[list[int]]) -> np.ndarray:
    return np.array([vertices[p].mean(axis=0) for p in polygons])


def build_distorted_grid(n: int, delta: float = 0.25, seed: int = 42) -> PrimalMesh:
    """Square grid with interior vertices perturbed by U[-delta*h, delta*h]^2.

    Deterministic for a given (n, delta, seed). Each vertex is resampled
    up to 100 times if the perturbation breaks star-shapedness of an
    adjacent polygon.
    """
    if not 0.0 <= delta < 0.5:
        raise ValueError("distortion fraction must lie in [0, 0.5)")
    mesh = build_square_grid(n)
    if delta == 0.0:
        return mesh
    h = 1.0 / n
    rng = np.random.default_rng(seed)
    vertices = mesh.vertices.copy()
    interior = [
        v
        for v in range(len(vertices))
        if 0.0 < vertices[v, 0] < 1.0 and 0.0 < vertices[v, 1] < 1.0
    ]
    vertex_polys: dict[int, list[int]] = {v: [] for v in interior}
    for p, poly in enumerate(mesh.polygons):
        for v in poly:
            if v in vertex_polys:
                vertex_polys[v].append(p)

    def patch_ok(vs: np.ndarray, polys: list[int]) -> bool:
        for p in polys:
            coords = vs[mesh.polygons[p]]
            nu = coords.mean(axis=0)
            m = len(coords)
            for i in range(m):
                a, b = coords[i], coords[(i + 1) % m]
                if float(_cross2(b - a, nu - a)) <= 1e-14:
                    return False
        return True

    for v in interior:
        base = mesh.vertices[v]
        for _ in range(100):
            vertices[v] = base + rng.uniform(-delta * h, delta * h, size=2)
            if patch_ok(vertices, vertex_polys[v]):
                break
        else:
            raise MeshError(f"no valid perturbation found for vertex {v}")
    out = PrimalMesh(vertices, [list(p) for p in mesh.polygons], _centroids(vertices, mesh.polygons))
    out.validate()
    return out


def build_hanging_grid(n: int) -> PrimalMesh:
    """n-by-n grid with the left half refined 2x, leaving hanging nodes.

    Cells with centre x < 1/2 are split into four subcells; the coarse
    cells along the interface keep the hanging midpoint as a collinear
    polygon vertex.
    """
    if n < 2 or n % 2 != 0:
        raise ValueError("hanging grid needs an even n >= 2")
    H = 1.0 / n
    refined = {(i, j): i < n // 2 for j in range(n) for i in range(n)}
    verts: dict[tuple[int, int], int] = {}
    coords: list[tuple[float, float]] = []

    def vid(ix2: int, iy2: int) -> int:
        # Vertex lattice at half-cell resolution: coords (ix2*H/2, iy2*H/2).
        key = (ix2, iy2)
        if key not in verts:
            verts[key] = len(coords)
            coords.append((ix2 * H / 2.0, iy2 * H / 2.0))
        return verts[key]

    polygons: list[list[int]] = []
    for j in range(n):
        for i in range(n):
            if refined[(i, j)]:
                for dj in range(2):
                    for di in range(2):
                        x0, y0 = 2 * i + di, 2 * j + dj
                        polygons.append(
                            [
                                vid(x0, y0),
                                vid(x0 + 1, y0),
                                vid(x0 + 1, y0 + 1),
                                vid(x0, y0 + 1),
                            ]
                        )
            else:
                x0, y0 = 2 * i, 2 * j
                cycle = [vid(x0, y0), vid(x0 + 2, y0), vid(x0 + 2, y0 + 2), vid(x0, y0 + 2)]
                if i > 0 and refined[(i - 1, j)]:
                    # Hanging node on the west side.
                    cycle = [
                        vid(x0, y0),
                        vid(x0 + 2, y0),
                        vid(x0 + 2, y0 + 2),
                        vid(x0, y0 + 2),
                        vid(x0, y0 + 1),
                    ]
                polygons.append(cycle)
    vertices = np.array(coords)
    mesh = PrimalMesh(vertices, polygons, _centroids(vertices, polygons))
    mesh.validate()
    return mesh


def import_polygon_mesh(text: str) -> PrimalMesh:
    """Parse the plain-text polygon format.

    Line 1: `NV NP`; then NV lines `x y`; then NP lines `m i1 ... im`
    with 0-based CCW vertex indices. `#` starts a comment.
    """
    rows: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if stripped:
            rows.append((lineno, stripped.split()))
    if not rows:
        raise MeshFormatError("empty mesh file", 1)
    lineno, header = rows[0]
    if len(header) != 2:
        raise MeshFormatError("expected header `NV NP`", lineno)
    try:
        nv, npoly = int(header[0]), int(header[1])
    except ValueError:
        raise MeshFormatError("header fields must be integers", lineno) from None
    if len(rows) != 1 + nv + npoly:
        raise MeshFormatError(
            f"expected {1 + nv + npoly} content lines, found {len(rows)}", rows[-1][0]
        )
    vertices = np.empty((nv, 2))
    for v in range(nv):
        lineno, fields = rows[1 + v]
        if len(fields) != 2:
            raise MeshFormatError("expected vertex line `x y`", lineno)
        try:
            vertices[v] = [float(fields[0]), float(fields[1])]
        except ValueError:
            raise MeshFormatError("vertex coordinates must be numbers", lineno) from None
    polygons = []
    for p in range(npoly):
        lineno, fields = rows[1 + nv + p]
        try:
            ids = [int(f) for f in fields]
        except ValueError:
            raise MeshFormatError("polygon indices must be integers", lineno) from None
        if not ids or len(ids) != ids[0] + 1:
            raise MeshFormatError("polygon line must read `m i1 ... im`", lineno)
        cycle = ids[1:]
        if any(i < 0 or i >= nv for i in cycle):
            raise MeshFormatError(f"polygon {p} references a vertex out of range", lineno)
        polygons.append(cycle)
    mesh = PrimalMesh(vertices, polygons, _centroids(vertices, polygons))
    mesh.validate()
    return mesh


def _rot90(v: np.ndarray) -> np.ndarray:
    return np.array([-v[1], v[0]])


def build_staggered(mesh: PrimalMesh) -> StaggeredMesh:
    """Subdivide each polygon into triangles and classify/orient all edges."""
    mesh.validate()
    nv = len(mesh.vertices)
    vertices = np.vstack([mesh.vertices, mesh.interior_points])

    triangles = []
    tri_poly = []
    tri_sides = []  # per-triangle vertex pairs [(primal), (dual1), (dual2)]
    for p, poly in enumerate(mesh.polygons):
        nu_id = nv + p
        m = len(poly)
        for i in range(m):
            a, b = poly[i], poly[(i + 1) % m]
            triangles.append([a, b, nu_id])
            tri_poly.append(p)
            tri_sides.append([(a, b), (b, nu_id), (nu_id, a)])
    triangles = np.array(triangles)
    tri_poly = np.array(tri_poly)

    edge_index: dict[tuple[int, int], int] = {}
    edges: list[Edge] = []
    tri_edges = np.empty((len(triangles), 3), dtype=int)

    coords = vertices
    centroids = coords[triangles].mean(axis=1)
    for t, sides in enumerate(tri_sides):
        for s, (a, b) in enumerate(sides):
            key = (min(a, b), max(a, b))
            if key not in edge_index:
                lo, hi = key
                direction = coords[hi] - coords[lo]
                length = float(np.linalg.norm(direction))
                normal = _rot90(direction / length)
                kind = DUAL if (a >= nv or b >= nv) else PRIMAL_INTERIOR
                edge_index[key] = len(edges)
                edges.append(Edge(lo, hi, kind, normal, _rot90(normal), length))
            eid = edge_index[key]
            edge = edges[eid]
            mid = 0.5 * (coords[edge.v0] + coords[edge.v1])
            outward = mid - centroids[t]
            sign = 1 if float(outward @ edge.normal) > 0.0 else -1
            edge.tris.append((t, sign))
            tri_edges[t, s] = eid

    # Classify boundary primal edges and make their normals point outward.
    for edge in edges:
        if edge.kind == DUAL:
            continue
        if len(edge.tris) == 1:
            edge.kind = PRIMAL_BOUNDARY
            t, sign = edge.tris[0]
            if sign < 0:
                edge.normal = -edge.normal
                edge.tangent = _rot90(edge.normal)
                edge.tris[0] = (t, 1)

    v0 = coords[triangles[:, 0]]
    v1 = coords[triangles[:, 1]]
    v2 = coords[triangles[:, 2]]
    tri_area = 0.5 * np.abs(_cross2(v1 - v0, v2 - v0))
    sides_len = np.stack(
        [
            np.linalg.norm(v1 - v0, axis=1),
            np.linalg.norm(v2 - v1, axis=1),
            np.linalg.norm(v0 - v2, axis=1),
        ]
    )
    tri_diam = sides_len.max(axis=0)

    out = StaggeredMesh(
        primal=mesh,
        vertices=vertices,
        triangles=triangles,
        tri_poly=tri_poly,
        tri_area=tri_area,
        tri_diam=tri_diam,
        edges=edges,
        tri_edges=tri_edges,
        h=float(tri_diam.max()),
    )
    out.validate()
    return out


def eval_jump(edge: Edge, trace1, trace2=None):
    """Signed jump across an edge: delta1*phi1 + delta2*phi2.

    Traces are given in the order of `edge.tris`; one-sided edges take a
    single trace. Works on scalars or arrays of per-point trace values.
    """
    if trace2 is None:
        if len(edge.tris) != 1:
            raise ValueError("two traces required on a two-sided edge")
        return edge.tris[0][1] * np.asarray(trace1)
    if len(edge.tris) != 2:
        raise ValueError("single trace required on a one-sided edge")
    return edge.tris[0][1] * np.asarray(trace1) + edge.tris[1][1] * np.asarray(trace2)
