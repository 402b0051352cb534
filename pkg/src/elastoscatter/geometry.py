"""Surfaces, quadratures, and volume grids.

Parametric spheres and ellipsoids get a Gauss-Legendre (in cos theta) x
uniform (in phi) product rule.  That rule integrates smooth surface functions
spectrally and carries a chart usable for the local polar patches of the
singular-operator assembly; such quadratures are flagged ``pv_capable``
(every target node admits a locally antipodally symmetric polar rule, which
is what cancels odd principal-value contributions).  Triangle meshes use a
per-face centroid rule: supported for ingestion and smooth evaluation, but
lower order and not usable for on-surface principal values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import sparse


class GeometryError(ValueError):
    pass


class MeshFormatError(GeometryError):
    """OFF file could not be parsed."""


class OpenSurfaceError(GeometryError):
    """Mesh has boundary edges (not watertight)."""


class WindingError(GeometryError):
    """Mesh faces are not consistently oriented."""


# ---------------------------------------------------------------------------
# Surface types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sphere:
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0

    kind = "sphere"


@dataclass(frozen=True)
class Ellipsoid:
    center: tuple = (0.0, 0.0, 0.0)
    semiaxes: tuple = (1.0, 1.0, 1.0)

    kind = "ellipsoid"


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    kind = "mesh"


Surface = Union[Sphere, Ellipsoid, TriangleMesh]


def _center(surface) -> np.ndarray:
    if isinstance(surface, TriangleMesh):
        return surface.vertices.mean(axis=0)
    return np.asarray(surface.center, dtype=float)


def _semiaxes(surface) -> np.ndarray:
    if isinstance(surface, Sphere):
        return np.full(3, float(surface.radius))
    return np.asarray(surface.semiaxes, dtype=float)


def is_inside(surface: Surface, points: np.ndarray) -> np.ndarray:
    """Boolean mask of points strictly inside the closed surface."""
    pts = np.atleast_2d(points)
    if isinstance(surface, (Sphere, Ellipsoid)):
        rel = (pts - _center(surface)) / _semiaxes(surface)
        return np.einsum("nd,nd->n", rel, rel) < 1.0
    return _winding_inside(surface, pts)


def _winding_inside(mesh: TriangleMesh, pts: np.ndarray) -> np.ndarray:
    # Solid-angle winding number (van Oosterom-Strackee).
    v = mesh.vertices
    f = mesh.faces
    out = np.zeros(pts.shape[0], dtype=bool)
    for i, p in enumerate(pts):
        a = v[f[:, 0]] - p
        b = v[f[:, 1]] - p
        c = v[f[:, 2]] - p
        la = np.linalg.norm(a, axis=1)
        lb = np.linalg.norm(b, axis=1)
        lc = np.linalg.norm(c, axis=1)
        num = np.einsum("fd,fd->f", a, np.cross(b, c))
        den = (
            la * lb * lc
            + np.einsum("fd,fd->f", a, b) * lc
            + np.einsum("fd,fd->f", b, c) * la
            + np.einsum("fd,fd->f", a, c) * lb
        )
        omega = 2.0 * np.arctan2(num, den)
        out[i] = abs(omega.sum()) > 2.0 * np.pi
    return out


def normal_at(surface: Surface, point: np.ndarray) -> np.ndarray:
    """Outward unit normal at a point on (or near) the surface."""
    p = np.asarray(point, dtype=float)
    if isinstance(surface, (Sphere, Ellipsoid)):
        rel = (p - _center(surface)) / _semiaxes(surface) ** 2
        return rel / np.linalg.norm(rel)
    centers = mesh_face_centroids(surface)
    i = int(np.argmin(np.linalg.norm(centers - p, axis=1)))
    n = mesh_face_normals(surface)[i]
    return n


def surface_point(surface: Surface, direction: np.ndarray) -> np.ndarray:
    """Point of a parametric surface in the given parameter direction."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    if isinstance(surface, TriangleMesh):
        raise GeometryError("surface_point requires a parametric surface")
    return _center(surface) + _semiaxes(surface) * d


def bounding_box(surface: Surface):
    if isinstance(surface, TriangleMesh):
        return surface.vertices.min(axis=0), surface.vertices.max(axis=0)
    c, ax = _center(surface), _semiaxes(surface)
    return c - ax, c + ax


def diameter(surface: Surface) -> float:
    lo, hi = bounding_box(surface)
    return float(np.max(hi - lo))


# ---------------------------------------------------------------------------
# Parametric chart
# ---------------------------------------------------------------------------

@dataclass
class Chart:
    """Product-grid chart of a parametric surface.

    Nodes live at (theta_i, phi_j); ``directions`` are the corresponding unit
    vectors of the parameter sphere.  ``from_unit`` maps arbitrary parameter
    directions to (points, outward normals, area jacobian), where the
    jacobian is the physical area per unit parameter-sphere area.
    """

    surface: Surface
    theta: np.ndarray  # (n_t,), ascending
    phi: np.ndarray  # (n_p,), uniform on [0, 2 pi)
    n_theta: int = field(init=False)
    n_phi: int = field(init=False)

    def __post_init__(self):
        self.n_theta = len(self.theta)
        self.n_phi = len(self.phi)

    @property
    def h_param(self) -> float:
        return np.pi / self.n_theta

    def node_directions(self) -> np.ndarray:
        tt, pp = np.meshgrid(self.theta, self.phi, indexing="ij")
        st = np.sin(tt)
        d = np.stack([st * np.cos(pp), st * np.sin(pp), np.cos(tt)], axis=-1)
        return d.reshape(-1, 3)

    def from_unit(self, dirs: np.ndarray):
        dirs = np.atleast_2d(dirs)
        ax = _semiaxes(self.surface)
        pts = _center(self.surface) + ax * dirs
        nrm = dirs / ax
        nrm = nrm / np.linalg.norm(nrm, axis=1)[:, None]
        jac = np.prod(ax) * np.linalg.norm(dirs / ax, axis=1)
        return pts, nrm, jac

    def interp_matrix(self, dirs: np.ndarray, stencil: int = 4) -> sparse.csr_matrix:
        """Sparse interpolation from grid nodes to arbitrary directions.

        Local tensor-product Lagrange interpolation: ``stencil`` consecutive
        theta nodes (clamped at the polar caps) times ``stencil`` wrapped phi
        nodes.
        """
        dirs = np.atleast_2d(dirs)
        q = dirs.shape[0]
        z = np.clip(dirs[:, 2], -1.0, 1.0)
        th = np.arccos(z)
        ph = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), 2.0 * np.pi)

        n_t, n_p = self.n_theta, self.n_phi
        s = stencil
        # Virtual theta indices outside [0, n_t) continue the grid across the
        # poles: f(-theta, phi) = f(theta, phi + pi) and likewise at theta = pi.
        # Requires an even phi count (guaranteed by the builder).
        idx = np.searchsorted(self.theta, th)
        i0 = np.clip(idx - s // 2, -s // 2, n_t - s + s // 2)

        def virtual(iv):
            """(theta value, real theta row, phi column shift) for index iv."""
            iv = np.asarray(iv)
            tval = np.empty(iv.shape)
            row = np.empty(iv.shape, dtype=int)
            shift = np.zeros(iv.shape, dtype=int)
            neg = iv < 0
            big = iv >= n_t
            mid = ~(neg | big)
            tval[mid] = self.theta[iv[mid]]
            row[mid] = iv[mid]
            row[neg] = -1 - iv[neg]
            tval[neg] = -self.theta[row[neg]]
            shift[neg] = n_p // 2
            row[big] = 2 * n_t - 1 - iv[big]
            tval[big] = 2.0 * np.pi - self.theta[row[big]]
            shift[big] = n_p // 2
            return tval, row, shift

        # phi stencil (uniform, periodic)
        dphi = 2.0 * np.pi / n_p
        j_near = np.floor((ph - self.phi[0]) / dphi).astype(int)
        j0 = j_near - (s // 2 - 1)

        rows = np.repeat(np.arange(q), s * s)
        cols = np.empty((q, s, s), dtype=int)
        vals = np.empty((q, s, s), dtype=float)

        t_vals = np.empty((q, s))
        t_rows = np.empty((q, s), dtype=int)
        t_shift = np.empty((q, s), dtype=int)
        for a in range(s):
            t_vals[:, a], t_rows[:, a], t_shift[:, a] = virtual(i0 + a)

        # Lagrange weights in theta (nonuniform nodes)
        wt = np.empty((q, s))
        for a in range(s):
            w = np.ones(q)
            for b in range(s):
                if b == a:
                    continue
                w *= (th - t_vals[:, b]) / (t_vals[:, a] - t_vals[:, b])
            wt[:, a] = w
        # Lagrange weights in phi (uniform); use wrapped angular distance
        wp = np.empty((q, s))
        phj = (j0[:, None] + np.arange(s)[None, :]) * dphi + self.phi[0]
        dj = ph[:, None] - phj
        dj = np.mod(dj + np.pi, 2.0 * np.pi) - np.pi  # principal difference
        for a in range(s):
            w = np.ones(q)
            for b in range(s):
                if b == a:
                    continue
                w *= (dj[:, b]) / (dj[:, b] - dj[:, a])
            wp[:, a] = w

        for a in range(s):
            for b in range(s):
                cols[:, a, b] = t_rows[:, a] * n_p + np.mod(j0 + b + t_shift[:, a], n_p)
                vals[:, a, b] = wt[:, a] * wp[:, b]

        return sparse.csr_matrix(
            (vals.ravel(), (rows, cols.reshape(q, -1).ravel())),
            shape=(q, n_t * n_p),
        )


# ---------------------------------------------------------------------------
# Surface quadrature
# ---------------------------------------------------------------------------

@dataclass
class SurfaceQuadrature:
    surface: Surface
    nodes: np.ndarray  # (N, 3)
    normals: np.ndarray  # (N, 3)
    weights: np.ndarray  # (N,)
    patch_ids: np.ndarray  # (N,)
    pv_capable: bool
    chart: Optional[Chart] = None
    _patch_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def spacing(self) -> float:
        """Representative node spacing, used for near-surface thresholds."""
        return float(np.sqrt(np.median(self.weights)))


def build_surface_quadrature(surface: Surface, order: int) -> SurfaceQuadrature:
    """Product quadrature with ``order`` Gauss-Legendre colatitude nodes and
    ``2*order`` uniform longitude nodes (2*order^2 nodes total); centroid rule
    for triangle meshes (``order`` ignored)."""
    if isinstance(surface, TriangleMesh):
        return _mesh_quadrature(surface)
    if order < 1:
        raise GeometryError("quadrature order must be >= 1")

    n_t, n_p = order, 2 * order
    t, wt = leggauss(n_t)
    theta = np.arccos(t[::-1])  # ascending theta
    wt = wt[::-1]
    phi = (np.arange(n_p) + 0.5) * 2.0 * np.pi / n_p
    chart = Chart(surface=surface, theta=theta, phi=phi)

    dirs = chart.node_directions()
    pts, nrm, jac = chart.from_unit(dirs)
    w = np.repeat(wt, n_p) * (2.0 * np.pi / n_p) * jac
    patch = np.repeat(np.arange(n_t), n_p)
    return SurfaceQuadrature(
        surface=surface,
        nodes=pts,
        normals=nrm,
        weights=w,
        patch_ids=patch,
        pv_capable=(n_p % 2 == 0),
        chart=chart,
    )


def mesh_face_normals(mesh: TriangleMesh) -> np.ndarray:
    v = mesh.vertices
    f = mesh.faces
    cr = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    return cr / np.linalg.norm(cr, axis=1)[:, None]


def mesh_face_centroids(mesh: TriangleMesh) -> np.ndarray:
    v = mesh.vertices
    f = mesh.faces
    return (v[f[:, 0]] + v[f[:, 1]] + v[f[:, 2]]) / 3.0


def _mesh_quadrature(mesh: TriangleMesh) -> SurfaceQuadrature:
    v = mesh.vertices
    f = mesh.faces
    cr = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    areas = 0.5 * np.linalg.norm(cr, axis=1)
    return SurfaceQuadrature(
        surface=mesh,
        nodes=mesh_face_centroids(mesh),
        normals=cr / (2.0 * areas[:, None]),
        weights=areas,
        patch_ids=np.arange(f.shape[0]),
        pv_capable=False,
        chart=None,
    )


# ---------------------------------------------------------------------------
# OFF meshes
# ---------------------------------------------------------------------------

def load_mesh(path) -> TriangleMesh:
    """Load and validate a closed, consistently wound triangle mesh from an
    ASCII OFF file.  Orientation is normalized to outward."""
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise MeshFormatError("missing OFF header")
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4  # skip edge count
        verts = np.array(tokens[pos : pos + 3 * nv], dtype=float).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            cnt = int(tokens[pos])
            if cnt != 3:
                raise MeshFormatError(f"only triangular faces supported, got {cnt}-gon")
            faces.append([int(tokens[pos + 1]), int(tokens[pos + 2]), int(tokens[pos + 3])])
            pos += 4
    except MeshFormatError:
        raise
    except (ValueError, IndexError) as exc:
        raise MeshFormatError(f"malformed OFF file: {exc}") from exc

    mesh = TriangleMesh(vertices=verts, faces=np.asarray(faces, dtype=int))
    validate_mesh(mesh)
    return orient_outward(mesh)


def validate_mesh(mesh: TriangleMesh) -> None:
    directed = {}
    for fi, (a, b, c) in enumerate(mesh.faces):
        for e in ((a, b), (b, c), (c, a)):
            if e in directed:
                raise WindingError(f"edge {e} traversed twice in the same direction")
            directed[e] = fi
    for (a, b) in directed:
        if (b, a) not in directed:
            raise OpenSurfaceError(f"edge ({a}, {b}) has no partner: open surface")


def orient_outward(mesh: TriangleMesh) -> TriangleMesh:
    v = mesh.vertices
    f = mesh.faces
    vol = np.einsum("fd,fd->f", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]])).sum() / 6.0
    if vol < 0:
        f = f[:, [0, 2, 1]]
        return TriangleMesh(vertices=v, faces=f)
    return mesh


def write_off(path, mesh: TriangleMesh) -> None:
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{len(mesh.vertices)} {len(mesh.faces)} 0\n")
        for v in mesh.vertices:
            fh.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in mesh.faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def icosphere(subdivisions: int = 0, radius: float = 1.0) -> TriangleMesh:
    """Icosahedron subdivided ``subdivisions`` times and projected to a sphere."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=int,
    )
    for _ in range(subdivisions):
        edge_mid = {}
        new_faces = []
        verts_list = list(verts)

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in edge_mid:
                m = verts_list[i] + verts_list[j]
                m /= np.linalg.norm(m)
                verts_list.append(m)
                edge_mid[key] = len(verts_list) - 1
            return edge_mid[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(verts_list)
        faces = np.array(new_faces, dtype=int)
    return TriangleMesh(vertices=radius * verts, faces=faces)


# ---------------------------------------------------------------------------
# Volume grids
# ---------------------------------------------------------------------------

@dataclass
class VolumeGrid:
    """Clipped uniform midpoint grid.

    ``index``/``shape``/``spacing``/``origin`` expose the underlying lattice
    so volume convolutions with translation-invariant kernels can run on the
    full box (FFT) and finite differences can find neighbors.
    """

    centers: np.ndarray  # (N, 3)
    volumes: np.ndarray  # (N,)
    rho: np.ndarray  # (N,)
    h: float
    outer: Surface
    inner: Optional[Surface] = None
    index: Optional[np.ndarray] = None  # (N, 3) lattice indices
    shape: Optional[tuple] = None
    spacing: Optional[np.ndarray] = None  # (3,)
    origin: Optional[np.ndarray] = None  # center of cell (0,0,0)

    @property
    def n_cells(self) -> int:
        return self.centers.shape[0]


def build_volume_grid(outer: Surface, inner: Optional[Surface], h: float, rho) -> VolumeGrid:
    """Uniform axis-aligned midpoint cells clipped to outer minus closure(inner).

    ``rho`` is a constant or a callable on (n, 3) points.
    """
    if h <= 0:
        raise GeometryError("cell size must be positive")
    lo, hi = bounding_box(outer)
    if inner is not None:
        ilo, ihi = bounding_box(inner)
        if np.any(ilo < lo) or np.any(ihi > hi):
            raise GeometryError("embedded surface is not inside the outer surface")
    counts = np.maximum(np.ceil((hi - lo) / h).astype(int), 1)
    spacing = (hi - lo) / counts
    axes = [lo[d] + (np.arange(counts[d]) + 0.5) * spacing[d] for d in range(3)]
    cell_vol = float(np.prod(spacing))
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=-1)
    II, JJ, KK = np.meshgrid(*[np.arange(counts[d]) for d in range(3)], indexing="ij")
    index = np.stack([II.ravel(), JJ.ravel(), KK.ravel()], axis=-1)

    keep = is_inside(outer, centers)
    if inner is not None:
        keep &= ~is_inside(inner, centers)
    centers = centers[keep]
    index = index[keep]

    if callable(rho):
        rho_vals = np.asarray(rho(centers), dtype=float)
    else:
        rho_vals = np.full(centers.shape[0], float(rho))
    if np.any(rho_vals <= 0):
        raise GeometryError("density must be positive")

    return VolumeGrid(
        centers=centers,
        volumes=np.full(centers.shape[0], cell_vol),
        rho=rho_vals,
        h=float(np.max(spacing)),
        outer=outer,
        inner=inner,
        index=index,
        shape=tuple(int(c) for c in counts),
        spacing=spacing,
        origin=np.array([float(a[0]) for a in axes]),
    )


def probe_point(surface: Surface, z_star: np.ndarray, delta: float, j: int) -> np.ndarray:
    """Exterior probe point z_j = z* + (delta / j) n(z*)."""
    if j < 1:
        raise GeometryError("probe index must be >= 1")
    z = np.asarray(z_star, dtype=float)
    return z + (delta / j) * normal_at(surface, z)
