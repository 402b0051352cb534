"""Nystrom discretization of the boundary integral operators.

Same-surface (singular) operators are assembled with a floating-polar-patch
rule: the integral is split by a smooth partition of unity into a global part
(plain product quadrature, integrand vanishes to all orders at the target)
and a local part integrated in geodesic polar coordinates around the target
on the parameter sphere.  The polar Jacobian removes weak 1/r singularities,
and the angular rule's exact symmetry under alpha -> alpha + pi cancels the
odd principal-value part of 1/r^2 kernels; the surviving radial integrand is
analytic, so Gauss-Legendre in r converges fast.  Densities at patch points
come from local tensor-product Lagrange interpolation on the chart grid.

Hypersingular traction-traction kernels are only assembled in material-pair
combinations whose 1/r^3 parts cancel (see ``assemble_combination``); a
standalone same-surface traction-traction operator is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse

from .kernels import KernelFamily, traction_from_grad
from .geometry import SurfaceQuadrature
from .material import Material


class ConfigurationError(ValueError):
    pass


class NearSurfaceError(ValueError):
    """Evaluation target closer to the source surface than the resolvable
    distance of the plain quadrature."""


@dataclass
class KernelRequest:
    """A kernel evaluation plan: tensor family + derivative order + evaluator."""

    family: KernelFamily
    order: int
    fn: Callable  # fn(tensors, nx, ny) -> (M, 3, 3)


@dataclass(frozen=True)
class BoundaryOperatorSpec:
    """One boundary integral operator: which kernel, which flavor.

    flavor: 'single' | 'double' (uses tau) | 'adjoint_double' (uses gamma)
    | 'traction_traction' (uses gamma and tau).
    """

    material: Material
    omega: float
    flavor: str
    tau: Optional[float] = None
    gamma: Optional[float] = None
    static: bool = False

    def request(self) -> KernelRequest:
        fam = KernelFamily(self.material, self.omega, static=self.static)
        if self.flavor == "single":
            return KernelRequest(fam, 0, lambda t, nx, ny: fam.single_from(t))
        if self.flavor == "double":
            tau = self.material.mu if self.tau is None else self.tau
            return KernelRequest(fam, 1, lambda t, nx, ny: fam.double_from(t, tau, ny))
        if self.flavor == "adjoint_double":
            gam = self.material.mu if self.gamma is None else self.gamma
            return KernelRequest(
                fam, 1, lambda t, nx, ny: fam.adjoint_double_from(t, gam, nx)
            )
        if self.flavor == "traction_traction":
            tau = self.material.mu if self.tau is None else self.tau
            gam = self.material.mu if self.gamma is None else self.gamma
            return KernelRequest(
                fam, 2,
                lambda t, nx, ny: fam.traction_traction_from(t, gam, tau, nx, ny),
            )
        raise ConfigurationError(f"unknown flavor {self.flavor!r}")

    def kernel(self) -> Callable:
        req = self.request()
        return lambda x, nx, y, ny: req.fn(req.family.tensors(x, y, req.order), nx, ny)

    def gradient_request(self) -> KernelRequest:
        fam = KernelFamily(self.material, self.omega, static=self.static)
        if self.flavor == "single":
            return KernelRequest(fam, 1, lambda t, nx, ny: t[1])
        if self.flavor == "double":
            tau = self.material.mu if self.tau is None else self.tau
            return KernelRequest(
                fam, 2, lambda t, nx, ny: fam.double_grad_from(t, tau, ny)
            )
        raise ConfigurationError(f"no gradient kernel for flavor {self.flavor!r}")

    def gradient_kernel(self) -> Callable:
        """x-gradient kernels for off-surface traction evaluation."""
        req = self.gradient_request()
        return lambda x, nx, y, ny: req.fn(req.family.tensors(x, y, req.order), nx, ny)


@dataclass
class DiscreteOperator:
    matrix: np.ndarray  # (3 Nt, 3 Ns) complex
    spec: object
    diagonal_treatment: str  # 'polar-patch' | 'smooth'

    def apply(self, density: np.ndarray) -> np.ndarray:
        """density: (Ns, 3) -> (Nt, 3)."""
        out = self.matrix @ np.asarray(density).reshape(-1)
        return out.reshape(-1, 3)


@dataclass
class AssemblyParams:
    n_r: int = 12
    n_alpha: int = 16
    rho_factor: float = 4.0
    rho_growth: float = 2.0  # patch radius factor grows by this per doubling of order
    stencil: int = 6
    chunk: int = 64
    rho_max: float = 1.2

    def rho(self, chart) -> float:
        # The partition-of-unity transition must be resolved by a slowly
        # growing number of grid points for the blended global quadrature
        # error to decrease under refinement.
        fac = self.rho_factor + self.rho_growth * max(
            0.0, np.log2(chart.n_theta / 12.0)
        )
        return min(fac * chart.h_param, self.rho_max)


def _bump(s: np.ndarray) -> np.ndarray:
    """C-infinity partition-of-unity profile: 1 at s=0, 0 at s>=1, flat ends."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inner = s <= 1e-12
    out[inner] = 1.0
    mid = (~inner) & (s < 1.0)
    sm = s[mid]
    out[mid] = np.exp(2.0 * np.exp(-1.0 / sm) / (sm - 1.0))
    return out


@dataclass
class PatchRule:
    rho: float
    n_points: int  # per target
    points: np.ndarray  # (N * n_points, 3)
    normals: np.ndarray
    weights: np.ndarray  # integration weight incl. blend, (N * n_points,)
    interp: sparse.csr_matrix  # (N * n_points, N)


def _tangent_frame(dirs: np.ndarray):
    trial = np.zeros_like(dirs)
    small = np.abs(dirs[:, 0]) < 0.9
    trial[small, 0] = 1.0
    trial[~small, 1] = 1.0
    e1 = np.cross(dirs, trial)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(dirs, e1)
    return e1, e2


def _patch_rule(quad: SurfaceQuadrature, params: AssemblyParams) -> PatchRule:
    key = (params.n_r, params.n_alpha, params.rho_factor, params.rho_growth, params.stencil)
    if key in quad._patch_cache:
        return quad._patch_cache[key]
    chart = quad.chart
    rho = params.rho(chart)
    n = quad.n_nodes

    r_nodes, r_w = np.polynomial.legendre.leggauss(params.n_r)
    r_nodes = 0.5 * rho * (r_nodes + 1.0)
    r_w = 0.5 * rho * r_w
    alpha = (np.arange(params.n_alpha) + 0.5) * 2.0 * np.pi / params.n_alpha
    d_alpha = 2.0 * np.pi / params.n_alpha

    dirs = chart.node_directions()
    e1, e2 = _tangent_frame(dirs)

    cr, sr = np.cos(r_nodes), np.sin(r_nodes)
    ca, sa = np.cos(alpha), np.sin(alpha)
    # (N, n_r, n_alpha, 3)
    tang = np.einsum("ra,nd->nrad", np.ones((params.n_r, params.n_alpha)), dirs) * cr[None, :, None, None]
    tang += (
        np.einsum("a,nd->nad", ca, e1)[:, None] + np.einsum("a,nd->nad", sa, e2)[:, None]
    ) * sr[None, :, None, None]
    pdirs = tang.reshape(-1, 3)
    pdirs /= np.linalg.norm(pdirs, axis=1)[:, None]

    pts, nrm, jac = chart.from_unit(pdirs)
    blend = _bump(r_nodes / rho)
    w = (blend * sr * r_w)[None, :, None] * d_alpha * np.ones((n, params.n_r, params.n_alpha))
    w = w.reshape(-1) * jac
    interp = chart.interp_matrix(pdirs, stencil=params.stencil)
    rule = PatchRule(rho=rho, n_points=params.n_r * params.n_alpha,
                     points=pts, normals=nrm, weights=w, interp=interp)
    quad._patch_cache[key] = rule
    return rule


def assemble(spec: BoundaryOperatorSpec, quad_tgt: SurfaceQuadrature,
             quad_src: SurfaceQuadrature, params: Optional[AssemblyParams] = None
             ) -> DiscreteOperator:
    """Dense Nystrom matrix of one operator (same- or cross-surface)."""
    mats = assemble_many({"op": spec}, quad_tgt, quad_src, params)
    return mats["op"]


def assemble_combination(terms: Sequence[tuple], quad_tgt: SurfaceQuadrature,
                         quad_src: SurfaceQuadrature,
                         params: Optional[AssemblyParams] = None) -> DiscreteOperator:
    """Assemble sum_k coeff_k * Op_k with the kernels combined pointwise.

    This is the only same-surface path for traction-traction flavors: the
    coefficients must cancel the 1/r^3 singularity of the pair (which the
    transmission coupling constants do by construction).
    """
    term_reqs = [(c, s.request()) for c, s in terms]
    mat = _assemble_kernels({"op": term_reqs}, quad_tgt, quad_src, params)["op"]
    tag = "polar-patch" if quad_tgt is quad_src else "smooth"
    return DiscreteOperator(matrix=mat, spec=tuple(terms), diagonal_treatment=tag)


def assemble_many(specs: dict, quad_tgt: SurfaceQuadrature, quad_src: SurfaceQuadrature,
                  params: Optional[AssemblyParams] = None) -> dict:
    """Assemble several operators sharing one geometry/tensor pass."""
    same = quad_tgt is quad_src
    for name, spec in specs.items():
        if spec.flavor == "traction_traction" and same:
            raise ConfigurationError(
                "standalone same-surface traction-traction operators are "
                "hypersingular; use assemble_combination with canceling "
                "coefficients"
            )
    ops_terms = {name: [(1.0, spec.request())] for name, spec in specs.items()}
    mats = _assemble_kernels(ops_terms, quad_tgt, quad_src, params)
    tag = "polar-patch" if same else "smooth"
    return {name: DiscreteOperator(matrix=mats[name], spec=specs[name],
                                   diagonal_treatment=tag)
            for name in specs}


def _eval_terms(terms, tensor_cache, families, orders, x, nx, y, ny):
    """Evaluate sum of coeff * kernel over shared per-family tensors."""
    for key, fam in families.items():
        if key not in tensor_cache:
            tensor_cache[key] = fam.tensors(x, y, orders[key])
    acc = None
    for c, req in terms:
        v = req.fn(tensor_cache[req.family.key], nx, ny)
        v = v if c == 1.0 else c * v
        acc = v if acc is None else acc + v
    return acc


def _assemble_kernels(ops_terms: dict, quad_tgt, quad_src, params) -> dict:
    """ops_terms: name -> [(coeff, KernelRequest)]; returns name -> matrix."""
    params = params or AssemblyParams()
    same = quad_tgt is quad_src
    if same and not quad_src.pv_capable:
        raise ConfigurationError(
            "same-surface assembly requires a locally symmetric parametric "
            "quadrature (pv_capable)"
        )
    nt, ns = quad_tgt.n_nodes, quad_src.n_nodes
    out = {name: np.zeros((3 * nt, 3 * ns), dtype=complex) for name in ops_terms}

    families, orders = {}, {}
    for terms in ops_terms.values():
        for _, req in terms:
            key = req.family.key
            families[key] = req.family
            orders[key] = max(orders.get(key, 0), req.order)

    if same:
        patch = _patch_rule(quad_src, params)
        dirs = quad_src.chart.node_directions()

    xs, nxs = quad_tgt.nodes, quad_tgt.normals
    ys, nys = quad_src.nodes, quad_src.normals
    w_src = quad_src.weights

    for c0 in range(0, nt, params.chunk):
        c1 = min(c0 + params.chunk, nt)
        m = c1 - c0
        X = np.repeat(xs[c0:c1], ns, axis=0)
        NX = np.repeat(nxs[c0:c1], ns, axis=0)
        Y = np.tile(ys, (m, 1))
        NY = np.tile(nys, (m, 1))
        if same:
            # blend factor 1 - eta(d/rho); diagonal pairs are excluded entirely
            cosd = np.clip(dirs[c0:c1] @ dirs.T, -1.0, 1.0)
            d = np.arccos(cosd)
            wfac = (1.0 - _bump(d / patch.rho)) * w_src[None, :]
            idx = np.arange(c0, c1)
            wfac[np.arange(m), idx] = 0.0
            sel = (wfac > 0).reshape(-1)
        else:
            wfac = np.ones((m, 1)) * w_src[None, :]
            sel = slice(None)

        Xs, NXs, Ys, NYs = X[sel], NX[sel], Y[sel], NY[sel]
        wflat = wfac.reshape(-1)[sel] if same else wfac.reshape(-1)
        cache = {}
        for name, terms in ops_terms.items():
            Kv = _eval_terms(terms, cache, families, orders, Xs, NXs, Ys, NYs)
            Kw = Kv * wflat[:, None, None]
            if same:
                block = np.zeros((m * ns, 3, 3), dtype=complex)
                block[sel] = Kw
            else:
                block = Kw
            block = block.reshape(m, ns, 3, 3)
            out[name][3 * c0 : 3 * c1] += (
                block.transpose(0, 2, 1, 3).reshape(3 * m, 3 * ns)
            )

    if same:
        npts = patch.n_points
        for c0 in range(0, nt, params.chunk * 4):
            c1 = min(c0 + params.chunk * 4, nt)
            m = c1 - c0
            rows = np.repeat(np.arange(m), npts)
            cols = np.arange(m * npts)
            lo, hi = c0 * npts, c1 * npts
            X = np.repeat(xs[c0:c1], npts, axis=0)
            NX = np.repeat(nxs[c0:c1], npts, axis=0)
            Pblock = patch.interp[lo:hi]
            cache = {}
            for name, terms in ops_terms.items():
                Kv = _eval_terms(terms, cache, families, orders, X, NX,
                                 patch.points[lo:hi], patch.normals[lo:hi])
                Kw = Kv * patch.weights[lo:hi, None, None]
                for l in range(3):
                    for mc in range(3):
                        R = sparse.csr_matrix(
                            (Kw[:, l, mc], (rows, cols)), shape=(m, m * npts)
                        )
                        out[name][3 * c0 + l : 3 * c1 : 3, mc::3] += (R @ Pblock).toarray()
    return out


# ---------------------------------------------------------------------------
# Off-surface evaluation
# ---------------------------------------------------------------------------

def evaluate_potential(spec: BoundaryOperatorSpec, quad_src: SurfaceQuadrature,
                       density: np.ndarray, targets: np.ndarray,
                       target_normals: Optional[np.ndarray] = None,
                       gradient: bool = False, allow_near: bool = False,
                       chunk: int = 256):
    """Layer potential (and optionally its gradient) at off-surface targets.

    Raises NearSurfaceError when a target is within one node spacing of the
    source surface, unless ``allow_near``.
    """
    targets = np.atleast_2d(targets)
    density = np.asarray(density, dtype=complex).reshape(quad_src.n_nodes, 3)
    spacing = quad_src.spacing()
    kern = spec.kernel()
    gkern = spec.gradient_kernel() if gradient else None

    nt = targets.shape[0]
    vals = np.zeros((nt, 3), dtype=complex)
    grads = np.zeros((nt, 3, 3), dtype=complex) if gradient else None
    ys, nys, ws = quad_src.nodes, quad_src.normals, quad_src.weights
    ns = quad_src.n_nodes
    wphi = ws[:, None] * density

    for c0 in range(0, nt, chunk):
        c1 = min(c0 + chunk, nt)
        m = c1 - c0
        X = np.repeat(targets[c0:c1], ns, axis=0)
        if target_normals is not None:
            NX = np.repeat(np.atleast_2d(target_normals)[c0:c1], ns, axis=0)
        else:
            NX = np.zeros_like(X)
        Y = np.tile(ys, (m, 1))
        NY = np.tile(nys, (m, 1))
        dist = np.linalg.norm(X - Y, axis=1).reshape(m, ns)
        if not allow_near and np.any(dist.min(axis=1) < spacing):
            raise NearSurfaceError(
                f"target within one node spacing ({spacing:.3g}) of the source "
                "surface; refine the quadrature or move the target"
            )
        K = kern(X, NX, Y, NY).reshape(m, ns, 3, 3)
        vals[c0:c1] = np.einsum("tslm,sm->tl", K, wphi)
        if gradient:
            DK = gkern(X, NX, Y, NY).reshape(m, ns, 3, 3, 3)
            grads[c0:c1] = np.einsum("tslmj,sm->tlj", DK, wphi)
    if gradient:
        return vals, grads
    return vals


def traction_of_potential(spec: BoundaryOperatorSpec, quad_src: SurfaceQuadrature,
                          density: np.ndarray, targets: np.ndarray,
                          target_normals: np.ndarray, gamma: Optional[float] = None,
                          allow_near: bool = False):
    """Generalized traction T^gamma of a layer potential at off-surface targets."""
    gamma = spec.material.mu if gamma is None else gamma
    _, J = evaluate_potential(spec, quad_src, density, targets,
                              target_normals=target_normals, gradient=True,
                              allow_near=allow_near)
    return traction_from_grad(J, np.atleast_2d(target_normals),
                              spec.material.lam, spec.material.mu, gamma)


def evaluate_potential_near(spec_or_terms, quad_src: SurfaceQuadrature,
                            density: np.ndarray, foot_index: int, eps: float,
                            side: int, params: Optional[AssemblyParams] = None,
                            gradient: bool = False):
    """Potential at x = node + side * eps * normal for small eps.

    Uses the blended global rule plus a composite radial polar patch refined
    toward the foot point, so eps far below the node spacing is resolvable.
    ``spec_or_terms`` is a BoundaryOperatorSpec or a [(coeff, spec)] list.
    """
    params = params or AssemblyParams()
    if not quad_src.pv_capable:
        raise ConfigurationError("near evaluation requires a parametric quadrature")
    if isinstance(spec_or_terms, BoundaryOperatorSpec):
        terms = [(1.0, spec_or_terms)]
    else:
        terms = list(spec_or_terms)
    kerns = [(c, s.kernel()) for c, s in terms]
    gkerns = [(c, s.gradient_kernel()) for c, s in terms] if gradient else None

    density = np.asarray(density, dtype=complex).reshape(quad_src.n_nodes, 3)
    chart = quad_src.chart
    rho = params.rho(chart)
    i = foot_index
    x = quad_src.nodes[i] + side * eps * quad_src.normals[i]
    nx = quad_src.normals[i]

    # global blended part
    dirs = chart.node_directions()
    d = np.arccos(np.clip(dirs @ dirs[i], -1.0, 1.0))
    wfac = (1.0 - _bump(d / rho)) * quad_src.weights
    m = wfac > 0
    X = np.repeat(x[None], m.sum(), axis=0)
    NX = np.repeat(nx[None], m.sum(), axis=0)
    val = np.zeros(3, dtype=complex)
    grad = np.zeros((3, 3), dtype=complex)
    for c, k in kerns:
        K = k(X, NX, quad_src.nodes[m], quad_src.normals[m])
        val += c * np.einsum("slm,sm->l", K, wfac[m, None] * density[m])
    if gradient:
        for c, gk in gkerns:
            DK = gk(X, NX, quad_src.nodes[m], quad_src.normals[m])
            grad += c * np.einsum("slmj,sm->lj", DK, wfac[m, None] * density[m])

    # composite radial polar patch
    seg_edges = [0.0, min(4.0 * eps, 0.5 * rho)]
    while seg_edges[-1] < rho:
        seg_edges.append(min(seg_edges[-1] * 3.0, rho))
    r_nodes, r_ws = [], []
    gl_x, gl_w = np.polynomial.legendre.leggauss(12)
    for a, b in zip(seg_edges[:-1], seg_edges[1:]):
        r_nodes.append(0.5 * (b - a) * (gl_x + 1.0) + a)
        r_ws.append(0.5 * (b - a) * gl_w)
    r_nodes = np.concatenate(r_nodes)
    r_ws = np.concatenate(r_ws)
    n_alpha = params.n_alpha
    alpha = (np.arange(n_alpha) + 0.5) * 2.0 * np.pi / n_alpha

    e1, e2 = _tangent_frame(dirs[i][None])
    e1, e2 = e1[0], e2[0]
    cr, sr = np.cos(r_nodes), np.sin(r_nodes)
    pd = (
        cr[:, None, None] * dirs[i][None, None, :]
        + sr[:, None, None]
        * (np.cos(alpha)[None, :, None] * e1 + np.sin(alpha)[None, :, None] * e2)
    ).reshape(-1, 3)
    pd /= np.linalg.norm(pd, axis=1)[:, None]
    pts, nrm, jac = chart.from_unit(pd)
    w = np.broadcast_to(
        ((_bump(r_nodes / rho) * sr * r_ws) * (2.0 * np.pi / n_alpha))[:, None],
        (r_nodes.size, n_alpha),
    ).reshape(-1) * jac
    P = chart.interp_matrix(pd, stencil=params.stencil)
    phi_p = P @ density
    X = np.repeat(x[None], pts.shape[0], axis=0)
    NX = np.repeat(nx[None], pts.shape[0], axis=0)
    for c, k in kerns:
        K = k(X, NX, pts, nrm)
        val += c * np.einsum("slm,sm->l", K, w[:, None] * phi_p)
    if gradient:
        for c, gk in gkerns:
            DK = gk(X, NX, pts, nrm)
            grad += c * np.einsum("slmj,sm->lj", DK, w[:, None] * phi_p)
        return val, grad
    return val
