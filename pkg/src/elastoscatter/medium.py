"""Variable-density medium scattering via a Lippmann-Schwinger volume equation.

The background is a single material everywhere outside the rigid body; the
density contrast 1 - rho(x) inside the penetrable region drives the volume
equation

    (I + T) v = V_inc,   (T v)(x) = omega^2 int (1 - rho(y)) G(x, y) v(y) dy,

where G is the Green function of the background problem with a Dirichlet
(rigid) condition on the embedded boundary; without an embedded body G is the
free-space fundamental solution.  G's correction term is represented by a
combined-field layer ansatz on the rigid boundary (double layer minus i*eta
single layer), so applying T needs one boundary solve per operator
application regardless of the grid size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse.linalg import LinearOperator, gmres

from . import operators as ops
from .geometry import Sphere, SurfaceQuadrature, VolumeGrid, build_surface_quadrature
from .kernels import (
    KernelFamily,
    IncidentField,
    farfield_kernel_double,
    farfield_kernel_single,
    gamma_one_diagonal,
    kelvin_profiles,
)
from .material import Material, wavenumbers


class MediumSolverError(RuntimeError):
    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history or []


@dataclass
class RigidGreenFunction:
    """Green function of the background medium exterior to a rigid body.

    ``correction(x, y) -> (3, 3)`` blocks are produced lazily through a cached
    LU factorization of the combined-field system on the rigid boundary; with
    no rigid body the correction is zero and G reduces to the free-space
    kernel.
    """

    mat: Material
    omega: float
    quad_b: Optional[SurfaceQuadrature] = None
    coupling: float = None
    _lu: tuple = field(default=None, repr=False)
    _spec_W: ops.BoundaryOperatorSpec = field(default=None, repr=False)
    _spec_S: ops.BoundaryOperatorSpec = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.coupling is None:
            self.coupling = max(wavenumbers(self.mat, self.omega).kp, 1.0)
        if self.quad_b is not None:
            self._spec_W = ops.BoundaryOperatorSpec(
                material=self.mat, omega=self.omega, flavor="double", tau=self.mat.mu
            )
            self._spec_S = ops.BoundaryOperatorSpec(
                material=self.mat, omega=self.omega, flavor="single"
            )
            W = ops.assemble(self._spec_W, self.quad_b, self.quad_b)
            S = ops.assemble(self._spec_S, self.quad_b, self.quad_b)
            nb = self.quad_b.n_nodes
            # exterior trace of the combined field: +1/2 identity jump
            A = 0.5 * np.eye(3 * nb) + W.matrix - 1j * self.coupling * S.matrix
            self._lu = lu_factor(A)

    @property
    def has_obstacle(self) -> bool:
        return self.quad_b is not None

    def solve_dirichlet(self, boundary_values: np.ndarray) -> np.ndarray:
        """Density of the radiating field with the given boundary trace."""
        if self._lu is None:
            raise MediumSolverError("no rigid boundary present")
        rhs = np.asarray(boundary_values, dtype=complex).reshape(-1)
        chi = lu_solve(self._lu, rhs)
        return chi.reshape(-1, 3)

    def radiating_field(self, chi: np.ndarray, targets: np.ndarray,
                        gradient: bool = False, allow_near: bool = False):
        resW = ops.evaluate_potential(self._spec_W, self.quad_b, chi, targets,
                                      gradient=gradient, allow_near=allow_near)
        resS = ops.evaluate_potential(self._spec_S, self.quad_b,
                                      -1j * self.coupling * chi, targets,
                                      gradient=gradient, allow_near=allow_near)
        if gradient:
            return resW[0] + resS[0], resW[1] + resS[1]
        return resW + resS

    def evaluate(self, x: np.ndarray, y: np.ndarray,
                 allow_near: bool = False) -> np.ndarray:
        """Full G(x, y) as (n_x, 3, 3) blocks for a single source point y."""
        x = np.atleast_2d(x)
        y = np.asarray(y, dtype=float)
        fam = KernelFamily(self.mat, self.omega)
        X = x
        Y = np.broadcast_to(y, x.shape)
        G = fam.single(X, Y)
        if not self.has_obstacle:
            return G
        key = tuple(np.round(y, 12))
        if key not in self._cache:
            trace = -fam.single(self.quad_b.nodes, np.broadcast_to(y, self.quad_b.nodes.shape))
            # three polarization columns solved at once
            chi = np.stack(
                [self.solve_dirichlet(trace[:, :, j]) for j in range(3)], axis=-1
            )
            self._cache[key] = chi
        chi = self._cache[key]
        cols = [self.radiating_field(chi[:, :, j], x, allow_near=allow_near)
                for j in range(3)]
        return G + np.stack(cols, axis=-1)


def rigid_green(surface_b, mat: Material, omega: float, order: int = 12,
                params: Optional[ops.AssemblyParams] = None) -> RigidGreenFunction:
    """Construct the (possibly obstacle-free) background Green function."""
    if surface_b is None:
        return RigidGreenFunction(mat=mat, omega=omega, quad_b=None)
    quad_b = surface_b if isinstance(surface_b, SurfaceQuadrature) else \
        build_surface_quadrature(surface_b, order)
    return RigidGreenFunction(mat=mat, omega=omega, quad_b=quad_b)


def incident_with_obstacle(G: RigidGreenFunction, inc: IncidentField,
                           grid: VolumeGrid) -> np.ndarray:
    """Background incident field on the grid: incident plus the rigid-body
    scattered correction (zero correction without an obstacle).

    The correction cancels the incident trace on the rigid boundary, so the
    total vanishes there.
    """
    vals = inc.value(grid.centers)
    if not G.has_obstacle:
        return vals
    chi = G.solve_dirichlet(-inc.value(G.quad_b.nodes))
    return vals + G.radiating_field(chi, grid.centers, allow_near=True)


@dataclass
class VolumeOperator:
    """Application of the contrast volume operator T.

    The free-space part is a discrete convolution on the underlying uniform
    lattice and runs through zero-padded FFTs; the rigid-body correction adds
    one cached-LU boundary solve per application.  The self-cell uses the
    static kernel integrated exactly over the volume-equivalent ball plus the
    bounded dynamic remainder times the cell volume.
    """

    G: RigidGreenFunction
    grid: VolumeGrid
    omega: float

    def __post_init__(self):
        self.contrast = 1.0 - self.grid.rho
        mat = self.G.mat
        grid = self.grid
        prof_c = kelvin_profiles(mat, np.array([1.0]))
        c1 = prof_c.g1[0].real
        c2 = prof_c.g2[0].real
        a = (3.0 * grid.volumes / (4.0 * np.pi)) ** (1.0 / 3.0)
        self._self_block = (
            (2.0 * np.pi * a**2) * (c1 + c2 / 3.0)
            + gamma_one_diagonal(mat, self.omega) * grid.volumes
        )

        # kernel FFT on the doubled lattice, with the zero offset left out
        if grid.index is None:
            raise MediumSolverError("volume grid lacks lattice structure")
        nx, ny, nz = grid.shape
        fam = KernelFamily(mat, self.omega)
        ox = np.arange(-(nx - 1), nx)
        oy = np.arange(-(ny - 1), ny)
        oz = np.arange(-(nz - 1), nz)
        OX, OY, OZ = np.meshgrid(ox, oy, oz, indexing="ij")
        offsets = np.stack([OX.ravel(), OY.ravel(), OZ.ravel()], axis=-1)
        pts = offsets * grid.spacing
        nonzero = np.any(offsets != 0, axis=1)
        Kvals = np.zeros((offsets.shape[0], 3, 3), dtype=complex)
        Kvals[nonzero] = fam.single(pts[nonzero], np.zeros_like(pts[nonzero]))
        self._fft_shape = (2 * nx, 2 * ny, 2 * nz)
        Kpad = np.zeros(self._fft_shape + (3, 3), dtype=complex)
        ix = np.mod(offsets[:, 0], 2 * nx)
        iy = np.mod(offsets[:, 1], 2 * ny)
        iz = np.mod(offsets[:, 2], 2 * nz)
        Kpad[ix, iy, iz] = Kvals
        self._Khat = np.fft.fftn(Kpad, axes=(0, 1, 2))

    def _convolve(self, src: np.ndarray) -> np.ndarray:
        """Lattice convolution sum_s K(x_t - y_s) src_s (excluding s = t)."""
        grid = self.grid
        nx, ny, nz = grid.shape
        F = np.zeros((2 * nx, 2 * ny, 2 * nz, 3), dtype=complex)
        F[grid.index[:, 0], grid.index[:, 1], grid.index[:, 2]] = src
        Fhat = np.fft.fftn(F, axes=(0, 1, 2))
        out_hat = np.einsum("...lm,...m->...l", self._Khat, Fhat)
        out = np.fft.ifftn(out_hat, axes=(0, 1, 2))
        return out[grid.index[:, 0], grid.index[:, 1], grid.index[:, 2]]

    def boundary_correction_density(self, src_weight: np.ndarray) -> np.ndarray:
        """Combined-field density of the rigid-boundary correction driven by
        the weighted volume sources."""
        fam = KernelFamily(self.G.mat, self.omega)
        nb = self.G.quad_b.n_nodes
        n = self.grid.n_cells
        trace = np.zeros((nb, 3), dtype=complex)
        bnodes = self.G.quad_b.nodes
        for c0 in range(0, n, 512):
            c1 = min(c0 + 512, n)
            m = c1 - c0
            X = np.repeat(bnodes, m, axis=0)
            Y = np.tile(self.grid.centers[c0:c1], (nb, 1))
            Gb = fam.single(X, Y).reshape(nb, m, 3, 3)
            trace += -np.einsum("bslm,sm->bl", Gb, src_weight[c0:c1])
        return self.G.solve_dirichlet(trace)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """T v with v given as (n_cells, 3) complex values."""
        v = np.asarray(v, dtype=complex).reshape(-1, 3)
        src_weight = (self.contrast * self.grid.volumes)[:, None] * v
        out = self._convolve(src_weight)
        out += (self._self_block * self.contrast)[:, None] * v
        if self.G.has_obstacle:
            chi = self.boundary_correction_density(src_weight)
            out += self.G.radiating_field(chi, self.grid.centers, allow_near=True)
        return self.omega**2 * out

    def norm_estimate(self) -> float:
        """Crude scale of T (for diagnostics): omega^2 max|1-rho| G-volume."""
        return float(self.omega**2 * np.max(np.abs(self.contrast)))


def assemble_volume_operator(G: RigidGreenFunction, grid: VolumeGrid,
                             omega: float) -> VolumeOperator:
    return VolumeOperator(G=G, grid=grid, omega=omega)


@dataclass
class MediumSolution:
    grid: VolumeGrid
    values: np.ndarray  # (n_cells, 3)
    iterations: int
    residual: float
    residual_history: list


def solve_lippmann_schwinger(Top: VolumeOperator, v_inc: np.ndarray,
                             tol: float = 1e-8, maxiter: int = 200) -> MediumSolution:
    """GMRES solve of (I + T) v = v_inc on the grid; exact short-circuit when
    the contrast vanishes."""
    v_inc = np.asarray(v_inc, dtype=complex).reshape(-1, 3)
    n = v_inc.shape[0]
    if np.max(np.abs(Top.contrast)) == 0.0:
        return MediumSolution(grid=Top.grid, values=v_inc.copy(), iterations=0,
                              residual=0.0, residual_history=[])

    history = []

    def matvec(x):
        v = x.reshape(n, 3)
        return (v + Top.apply(v)).reshape(-1)

    A = LinearOperator((3 * n, 3 * n), matvec=matvec, dtype=complex)

    def callback(rk):
        history.append(float(rk))

    b = v_inc.reshape(-1)
    x, info = gmres(A, b, rtol=tol, atol=0.0, maxiter=maxiter, restart=80,
                    callback=callback, callback_type="pr_norm")
    if info != 0:
        raise MediumSolverError(
            f"volume solver did not reach tol {tol} in {maxiter} iterations",
            residual_history=history,
        )
    v = x.reshape(n, 3)
    res = np.linalg.norm(b - (v + Top.apply(v)).reshape(-1)) / np.linalg.norm(b)
    return MediumSolution(grid=Top.grid, values=v, iterations=len(history),
                          residual=float(res), residual_history=history)


def neumann_series(Top: VolumeOperator, v_inc: np.ndarray, terms: int = 12) -> np.ndarray:
    """sum_k (-T)^k v_inc; converges for small contrast."""
    v_inc = np.asarray(v_inc, dtype=complex).reshape(-1, 3)
    acc = v_inc.copy()
    term = v_inc.copy()
    for _ in range(terms):
        term = -Top.apply(term)
        acc += term
    return acc


def scattered_field(sol: MediumSolution, Top: VolumeOperator,
                    targets: np.ndarray) -> np.ndarray:
    """Scattered correction -omega^2 int (1-rho) G(x, .) v at exterior points."""
    targets = np.atleast_2d(targets)
    fam = KernelFamily(Top.G.mat, Top.omega)
    src_weight = (Top.contrast * sol.grid.volumes)[:, None] * sol.values
    n = sol.grid.n_cells
    out = np.zeros((targets.shape[0], 3), dtype=complex)
    for c0 in range(0, targets.shape[0], 64):
        c1 = min(c0 + 64, targets.shape[0])
        m = c1 - c0
        X = np.repeat(targets[c0:c1], n, axis=0)
        Y = np.tile(sol.grid.centers, (m, 1))
        K = fam.single(X, Y).reshape(m, n, 3, 3)
        out[c0:c1] = np.einsum("tslm,sm->tl", K, src_weight)
    if Top.G.has_obstacle:
        chi = Top.boundary_correction_density(src_weight)
        out += Top.G.radiating_field(chi, targets)
    return -Top.omega**2 * out


def far_field(sol: MediumSolution, Top: VolumeOperator, directions: np.ndarray):
    """Far-field pattern of the scattered correction.

    Volume sources radiate through the free-space kernel; the rigid-boundary
    correction radiates through its combined-field layer densities.
    """
    from .transmission import FarFieldPattern

    dirs = np.atleast_2d(directions)
    dirs = dirs / np.linalg.norm(dirs, axis=1)[:, None]
    mat, om = Top.G.mat, Top.omega
    src_weight = (Top.contrast * sol.grid.volumes)[:, None] * sol.values

    Ap, As = farfield_kernel_single(dirs, sol.grid.centers, mat, om)
    up = -om**2 * np.einsum("dslm,sm->dl", Ap, src_weight)
    us = -om**2 * np.einsum("dslm,sm->dl", As, src_weight)

    if Top.G.has_obstacle:
        chi = Top.boundary_correction_density(src_weight)
        qb = Top.G.quad_b
        w = qb.weights[:, None]
        Bp, Bs = farfield_kernel_double(dirs, qb.nodes, qb.normals, mat, om, mat.mu)
        Sp, Ss = farfield_kernel_single(dirs, qb.nodes, mat, om)
        up += -om**2 * (
            np.einsum("dslm,sm->dl", Bp, chi * w)
            - 1j * Top.G.coupling * np.einsum("dslm,sm->dl", Sp, chi * w)
        )
        us += -om**2 * (
            np.einsum("dslm,sm->dl", Bs, chi * w)
            - 1j * Top.G.coupling * np.einsum("dslm,sm->dl", Ss, chi * w)
        )
    return FarFieldPattern(directions=dirs, up_inf=up, us_inf=us)
