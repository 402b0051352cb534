"""Closed-form kernels for time-harmonic elastodynamics.

The displacement fundamental solution is

    Gamma(x, y) = (1/mu) Phi_ks(r) I + (1/omega^2) grad grad^T [Phi_ks - Phi_kp],

with ``Phi_k(r) = exp(i k r) / (4 pi r)`` and ``r = |x - y|``.  Everything in
this module reduces to the radial profiles ``g1, g2`` of

    Gamma = g1(r) I + g2(r) rhat rhat^T

and their first two derivatives.  Differences of spherical waves and their
radial derivatives (where the static 1/r^n singularities cancel between the
pressure and shear terms) are evaluated by a power series at small ``k r`` to
avoid catastrophic cancellation.

Index conventions used throughout the package:

* gradients of vector fields are stored as ``J[l, m] = d u_l / d x_m``;
* ``fundamental_dx(...)[l, m, k] = d Gamma_lm / d x_k`` (derivative in the
  *target* coordinate; source derivatives flip the sign);
* the double-layer kernel is ``[T^tau_y Gamma(x, y)]^T`` with the transpose
  applied after the traction.  This placement is forced by the far-field
  polarization split: only with the transpose outside is the pressure-phase
  amplitude of the double-layer potential radial.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .material import Material, Wavenumbers, validate_material, wavenumbers

FOUR_PI = 4.0 * np.pi


class SingularityError(ValueError):
    """Kernel evaluated at (nearly) coincident source and target."""


def _check_separation(r: np.ndarray, tol: float = 1e-13) -> None:
    if np.any(r < tol):
        raise SingularityError("source and target points (nearly) coincide")


# ---------------------------------------------------------------------------
# Radial profiles of spherical waves
# ---------------------------------------------------------------------------

def _phi_derivative_factors(k: float, r: np.ndarray, nmax: int) -> list[np.ndarray]:
    """Derivatives f^(n)(r) of f(r) = exp(ikr)/(4 pi r) for n = 0..nmax.

    Uses f^(n) = f * Q_n(1/r) with polynomial recursion
    Q_{n+1} = Q_n' + (ik - 1/r) Q_n.
    """
    u = 1.0 / r
    ik = 1j * k
    f = np.exp(ik * r) / (FOUR_PI * r)
    # Q_n coefficients in ascending powers of u = 1/r.
    coeffs = [
        np.array([1.0], dtype=complex),
        np.array([ik, -1.0], dtype=complex),
        np.array([-(k**2), -2 * ik, 2.0], dtype=complex),
        np.array([-1j * k**3, 3 * k**2, 6 * ik, -6.0], dtype=complex),
        np.array([k**4, 4j * k**3, -12 * k**2, -24 * ik, 24.0], dtype=complex),
    ]
    out = []
    for n in range(nmax + 1):
        q = np.zeros_like(u, dtype=complex)
        for c in coeffs[n][::-1]:
            q = q * u + c
        out.append(f * q)
    return out


def _phi_diff_derivatives(
    kp: float, ks: float, r: np.ndarray, nmax: int, series_terms: int = 30
) -> list[np.ndarray]:
    """Differences f_ks^(n)(r) - f_kp^(n)(r) for n = 0..nmax.

    The leading (-1)^n n! / (4 pi r^{n+1}) parts cancel exactly between the
    two wavenumbers, so a direct evaluation loses ~(k r)^{-(n+1)} digits.
    Below ``ks * r < 1.5`` the convergent series

        (1/4pi) sum_{m>=n} [(i ks)^{m+1} - (i kp)^{m+1}] r^{m-n} / ((m+1)(m-n)!)

    is used instead.
    """
    r = np.asarray(r, dtype=float)
    small = ks * r < 1.5
    out = [np.zeros(r.shape, dtype=complex) for _ in range(nmax + 1)]

    if np.any(~small):
        rd = r[~small]
        fs = _phi_derivative_factors(ks, rd, nmax)
        fp = _phi_derivative_factors(kp, rd, nmax)
        for n in range(nmax + 1):
            out[n][~small] = fs[n] - fp[n]

    if np.any(small):
        rs = r[small]
        iks_pow = (1j * ks) ** np.arange(1, nmax + series_terms + 2)
        ikp_pow = (1j * kp) ** np.arange(1, nmax + series_terms + 2)
        dpow = iks_pow - ikp_pow  # index m -> dpow[m]
        from math import factorial

        for n in range(nmax + 1):
            acc = np.zeros_like(rs, dtype=complex)
            rpow = np.ones_like(rs)
            for m in range(n, n + series_terms):
                acc += dpow[m] * rpow / ((m + 1) * factorial(m - n))
                rpow = rpow * rs
            out[n][small] = acc / FOUR_PI
    return out


@dataclass
class RadialProfiles:
    """g1, g2 of Gamma = g1 I + g2 rhat rhat^T, plus radial derivatives."""

    g1: np.ndarray
    g2: np.ndarray
    g1p: Optional[np.ndarray] = None
    g2p: Optional[np.ndarray] = None
    g1pp: Optional[np.ndarray] = None
    g2pp: Optional[np.ndarray] = None


def radial_profiles(mat: Material, omega: float, r: np.ndarray, nderiv: int = 0) -> RadialProfiles:
    wn = wavenumbers(mat, omega)
    kp, ks = wn.kp, wn.ks
    om2 = omega**2
    mu = mat.mu

    fs = _phi_derivative_factors(ks, r, min(nderiv + 2, 4))
    d = _phi_diff_derivatives(kp, ks, r, nderiv + 2)

    d1 = d[1] / r
    d2 = d[2]
    prof = RadialProfiles(g1=fs[0] / mu + d1 / om2, g2=(d2 - d1) / om2)
    if nderiv >= 1:
        d1p = (d2 - d1) / r
        d2p = d[3]
        prof.g1p = fs[1] / mu + d1p / om2
        prof.g2p = (d2p - d1p) / om2
    if nderiv >= 2:
        d1p = (d2 - d1) / r
        d2p = d[3]
        d1pp = (d2p - d1p) / r - (d2 - d1) / r**2
        d2pp = d[4]
        prof.g1pp = fs[2] / mu + d1pp / om2
        prof.g2pp = (d2pp - d1pp) / om2
    return prof


def kelvin_profiles(mat: Material, r: np.ndarray, nderiv: int = 0) -> RadialProfiles:
    """Static (Kelvin) profiles: g1 = C1/r, g2 = C2/r.

    C1 = (lam + 3 mu) / (8 pi mu (lam + 2 mu)),
    C2 = (lam + mu) / (8 pi mu (lam + 2 mu)).
    The normalization is fixed by requiring Gamma - Gamma_0 and its first
    derivatives to stay bounded at coinciding points.
    """
    den = 8.0 * np.pi * mat.mu * (mat.lam + 2.0 * mat.mu)
    c1 = (mat.lam + 3.0 * mat.mu) / den
    c2 = (mat.lam + mat.mu) / den
    z = np.zeros_like(r, dtype=complex)
    prof = RadialProfiles(g1=c1 / r + z, g2=c2 / r + z)
    if nderiv >= 1:
        prof.g1p = -c1 / r**2 + z
        prof.g2p = -c2 / r**2 + z
    if nderiv >= 2:
        prof.g1pp = 2.0 * c1 / r**3 + z
        prof.g2pp = 2.0 * c2 / r**3 + z
    return prof


# ---------------------------------------------------------------------------
# Tensor assembly from radial profiles
# ---------------------------------------------------------------------------

def _tensors_from_profiles(prof: RadialProfiles, rhat: np.ndarray, r: np.ndarray, order: int):
    """Gamma and its x-derivatives from radial profiles.

    Returns (G,) or (G, DG) or (G, DG, DDG) where
    G[..., l, m] = Gamma_lm, DG[..., l, m, k] = d Gamma_lm / d x_k,
    DDG[..., l, m, k, j] = d^2 Gamma_lm / d x_k d x_j.

    Kronecker-delta terms are written by axis slicing rather than einsum;
    this dominates assembly cost and is worth the explicit loops.
    """
    eye = np.eye(3)
    rr = rhat[..., :, None] * rhat[..., None, :]
    G = prof.g1[..., None, None] * eye + prof.g2[..., None, None] * rr
    if order == 0:
        return (G,)

    g1, g2 = prof.g1, prof.g2
    g1p, g2p = prof.g1p, prof.g2p
    G1 = g1p
    G3 = g2p - 2.0 * g2 / r
    G4 = g2 / r

    a_rk = G1[..., None] * rhat  # (..., 3)
    b_r = G4[..., None] * rhat
    DG = G3[..., None, None, None] * (rr[..., :, :, None] * rhat[..., None, None, :])
    for i in range(3):
        DG[..., i, i, :] += a_rk  # delta_lm rhat_k
        DG[..., i, :, i] += b_r  # delta_kl rhat_m
        DG[..., :, i, i] += b_r  # delta_km rhat_l
    if order == 1:
        return G, DG

    g1pp, g2pp = prof.g1pp, prof.g2pp
    c4 = (g2pp - 2.0 * g2p / r + 2.0 * g2 / r**2) - 3.0 * G3 / r
    a1 = g1pp - G1 / r  # delta_lm (rr)_kj
    a2 = G3 / r  # delta_kj (rr)_lm
    a3 = G3 / r  # delta_jl (rr)_km + delta_jm (rr)_kl
    a4 = (g2p / r - g2 / r**2) - G4 / r  # delta_kl (rr)_jm + delta_km (rr)_jl
    b1 = G1 / r  # delta_lm delta_kj
    b2 = G4 / r  # delta_kl delta_jm + delta_km delta_jl

    DDG = c4[..., None, None, None, None] * (
        rr[..., :, :, None, None] * rr[..., None, None, :, :]
    )
    rr_a1 = a1[..., None, None] * rr
    rr_a2 = a2[..., None, None] * rr
    rr_a3 = a3[..., None, None] * rr
    rr_a4 = a4[..., None, None] * rr
    for i in range(3):
        DDG[..., i, i, :, :] += rr_a1  # delta_lm: (k, j) block
        DDG[..., :, :, i, i] += rr_a2  # delta_kj: (l, m) block
        DDG[..., :, i, :, i] += rr_a3  # delta_jm: (l, k) block
        DDG[..., i, :, :, i] += rr_a3  # delta_jl: (m, k) block
        DDG[..., i, :, i, :] += rr_a4  # delta_kl: (m, j) block
        DDG[..., :, i, i, :] += rr_a4  # delta_km: (l, j) block
        for jj in range(3):
            DDG[..., i, i, jj, jj] += b1  # delta_lm delta_kj
            DDG[..., i, jj, i, jj] += b2  # delta_kl delta_jm
            DDG[..., i, jj, jj, i] += b2  # delta_km delta_jl
    return G, DG, DDG


# ---------------------------------------------------------------------------
# Public kernel evaluations
# ---------------------------------------------------------------------------

def _split_dx(x: np.ndarray, y: np.ndarray):
    dx = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(dx, axis=-1)
    _check_separation(r)
    rhat = dx / r[..., None]
    return r, rhat


def helmholtz_green(x: np.ndarray, y: np.ndarray, k: float) -> np.ndarray:
    """Scalar Helmholtz kernel exp(ik|x-y|)/(4 pi |x-y|)."""
    r = np.linalg.norm(np.asarray(x, float) - np.asarray(y, float), axis=-1)
    _check_separation(r)
    return np.exp(1j * k * r) / (FOUR_PI * r)


def grad_helmholtz(x: np.ndarray, y: np.ndarray, k: float) -> np.ndarray:
    """Gradient in x of the Helmholtz kernel."""
    r, rhat = _split_dx(x, y)
    f = _phi_derivative_factors(k, r, 1)
    return f[1][..., None] * rhat


def grad2_helmholtz(x: np.ndarray, y: np.ndarray, k: float) -> np.ndarray:
    """Hessian in x of the Helmholtz kernel, H[..., l, m] = d^2 Phi/dx_l dx_m."""
    r, rhat = _split_dx(x, y)
    f = _phi_derivative_factors(k, r, 2)
    eye = np.eye(3)
    rr = np.einsum("...l,...m->...lm", rhat, rhat)
    return f[2][..., None, None] * rr + (f[1] / r)[..., None, None] * (eye - rr)


def grad3_helmholtz(x: np.ndarray, y: np.ndarray, k: float) -> np.ndarray:
    """Third derivative tensor T[..., l, m, k] = d^3 Phi / dx_l dx_m dx_k."""
    r, rhat = _split_dx(x, y)
    f = _phi_derivative_factors(k, r, 3)
    rrr = np.einsum("...l,...m,...k->...lmk", rhat, rhat, rhat)
    eye = np.eye(3)
    sym = (
        np.einsum("lk,...m->...lmk", eye, rhat)
        + np.einsum("mk,...l->...lmk", eye, rhat)
        + np.einsum("lm,...k->...lmk", eye, rhat)
        - 3.0 * rrr
    )
    return f[3][..., None, None, None] * rrr + ((f[2] - f[1] / r) / r)[..., None, None, None] * sym


def lame_fundamental(x, y, mat: Material, omega: float, order: int = 0):
    """Fundamental solution Gamma(x, y) and optionally its x-derivatives.

    order = 0 -> (G,), 1 -> (G, DG), 2 -> (G, DG, DDG); see module docstring
    for index layout.
    """
    r, rhat = _split_dx(x, y)
    prof = radial_profiles(mat, omega, r, nderiv=order)
    return _tensors_from_profiles(prof, rhat, r, order)


def kelvin_matrix(x, y, mat: Material, order: int = 0):
    """Static fundamental solution (Kelvin matrix) and derivatives."""
    validate_material(mat)
    r, rhat = _split_dx(x, y)
    prof = kelvin_profiles(mat, r, nderiv=order)
    return _tensors_from_profiles(prof, rhat, r, order)


def gamma_one_diagonal(mat: Material, omega: float) -> complex:
    """Coinciding-point limit of Gamma - Gamma_0 (a multiple of the identity):
    i (2 ks^3 + kp^3) / (12 pi omega^2)."""
    wn = wavenumbers(mat, omega)
    return 1j * (2.0 * wn.ks**3 + wn.kp**3) / (12.0 * np.pi * omega**2)


def traction(grad: np.ndarray, div: np.ndarray, curl: np.ndarray, n: np.ndarray,
             mat: Material, tau: float) -> np.ndarray:
    """Generalized traction T^tau u = (mu+tau) n.grad u + (lam+mu-tau) n div u
    + tau n x curl u, from precomputed first derivatives.

    ``grad[..., l, m] = d u_l / d x_m``; tau = mu recovers the physical traction.
    """
    n = np.asarray(n, dtype=float)
    if not np.allclose(np.linalg.norm(n, axis=-1), 1.0, atol=1e-10):
        raise ValueError("traction requires unit normals")
    lam, mu = mat.lam, mat.mu
    ngrad = np.einsum("...lm,...m->...l", grad, n)
    ncurl = np.cross(n, curl)
    return (mu + tau) * ngrad + (lam + mu - tau) * div[..., None] * n + tau * ncurl


def traction_from_grad(J: np.ndarray, n: np.ndarray, lam: float, mu: float,
                       tau: float) -> np.ndarray:
    """T^tau u = mu J n + tau J^T n + (lam + mu - tau) (tr J) n."""
    Jn = np.einsum("...lm,...m->...l", J, n)
    Jtn = np.einsum("...ml,...m->...l", J, n)
    trJ = np.einsum("...mm->...", J)
    return mu * Jn + tau * Jtn + (lam + mu - tau) * trJ[..., None] * n


def guenter_from_grad(J: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Guenter (surface rotation) operator M u = J^T n - (tr J) n.

    (M u)_l = sum_m (n_m d_l - n_l d_m) u_m; only tangential derivatives
    of u enter, so M of interface data is computable from one-sided traces.
    """
    Jtn = np.einsum("...ml,...m->...l", J, n)
    trJ = np.einsum("...mm->...", J)
    return Jtn - trJ[..., None] * n


# ---------------------------------------------------------------------------
# Layer-potential kernels
# ---------------------------------------------------------------------------

@dataclass
class KernelFamily:
    """Shared evaluation of the single/double/adjoint/traction-traction kernels
    for one material at one frequency.

    All methods are vectorized over a leading pairs axis.  ``ny``/``nx`` are
    unit normals at source/target points.  For assembling several operators
    over the same point pairs, compute ``tensors`` once and use the
    ``*_from`` variants.
    """

    mat: Material
    omega: float
    static: bool = False  # Kelvin (zero-frequency) kernels

    @property
    def key(self):
        return (self.mat.lam, self.mat.mu, None if self.static else self.omega)

    def tensors(self, x, y, order):
        if self.static:
            return kelvin_matrix(x, y, self.mat, order=order)
        return lame_fundamental(x, y, self.mat, self.omega, order=order)

    def single_from(self, tensors, nx=None, ny=None):
        return tensors[0]

    def double_from(self, tensors, tau, ny, nx=None):
        """[T^tau_y Gamma(x,y)]^T: K_ln = [T^tau_y (Gamma e_l)]_n."""
        lam, mu = self.mat.lam, self.mat.mu
        DG = tensors[1]
        # J^{(l)}_{nm} = d Gamma_nl / d y_m = -DG[n, l, m]
        t1 = -mu * np.einsum("...nlm,...m->...ln", DG, ny)
        t2 = -tau * np.einsum("...mln,...m->...ln", DG, ny)
        t3 = -(lam + mu - tau) * np.einsum("...ala,...n->...ln", DG, ny)
        return t1 + t2 + t3

    def adjoint_double_from(self, tensors, gamma, nx, ny=None):
        """T^gamma_x Gamma(x,y): K'_ln = [T^gamma_x (Gamma e_n)]_l."""
        lam, mu = self.mat.lam, self.mat.mu
        DG = tensors[1]
        t1 = mu * np.einsum("...lnm,...m->...ln", DG, nx)
        t2 = gamma * np.einsum("...mnl,...m->...ln", DG, nx)
        t3 = (lam + mu - gamma) * np.einsum("...ana,...l->...ln", DG, nx)
        return t1 + t2 + t3

    def double_grad_from(self, tensors, tau, ny):
        """x-gradient of the double-layer kernel: DK[..., l, n, j] = d K_ln / d x_j."""
        lam, mu = self.mat.lam, self.mat.mu
        DDG = tensors[2]
        t1 = -mu * np.einsum("...nlmj,...m->...lnj", DDG, ny)
        t2 = -tau * np.einsum("...mlnj,...m->...lnj", DDG, ny)
        t3 = -(lam + mu - tau) * np.einsum("...alaj,...n->...lnj", DDG, ny)
        return t1 + t2 + t3

    def traction_traction_from(self, tensors, gamma, tau, nx, ny):
        """T^gamma_x [T^tau_y Gamma]^T — hypersingular alone; assemble only in
        material-pair differences where the 1/r^3 parts cancel."""
        lam, mu = self.mat.lam, self.mat.mu
        DK = self.double_grad_from(tensors, tau, ny)
        t1 = mu * np.einsum("...lnj,...j->...ln", DK, nx)
        t2 = gamma * np.einsum("...jnl,...j->...ln", DK, nx)
        t3 = (lam + mu - gamma) * np.einsum("...jnj,...l->...ln", DK, nx)
        return t1 + t2 + t3

    # convenience one-shot wrappers -------------------------------------
    def single(self, x, y, nx=None, ny=None):
        return self.single_from(self.tensors(x, y, 0))

    def double(self, x, y, tau, ny, nx=None):
        return self.double_from(self.tensors(x, y, 1), tau, ny)

    def adjoint_double(self, x, y, gamma, nx, ny=None):
        return self.adjoint_double_from(self.tensors(x, y, 1), gamma, nx)

    def double_grad(self, x, y, tau, ny):
        return self.double_grad_from(self.tensors(x, y, 2), tau, ny)

    def traction_traction(self, x, y, gamma, tau, nx, ny):
        return self.traction_traction_from(self.tensors(x, y, 2), gamma, tau, nx, ny)

    def single_grad(self, x, y, ny=None):
        """DS[..., l, n, j] = d Gamma_ln / d x_j."""
        return self.tensors(x, y, 1)[1]


# ---------------------------------------------------------------------------
# Incident fields
# ---------------------------------------------------------------------------

@dataclass
class IncidentField:
    """A closed-form solution of the homogeneous Navier equation.

    ``value(points) -> (n, 3)`` complex displacements and
    ``gradient(points) -> (n, 3, 3)`` with J[l, m] = d u_l / d x_m.
    """

    kind: str
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    mat: Material = None
    omega: float = None

    def traction(self, points: np.ndarray, normals: np.ndarray, tau: Optional[float] = None):
        tau = self.mat.mu if tau is None else tau
        J = self.gradient(points)
        return traction_from_grad(J, normals, self.mat.lam, self.mat.mu, tau)


def plane_wave(d: np.ndarray, mat: Material, omega: float, polarization: str = "p",
               s_direction: Optional[np.ndarray] = None) -> IncidentField:
    """Plane pressure wave u = d exp(i kp d.x) or shear wave u = a exp(i ks d.x), a _|_ d."""
    d = np.asarray(d, dtype=float)
    nd = np.linalg.norm(d)
    if nd < 1e-14:
        raise ValueError("propagation direction must be nonzero")
    d = d / nd
    wn = wavenumbers(mat, omega)
    if polarization.lower() == "p":
        k, a = wn.kp, d
    elif polarization.lower() == "s":
        if s_direction is None:
            trial = np.array([1.0, 0.0, 0.0])
            if abs(np.dot(trial, d)) > 0.9:
                trial = np.array([0.0, 1.0, 0.0])
            a = trial - np.dot(trial, d) * d
        else:
            a = np.asarray(s_direction, dtype=float)
            a = a - np.dot(a, d) * d
        na = np.linalg.norm(a)
        if na < 1e-14:
            raise ValueError("shear polarization must have a component orthogonal to d")
        a = a / na
        k = wn.ks
    else:
        raise ValueError(f"unknown polarization {polarization!r}")

    def value(pts):
        pts = np.atleast_2d(pts)
        phase = np.exp(1j * k * pts @ d)
        return phase[:, None] * a

    def gradient(pts):
        pts = np.atleast_2d(pts)
        phase = np.exp(1j * k * pts @ d)
        return 1j * k * phase[:, None, None] * np.einsum("l,m->lm", a, d)

    return IncidentField(kind=f"plane-{polarization.lower()}", value=value,
                         gradient=gradient, mat=mat, omega=omega)


def point_source_p(z: np.ndarray, q: np.ndarray, mat: Material, omega: float,
                   normalization=None) -> IncidentField:
    """Pressure point source (kp^2/omega^2) grad grad^T Phi_kp(x, z) . q.

    ``normalization`` may be a SurfaceQuadrature; the field is then divided by
    the discrete L2 norm of grad grad^T Phi_kp(., z) . q over that surface.
    """
    z = np.asarray(z, dtype=float)
    q = np.asarray(q, dtype=float)
    wn = wavenumbers(mat, omega)
    scale = wn.kp**2 / omega**2

    if normalization is not None:
        hq = np.einsum("nlm,m->nl", grad2_helmholtz(normalization.nodes, z, wn.kp), q)
        nrm = np.sqrt(np.sum(normalization.weights * np.sum(np.abs(hq) ** 2, axis=1)))
        scale = scale / nrm

    def value(pts):
        pts = np.atleast_2d(pts)
        return scale * np.einsum("nlm,m->nl", grad2_helmholtz(pts, z, wn.kp), q)

    def gradient(pts):
        pts = np.atleast_2d(pts)
        return scale * np.einsum("nlmk,m->nlk", grad3_helmholtz(pts, z, wn.kp), q)

    return IncidentField(kind="point-source-p", value=value, gradient=gradient,
                         mat=mat, omega=omega)


def grad_scalar_point_source(z: np.ndarray, mat: Material, omega: float) -> IncidentField:
    """u(x) = grad_x Phi_kp(x, z)."""
    z = np.asarray(z, dtype=float)
    wn = wavenumbers(mat, omega)

    def value(pts):
        pts = np.atleast_2d(pts)
        return grad_helmholtz(pts, z, wn.kp)

    def gradient(pts):
        pts = np.atleast_2d(pts)
        return grad2_helmholtz(pts, z, wn.kp)

    return IncidentField(kind="grad-scalar-point-source", value=value,
                         gradient=gradient, mat=mat, omega=omega)


# ---------------------------------------------------------------------------
# Far-field kernels
# ---------------------------------------------------------------------------

def farfield_kernel_single(xhat, y, mat: Material, omega: float):
    """Far-field amplitude kernels (Ap, As) of the single-layer potential.

    Pattern normalization: u ~ e^{i kp R}/(4 pi (lam+mu) R) up_inf
    + e^{i ks R}/(4 pi mu R) us_inf, so the P channel carries a factor
    (lam+mu)/(lam+2 mu).  Shapes: (nd, ns, 3, 3).
    """
    lam, mu = mat.lam, mat.mu
    wn = wavenumbers(mat, omega)
    xhat = np.atleast_2d(xhat)
    y = np.atleast_2d(y)
    phase_p = np.exp(-1j * wn.kp * xhat @ y.T)
    phase_s = np.exp(-1j * wn.ks * xhat @ y.T)
    Pp = np.einsum("dl,dn->dln", xhat, xhat)
    Ps = np.eye(3)[None] - Pp
    cp = (lam + mu) / (lam + 2.0 * mu)
    Ap = cp * phase_p[..., None, None] * Pp[:, None]
    As = phase_s[..., None, None] * Ps[:, None]
    return Ap, As


def farfield_kernel_double(xhat, y, ny, mat: Material, omega: float, tau: float):
    """Far-field amplitude kernels of the double-layer potential [T^tau_y Gamma]^T."""
    lam, mu = mat.lam, mat.mu
    wn = wavenumbers(mat, omega)
    xhat = np.atleast_2d(xhat)
    y = np.atleast_2d(y)
    ny = np.atleast_2d(ny)
    phase_p = np.exp(-1j * wn.kp * xhat @ y.T)
    phase_s = np.exp(-1j * wn.ks * xhat @ y.T)
    ndx = xhat @ ny.T  # (nd, ns): n(y) . xhat

    # P channel: -i kp [(mu+tau)(n.xhat) xhat xhat^T + (lam+mu-tau) xhat n^T]
    Pp = np.einsum("dl,dn->dln", xhat, xhat)
    xn = np.einsum("dl,sn->dsln", xhat, ny)
    cp = (lam + mu) / (lam + 2.0 * mu)
    Ap = (-1j * wn.kp) * cp * phase_p[..., None, None] * (
        (mu + tau) * ndx[..., None, None] * Pp[:, None]
        + (lam + mu - tau) * xn
    )

    # S channel: -i ks [mu (n.xhat) Ps + tau (Ps n) xhat^T]
    Ps = np.eye(3)[None] - Pp
    Psn = np.einsum("dln,sn->dsl", Ps, ny)
    As = (-1j * wn.ks) * phase_s[..., None, None] * (
        mu * ndx[..., None, None] * Ps[:, None]
        + tau * np.einsum("dsl,dn->dsln", Psn, xhat)
    )
    return Ap, As
