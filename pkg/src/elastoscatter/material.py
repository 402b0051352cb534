"""Isotropic elastic materials, wavenumbers, and transmission coupling constants.

The coupling constants (alpha, beta, kappa, gamma, b per medium) are the
classical choice that turns the two-medium transmission system of boundary
integral equations into one of normal type: the generalized tractions built
from kappa/gamma cancel the hypersingular parts of the traction-traction
blocks, and ``gamma_i - mu_i == gamma_e - mu_e`` makes the interface data
transform local.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

DensityField = Union[float, Callable[[np.ndarray], np.ndarray]]


class MaterialError(ValueError):
    """Material parameters outside the admissible range."""


@dataclass(frozen=True)
class Material:
    """Homogeneous isotropic material given by its Lame constants.

    ``density`` is the mass density relative to the exterior medium
    (normalized to 1); it may be a constant or a scalar field handle
    called on an ``(n, 3)`` array of points.
    """

    lam: float
    mu: float
    density: DensityField = 1.0


@dataclass(frozen=True)
class Wavenumbers:
    """Pressure and shear wavenumbers at angular frequency ``omega``."""

    omega: float
    kp: float
    ks: float


@dataclass(frozen=True)
class CouplingConstants:
    alpha_i: float
    alpha_e: float
    beta_i: float
    beta_e: float
    kappa_i: float
    kappa_e: float
    gamma_i: float
    gamma_e: float
    b_i: float
    b_e: float


def validate_material(mat: Material) -> None:
    """Check the strong ellipticity constraints ``mu > 0`` and ``3*lam + 2*mu > 0``.

    Raises
    ------
    MaterialError
        Naming the violated inequality.
    """
    if not mat.mu > 0:
        raise MaterialError(f"shear modulus must satisfy mu > 0, got mu={mat.mu}")
    if not 3.0 * mat.lam + 2.0 * mat.mu > 0:
        raise MaterialError(
            f"bulk constraint 3*lambda + 2*mu > 0 violated: "
            f"3*{mat.lam} + 2*{mat.mu} = {3.0 * mat.lam + 2.0 * mat.mu}"
        )


def wavenumbers(mat: Material, omega: float) -> Wavenumbers:
    """Wavenumbers kp = omega/sqrt(lam + 2 mu), ks = omega/sqrt(mu)."""
    validate_material(mat)
    if not omega > 0:
        raise MaterialError(f"frequency must be positive, got omega={omega}")
    if mat.lam + 2.0 * mat.mu <= 0:
        raise MaterialError("lam + 2*mu must be positive for a pressure wave speed")
    return Wavenumbers(
        omega=omega,
        kp=omega / np.sqrt(mat.lam + 2.0 * mat.mu),
        ks=omega / np.sqrt(mat.mu),
    )


def coupling_constants(mat_i: Material, mat_e: Material) -> CouplingConstants:
    """Coupling constants for the interior/exterior material pair.

    With ``b_r = (lam_r + mu_r)/(lam_r + 2 mu_r)``:

    * ``alpha_r = mu_i mu_e / (mu_r (mu_i + mu_e))``, ``beta_r = -alpha_r``
    * ``kappa_e = mu_e (b_i mu_i - b_e mu_e) / (b_i mu_i + b_e mu_e)`` and the
      mirrored expression for ``kappa_i``
    * ``gamma_e = mu_e (mu_e - mu_i) / (mu_i + mu_e)`` and mirrored ``gamma_i``.
    """
    validate_material(mat_i)
    validate_material(mat_e)
    mu_i, mu_e = mat_i.mu, mat_e.mu
    if mu_i + mu_e <= 0:
        raise MaterialError("mu_i + mu_e must be positive")

    b_i = (mat_i.lam + mu_i) / (mat_i.lam + 2.0 * mu_i)
    b_e = (mat_e.lam + mu_e) / (mat_e.lam + 2.0 * mu_e)
    denom_b = b_i * mu_i + b_e * mu_e
    alpha_i = mu_i * mu_e / (mu_i * (mu_i + mu_e))
    alpha_e = mu_i * mu_e / (mu_e * (mu_i + mu_e))
    return CouplingConstants(
        alpha_i=alpha_i,
        alpha_e=alpha_e,
        beta_i=-alpha_i,
        beta_e=-alpha_e,
        kappa_e=mu_e * (b_i * mu_i - b_e * mu_e) / denom_b,
        kappa_i=mu_i * (b_e * mu_e - b_i * mu_i) / denom_b,
        gamma_e=mu_e * (mu_e - mu_i) / (mu_i + mu_e),
        gamma_i=mu_i * (mu_i - mu_e) / (mu_i + mu_e),
        b_i=b_i,
        b_e=b_e,
    )


def density_at(mat: Material, points: np.ndarray) -> np.ndarray:
    """Evaluate the (possibly spatially varying) relative density at points."""
    pts = np.atleast_2d(points)
    if callable(mat.density):
        rho = np.asarray(mat.density(pts), dtype=float)
        if rho.shape != (pts.shape[0],):
            raise MaterialError(
                f"density field returned shape {rho.shape}, expected {(pts.shape[0],)}"
            )
        return rho
    return np.full(pts.shape[0], float(mat.density))


def constant_density(mat: Material) -> float:
    """Return the constant density value, or raise if the field varies."""
    if callable(mat.density):
        raise MaterialError("material has a spatially varying density field")
    return float(mat.density)
