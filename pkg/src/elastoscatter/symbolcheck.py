"""Solvability diagnostics: singular-operator symbols and the interior
transmission coercivity threshold.

The transmission system's singular blocks have characteristics of the form

    chi(theta) = -1/2 I + (X / 2 pi) * [antisymmetric first harmonic]

with block constants X in {c_i, p, q} built from the Lame parameters.  The
block determinant of the resummed symbol factors the closed-form Fredholm
determinant  |det| = (1/4 - c_i^2)(1/4 - p^2)(1/4 - q^2);  when every factor
stays away from zero the system is of normal type and Fredholm theory applies.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .material import Material, validate_material


@dataclass
class SymbolReport:
    c_i: float
    c_e: float
    b_i: float
    b_e: float
    p: float
    q: float
    factors: tuple  # (1/4 - c_i^2, 1/4 - p^2, 1/4 - q^2)
    det_sigma: float
    normal_type: bool


@dataclass
class ThresholdReport:
    lambda1: float
    m: float
    omega_max_squared: float
    regime: str  # 'rho_inf_gt_1' | 'rho_sup_lt_1' | 'invalid'


def symbol_constants(mat_i: Material, mat_e: Material):
    """c_r = mu_r/(lam_r + 2 mu_r), b_r = (lam_r + mu_r)/(lam_r + 2 mu_r),
    p = (c_e b_i mu_i - c_i b_e mu_e)/(b_i mu_i + b_e mu_e),
    q = (mu_i^2 - mu_e^2 + (c_i - c_e) mu_i mu_e)/(mu_i + mu_e)^2."""
    validate_material(mat_i)
    validate_material(mat_e)
    c_i = mat_i.mu / (mat_i.lam + 2.0 * mat_i.mu)
    c_e = mat_e.mu / (mat_e.lam + 2.0 * mat_e.mu)
    b_i = (mat_i.lam + mat_i.mu) / (mat_i.lam + 2.0 * mat_i.mu)
    b_e = (mat_e.lam + mat_e.mu) / (mat_e.lam + 2.0 * mat_e.mu)
    p = (c_e * b_i * mat_i.mu - c_i * b_e * mat_e.mu) / (b_i * mat_i.mu + b_e * mat_e.mu)
    q = (mat_i.mu**2 - mat_e.mu**2 + (c_i - c_e) * mat_i.mu * mat_e.mu) / (
        (mat_i.mu + mat_e.mu) ** 2
    )
    return c_i, c_e, b_i, b_e, p, q


def symbol_constants_exact(mat_i: Material, mat_e: Material):
    """Same constants in exact rational arithmetic (parameters must be rational)."""
    li, mi = Fraction(mat_i.lam).limit_denominator(10**12), Fraction(mat_i.mu).limit_denominator(10**12)
    le, me = Fraction(mat_e.lam).limit_denominator(10**12), Fraction(mat_e.mu).limit_denominator(10**12)
    c_i = mi / (li + 2 * mi)
    c_e = me / (le + 2 * me)
    b_i = (li + mi) / (li + 2 * mi)
    b_e = (le + me) / (le + 2 * me)
    p = (c_e * b_i * mi - c_i * b_e * me) / (b_i * mi + b_e * me)
    q = (mi**2 - me**2 + (c_i - c_e) * mi * me) / (mi + me) ** 2
    det = (Fraction(1, 4) - c_i**2) * (Fraction(1, 4) - p**2) * (Fraction(1, 4) - q**2)
    return c_i, c_e, b_i, b_e, p, q, det


def symbol_determinant(mat_i: Material, mat_e: Material,
                       margin: float = 1e-12) -> SymbolReport:
    """Closed-form Fredholm determinant and normal-type flag.

    ``normal_type`` requires every factor's magnitude to exceed ``margin``;
    the factors can change sign for admissible materials with lam < 0, so the
    sign itself is reported rather than asserted.
    """
    c_i, c_e, b_i, b_e, p, q = symbol_constants(mat_i, mat_e)
    factors = (0.25 - c_i**2, 0.25 - p**2, 0.25 - q**2)
    det = factors[0] * factors[1] * factors[2]
    return SymbolReport(
        c_i=c_i, c_e=c_e, b_i=b_i, b_e=b_e, p=p, q=q,
        factors=factors, det_sigma=det,
        normal_type=bool(min(abs(f) for f in factors) > margin),
    )


# ---------------------------------------------------------------------------
# Numeric symbol of a singular characteristic
# ---------------------------------------------------------------------------

def numeric_symbol(characteristic: Callable[[float], np.ndarray],
                   n_theta: int = 512, n_modes: int = 64):
    """Resummed symbol of a singular operator from its angular characteristic.

    Fourier coefficients A_n of chi(theta) over (-pi, pi] are computed by the
    trapezoidal rule; the symbol is sum_n A*_n e^{i n theta} with
    A*_n = (2 pi i^{|n|} / |n|) A_n for n != 0 and A*_0 = A_0.  Returns a
    callable theta -> symbol matrix.  A warning flag is attached when the
    coefficient tail does not decay (non-integrable characteristic).
    """
    thetas = -np.pi + 2.0 * np.pi * (np.arange(n_theta) + 1.0) / n_theta
    samples = np.array([np.asarray(characteristic(t), dtype=complex) for t in thetas])
    # A_n = (1/2pi) int chi e^{-i n theta}
    ns = np.arange(-n_modes, n_modes + 1)
    phases = np.exp(-1j * np.outer(ns, thetas)) / n_theta
    coeffs = np.tensordot(phases, samples, axes=(1, 0))  # (modes, 3, 3) or scalar

    weights = np.empty(len(ns), dtype=complex)
    for k, n in enumerate(ns):
        weights[k] = 1.0 if n == 0 else 2.0 * np.pi * (1j ** abs(n)) / abs(n)
    star = coeffs * weights.reshape(-1, *([1] * (coeffs.ndim - 1)))

    head = np.max(np.abs(coeffs), axis=tuple(range(1, coeffs.ndim)))
    tail_ok = bool(np.max(head[np.abs(ns) >= n_modes // 2]) < 1e-8 * max(np.max(head), 1e-300))

    def sigma(theta: float):
        ph = np.exp(1j * ns * theta)
        return np.tensordot(ph, star, axes=(0, 0))

    sigma.tail_decay_ok = tail_ok
    sigma.coefficients = coeffs
    sigma.modes = ns
    return sigma


def antisymmetric_first_harmonic_characteristic(coefficient: float,
                                                diag: float = -0.5) -> Callable:
    """Characteristic chi(theta) = diag*I + (X/2pi) [[0,0,cos],[0,0,sin],
    [-cos,-sin,0]] of the system's singular blocks (in a flat local frame)."""

    def chi(theta: float) -> np.ndarray:
        c, s = np.cos(theta), np.sin(theta)
        a = coefficient / (2.0 * np.pi)
        return np.array(
            [
                [diag, 0.0, a * c],
                [0.0, diag, a * s],
                [-a * c, -a * s, diag],
            ]
        )

    return chi


def block_determinant(sigma_matrix: np.ndarray) -> complex:
    """Determinant of a 3x3 symbol block, normalized to the essential 2x2
    factor: for the antisymmetric-first-harmonic blocks with diagonal -1/2,
    2 det_3x3 = X^2 - 1/4."""
    return 2.0 * np.linalg.det(np.asarray(sigma_matrix))


# ---------------------------------------------------------------------------
# Interior transmission coercivity threshold
# ---------------------------------------------------------------------------

def lambda1_ball(radius: float) -> float:
    """First Dirichlet eigenvalue of -Laplace on a ball: (pi / R)^2."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    return (np.pi / radius) ** 2


def lambda1_ball_fd(radius: float, n: int = 400) -> float:
    """Radial finite-difference oracle for lambda_1 on a ball.

    With w = r u the radial problem becomes -w'' = lambda w, w(0) = w(R) = 0.
    """
    h = radius / n
    main = np.full(n - 1, 2.0 / h**2)
    off = np.full(n - 2, -1.0 / h**2)
    from scipy.linalg import eigh_tridiagonal

    vals = eigh_tridiagonal(main, off, select="i", select_range=(0, 0))[0]
    return float(vals[0])


def itp_threshold(radius: float, mat: Material, rho_inf: float,
                  rho_sup: float) -> ThresholdReport:
    """Coercivity threshold omega^2 < min(m lambda_1 / rho_sup, m lambda_1)
    with m = min(mu, 3 lam + 2 mu), for a ball of the given radius.

    The density contrast must not cross 1: either rho_inf > 1 or rho_sup < 1;
    otherwise the regime is flagged invalid (threshold still reported).
    """
    validate_material(mat)
    if radius <= 0 or rho_inf <= 0 or rho_sup <= 0:
        raise ValueError("radius and density bounds must be positive")
    if rho_sup < rho_inf:
        raise ValueError("rho_sup must be >= rho_inf")
    lam1 = lambda1_ball(radius)
    m = min(mat.mu, 3.0 * mat.lam + 2.0 * mat.mu)
    omega_max2 = min(m * lam1 / rho_sup, m * lam1)
    if rho_inf > 1.0:
        regime = "rho_inf_gt_1"
    elif rho_sup < 1.0:
        regime = "rho_sup_lt_1"
    else:
        regime = "invalid"
    return ThresholdReport(lambda1=lam1, m=m, omega_max_squared=omega_max2,
                           regime=regime)
