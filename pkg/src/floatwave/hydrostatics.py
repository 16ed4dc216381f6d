"""Mass/inertia matrix E, restoring matrix K and the equilibrium checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Unstable
from .geometry import BodySection, Decomposition, polygon_moments


@dataclass(frozen=True)
class HydrostaticModel:
    """Integrals entering E and K, with the matrices themselves.

    Densities are relative to the water density, so ``I_M`` is a mass per
    unit length divided by ``rho0`` (an area).
    """

    I_M: float
    I_M2: float
    I_D: float
    I_Dx: float
    I_Dxx: float
    I_By: float
    centre_of_mass: tuple
    immersed_area: float
    buoyancy_moment_x: float
    E: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)

    @property
    def K_prime(self):
        return self.K[1:, 1:]

    def heave_threshold(self, g):
        """omega**2 above which the heave term of z^T(omega^2 E - g K)z is >= 0."""
        return g * self.I_D / self.I_M

    def roll_threshold(self, g):
        return g * (self.I_Dxx + self.I_By) / self.I_M2


def _interval_moments(a, b, x0):
    """int_a^b (x - x0)^p dx for p = 0, 1, 2."""
    u, v = a - x0, b - x0
    return v - u, (v * v - u * u) / 2, (v ** 3 - u ** 3) / 3


def compute_matrices(body: BodySection, dec: Decomposition) -> HydrostaticModel:
    """Evaluate E and K by exact polygon and interval quadrature."""
    x0, y0 = dec.centre_of_mass
    I_M = I_M2 = 0.0
    for poly, rho in body.density_regions:
        A, Sx, Sy, Sxx, Syy, _ = polygon_moments(poly)
        I_M += rho * A
        # int (x-x0)^2 + (y-y0)^2 expanded about the origin
        I_M2 += rho * (Sxx - 2 * x0 * Sx + x0 * x0 * A + Syy - 2 * y0 * Sy + y0 * y0 * A)

    I_D = I_Dx = I_Dxx = 0.0
    for a, b in dec.waterplane:
        m0, m1, m2 = _interval_moments(a, b, x0)
        I_D += m0
        I_Dx += m1
        I_Dxx += m2

    area_B = I_By = Bx = 0.0
    for part in dec.immersed_parts:
        A, Sx, Sy, *_ = polygon_moments(part)
        area_B += A
        I_By += Sy - y0 * A
        Bx += Sx - x0 * A

    E = np.diag([I_M, I_M, I_M2])
    K = np.array([
        [0.0, 0.0, 0.0],
        [0.0, I_D, I_Dx],
        [0.0, I_Dx, I_Dxx + I_By],
    ])
    vals = [float(v) for v in (I_M, I_M2, I_D, I_Dx, I_Dxx, I_By)]
    return HydrostaticModel(*vals, (x0, y0), float(area_B), float(Bx), E, K)


@dataclass(frozen=True)
class EquilibriumReport:
    archimedes_residual: float
    alignment_residual: float
    K_eigenvalues: tuple
    K_prime_eigenvalues: tuple
    archimedes_ok: bool
    alignment_ok: bool
    K_psd: bool
    K_prime_pd: bool

    @property
    def stable(self):
        return self.archimedes_ok and self.alignment_ok and self.K_psd and self.K_prime_pd

    def as_dict(self):
        return {
            "archimedes_residual": self.archimedes_residual,
            "alignment_residual": self.alignment_residual,
            "K_eigenvalues": list(self.K_eigenvalues),
            "K_prime_eigenvalues": list(self.K_prime_eigenvalues),
            "archimedes_ok": self.archimedes_ok,
            "alignment_ok": self.alignment_ok,
            "K_psd": self.K_psd,
            "K_prime_pd": self.K_prime_pd,
            "stable": self.stable,
        }


def check_equilibrium(model: HydrostaticModel, body: BodySection, dec: Decomposition, rtol=1e-8):
    """Archimedes' law, buoyancy alignment and the definiteness of K and K'.

    Residuals are absolute; the pass/fail flags compare them with ``rtol``
    times the natural scale (immersed area, area times body diameter, norm
    of K).
    """
    area_B = model.immersed_area
    scale_len = body.diameter
    arch = abs(model.I_M - area_B)
    align = abs(model.buoyancy_moment_x)
    kscale = max(np.abs(model.K).max(), 1e-300)
    ev = np.linalg.eigvalsh(model.K)
    evp = np.linalg.eigvalsh(model.K_prime)
    return EquilibriumReport(
        float(arch), float(align), tuple(map(float, ev)), tuple(map(float, evp)),
        bool(arch <= rtol * max(area_B, model.I_M)),
        bool(align <= rtol * area_B * scale_len),
        bool(ev.min() >= -rtol * kscale),
        bool(evp.min() > rtol * kscale),
    )


def largest_generalized_eigenvalue(E, K, g):
    """Largest lambda with det(lambda E - g K) = 0 for diagonal E > 0.

    Scaling by E^{-1/2} gives a symmetric matrix whose first row and column
    vanish (sway has no restoring force); the remaining 2x2 block is solved
    in closed form.
    """
    e = np.diag(E)
    if np.any(e <= 0) or not np.allclose(E, np.diag(e), rtol=0, atol=0):
        raise ValueError("E must be diagonal with positive entries")
    s = 1.0 / np.sqrt(e)
    A = g * K * s[:, None] * s[None, :]
    if A[0, 0] != 0 or np.any(A[0, 1:] != 0):
        return float(np.linalg.eigvalsh(A).max())
    p, q, r = A[1, 1], A[1, 2], A[2, 2]
    return float(max(0.0, (p + r) / 2 + math.hypot((p - r) / 2, q)))


def lambda0(model: HydrostaticModel, g, tol=1e-12):
    """lambda_0: property Omega holds for omega when omega**2 >= lambda_0."""
    evp = np.linalg.eigvalsh(model.K_prime)
    scale = max(np.abs(model.K).max(), 1e-300)
    if evp.min() < -tol * scale:
        raise Unstable(f"K' has a negative eigenvalue {evp.min():.6g}")
    return largest_generalized_eigenvalue(model.E, model.K, g)


def property_omega(omega, lam0):
    return omega * omega >= lam0
