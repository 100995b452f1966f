"""Constitutive laws: dissipation potentials, their convex conjugates, and the
barotropic pressure.

The viscous stress is generated by a convex potential F acting on the
symmetric velocity gradient D. Two families are provided:

* ``PowerLaw(p)``: F(D) = (1/p) [ (1 + |D|^2)^{p/2} - 1 ], with stress
  S(D) = (1 + |D|^2)^{(p-2)/2} D. The shift makes F(0) = 0 so F is an
  N-function envelope of itself.
* ``Newtonian(mu, lam)``: F(D) = (mu/2)|D|^2 + (lam/2)(tr D)^2 with stress
  S(D) = mu D + lam (tr D) I.

The Fenchel conjugate F*(S) = sup_D [S:D - F(D)] is evaluated in closed form
for the Newtonian family and by a safeguarded Newton iteration on the radial
first-order condition for the power-law family. By convex duality the gap
F(D) + F*(S) - S:D is nonnegative and vanishes exactly on S = S(D); the
diagnostics suite leans on that identity, so the conjugate is solved to a
tight tolerance (1e-12 on the first-order condition).

Pressure: p(rho) = a rho^gamma with potential
P(rho) = rho * Int_1^rho p(z)/z^2 dz = a (rho^gamma - rho)/(gamma - 1),
satisfying rho P''(rho) = p'(rho).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MaximizerNotBracketed, NegativeDensity

_FOC_TOL = 1e-12
_BRACKET_CAP = 1e150


@dataclass(frozen=True)
class PowerLaw:
    p: float

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError(f"power-law exponent must exceed 1, got {self.p}")


@dataclass(frozen=True)
class Newtonian:
    mu: float
    lam: float = 0.0

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError(f"newtonian mu must be positive, got {self.mu}")
        if self.lam < 0.0:
            raise ValueError(f"newtonian lambda must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class ConstitutiveModel:
    """Viscous family plus barotropic pressure coefficients."""

    family: PowerLaw | Newtonian
    pressure_a: float = 1.0
    pressure_gamma: float = 2.0

    def __post_init__(self):
        if not self.pressure_a > 0.0:
            raise ValueError("pressure coefficient a must be positive")
        if not self.pressure_gamma > 1.0:
            raise ValueError("adiabatic exponent gamma must exceed 1")


def _tensor_norm2(t):
    """Squared Frobenius norm over the two leading tensor axes."""
    t = np.asarray(t, dtype=float)
    return np.einsum("ij...,ij...->...", t, t)


def _trace(t):
    return np.einsum("ii...->...", np.asarray(t, dtype=float))


def tensor_dot(s, d):
    """Frobenius pairing S:D over the two leading axes."""
    return np.einsum("ij...,ij...->...", np.asarray(s, float), np.asarray(d, float))


def potential_value(model: ConstitutiveModel, d):
    """Dissipation potential F(D); D has shape (dim, dim, ...)."""
    fam = model.family
    n2 = _tensor_norm2(d)
    if isinstance(fam, PowerLaw):
        return ((1.0 + n2) ** (fam.p / 2.0) - 1.0) / fam.p
    return 0.5 * fam.mu * n2 + 0.5 * fam.lam * _trace(d) ** 2


def stress_of_strain(model: ConstitutiveModel, d):
    """Stress S = dF/dD evaluated at the symmetric gradient D."""
    fam = model.family
    d = np.asarray(d, dtype=float)
    if isinstance(fam, PowerLaw):
        n2 = _tensor_norm2(d)
        return (1.0 + n2) ** ((fam.p - 2.0) / 2.0) * d
    dim = d.shape[0]
    eye = np.eye(dim).reshape((dim, dim) + (1,) * (d.ndim - 2))
    return fam.mu * d + fam.lam * _trace(d) * eye


def _radial_value(p, t):
    return ((1.0 + t * t) ** (p / 2.0) - 1.0) / p


def _radial_slope(p, t):
    return t * (1.0 + t * t) ** ((p - 2.0) / 2.0)


def _radial_curvature(p, t):
    return (1.0 + t * t) ** ((p - 4.0) / 2.0) * (1.0 + (p - 1.0) * t * t)


def _radial_stress_inverse(p, s):
    """Solve t (1+t^2)^{(p-2)/2} = s for t >= 0, vectorized.

    Safeguarded Newton: the bracket [0, B] is found by doubling B until the
    monotone slope exceeds s, then Newton steps are accepted only inside the
    current bracket, otherwise bisection. Convergence is declared on the
    first-order condition |slope - s| <= 1e-12 * max(1, s).
    """
    s = np.asarray(s, dtype=float)
    scalar = s.ndim == 0
    s = np.atleast_1d(s).astype(float)
    if np.any(s < 0):
        raise ValueError("radial stress magnitude must be >= 0")

    hi = np.ones_like(s)
    for _ in range(600):
        short = _radial_slope(p, hi) < s
        if not short.any():
            break
        hi = np.where(short, 2.0 * hi, hi)
        if np.any(hi[short] > _BRACKET_CAP):
            raise MaximizerNotBracketed(
                "slope never reached the stress magnitude while doubling the "
                f"bracket (p={p}); the family/magnitude pair is ill-posed"
            )
    else:
        raise MaximizerNotBracketed(
            f"bracket doubling did not terminate (p={p})"
        )

    lo = np.zeros_like(s)
    # Newton from the p=2 guess, clipped into the bracket.
    t = np.minimum(s, hi)
    tol = _FOC_TOL * np.maximum(1.0, s)
    for _ in range(200):
        g = _radial_slope(p, t) - s
        if np.all(np.abs(g) <= tol):
            break
        lo = np.where(g < 0, t, lo)
        hi = np.where(g > 0, t, hi)
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            step = t - g / _radial_curvature(p, t)
        inside = np.isfinite(step) & (step > lo) & (step < hi)
        t = np.where(inside, step, 0.5 * (lo + hi))
    return (float(t[0]) if scalar else t)


def conjugate_value(model: ConstitutiveModel, s):
    """Fenchel conjugate F*(S); S has shape (dim, dim, ...)."""
    fam = model.family
    s = np.asarray(s, dtype=float)
    if isinstance(fam, Newtonian):
        dim = s.shape[0]
        tr = _trace(s)
        dev2 = _tensor_norm2(s) - tr * tr / dim
        # deviatoric part against mu, spherical part against mu + dim*lam
        return 0.5 * dev2 / fam.mu + 0.5 * tr * tr / (dim * (fam.mu + dim * fam.lam))
    mag = np.sqrt(_tensor_norm2(s))
    t = _radial_stress_inverse(fam.p, mag)
    return mag * t - _radial_value(fam.p, t)


def fenchel_gap(model: ConstitutiveModel, s, d):
    """F(D) + F*(S) - S:D, nonnegative, zero iff S = stress_of_strain(D)."""
    return potential_value(model, d) + conjugate_value(model, s) - tensor_dot(s, d)


def pressure_value(model: ConstitutiveModel, rho):
    """Barotropic pressure a rho^gamma; rejects negative density."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0.0):
        raise NegativeDensity("pressure evaluated at negative density")
    return model.pressure_a * rho ** model.pressure_gamma


def pressure_slope(model: ConstitutiveModel, rho):
    """p'(rho) = a gamma rho^{gamma-1}; the squared sound speed."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0.0):
        raise NegativeDensity("pressure slope evaluated at negative density")
    a, g = model.pressure_a, model.pressure_gamma
    return a * g * rho ** (g - 1.0)


def pressure_potential(model: ConstitutiveModel, rho):
    """Pressure potential P(rho) = a (rho^gamma - rho)/(gamma - 1)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0.0):
        raise NegativeDensity("pressure potential needs strictly positive density")
    a, g = model.pressure_a, model.pressure_gamma
    return a * (rho ** g - rho) / (g - 1.0)


def pressure_potential_curvature(model: ConstitutiveModel, rho):
    """P''(rho) = p'(rho)/rho = a gamma rho^{gamma-2}."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0.0):
        raise NegativeDensity("potential curvature needs strictly positive density")
    a, g = model.pressure_a, model.pressure_gamma
    return a * g * rho ** (g - 2.0)


def envelope(model: ConstitutiveModel):
    """Radial N-function g with F(D) >= g(|D|); returns a vectorized callable.

    Power law: g equals the radial profile of F itself. Newtonian: the
    divergence term is dropped, g(t) = (mu/2) t^2.
    """
    fam = model.family
    if isinstance(fam, PowerLaw):
        p = fam.p
        return lambda t: _radial_value(p, np.asarray(t, dtype=float))
    mu = fam.mu
    return lambda t: 0.5 * mu * np.asarray(t, dtype=float) ** 2


def orlicz_envelope(model: ConstitutiveModel, dim: int):
    """g0(t) = g(t / sqrt(dim)), the velocity-size envelope for dimension dim."""
    g = envelope(model)
    c = float(np.sqrt(dim))
    return lambda t: g(np.asarray(t, dtype=float) / c)


def envelope_check(model: ConstitutiveModel, samples):
    """Max violation of F(D) >= g(|D|) over a stack of symmetric tensors.

    ``samples`` has shape (n, dim, dim). Returns max(g(|D|) - F(D)); a
    nonpositive result means the envelope bound holds on every sample.
    """
    samples = np.asarray(samples, dtype=float)
    d = np.moveaxis(samples, 0, -1)  # (dim, dim, n)
    g = envelope(model)
    mags = np.sqrt(_tensor_norm2(d))
    viol = g(mags) - potential_value(model, d)
    return float(np.max(viol)) if viol.size else 0.0
