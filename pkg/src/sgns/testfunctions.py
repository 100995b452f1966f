"""Canonical spatial test functions for weak-form residual checks.

Five scalar profiles on the unit-normalized box, chosen to probe different
behaviours: low polynomials, a flat-topped quartic, a compactly supported
bump, a sign-changing skew profile and an axis-aligned ridge. Each is turned
into a weak-form probe by band-limiting it in the density family (so the
discrete integration-by-parts identities hold exactly) and projecting it on
the velocity modes for the momentum pairing.
"""

from __future__ import annotations

import math

import numpy as np

from . import spectral
from .solver import WeakTest

PROFILE_NAMES = ("parabola", "quartic", "bump", "skew", "ridge")


def _normalized(basis):
    """Coordinates scaled to [0, 1] per axis, shape (dim, *grid)."""
    xy = spectral.coordinates(basis)
    for i, ax in enumerate(basis.axes):
        xy[i] /= ax.length
    return xy


def profile_values(name, basis):
    """Raw grid values of a canonical profile (before band-limiting)."""
    xi = _normalized(basis)
    if name == "parabola":
        return np.prod(4.0 * xi * (1.0 - xi), axis=0)
    if name == "quartic":
        return np.prod(16.0 * (xi * (1.0 - xi)) ** 2, axis=0)
    if name == "bump":
        window = xi * (1.0 - xi)
        safe = np.clip(window, 1e-12, None)
        return np.prod(np.exp(4.0 - 1.0 / safe) * (window > 0), axis=0)
    if name == "skew":
        base = np.prod(4.0 * xi * (1.0 - xi), axis=0)
        return base * (1.0 - 2.0 * xi[0])
    if name == "ridge":
        return 16.0 * (xi[0] * (1.0 - xi[0])) ** 2
    raise ValueError(f"unknown profile {name!r}")


def profile_gradient(name, basis):
    """Analytic gradient of a canonical profile, shape (dim, *grid)."""
    xi = _normalized(basis)
    dim = basis.dim
    inv_len = np.array([1.0 / ax.length for ax in basis.axes])

    def stack(partials):
        return np.stack([partials[i] * inv_len[i] for i in range(dim)])

    if name == "parabola":
        factors = 4.0 * xi * (1.0 - xi)
        value = np.prod(factors, axis=0)
        out = []
        for i in range(dim):
            df = 4.0 * (1.0 - 2.0 * xi[i])
            with np.errstate(divide="ignore", invalid="ignore"):
                rest = np.where(factors[i] != 0, value / factors[i], 0.0)
            out.append(df * rest)
        return stack(out)
    if name == "quartic":
        factors = 16.0 * (xi * (1.0 - xi)) ** 2
        value = np.prod(factors, axis=0)
        out = []
        for i in range(dim):
            df = 32.0 * xi[i] * (1.0 - xi[i]) * (1.0 - 2.0 * xi[i])
            with np.errstate(divide="ignore", invalid="ignore"):
                rest = np.where(factors[i] != 0, value / factors[i], 0.0)
            out.append(df * rest)
        return stack(out)
    if name == "bump":
        window = xi * (1.0 - xi)
        safe = np.clip(window, 1e-12, None)
        factors = np.exp(4.0 - 1.0 / safe) * (window > 0)
        value = np.prod(factors, axis=0)
        out = []
        for i in range(dim):
            d_inner = (1.0 - 2.0 * xi[i]) / safe[i] ** 2
            out.append(value * d_inner * (window[i] > 0))
        return stack(out)
    if name == "skew":
        base = profile_gradient("parabola", basis)
        para = profile_values("parabola", basis)
        out = base * (1.0 - 2.0 * xi[0])
        out[0] += para * (-2.0) * inv_len[0]
        return out
    if name == "ridge":
        out = np.zeros((dim,) + basis.grid_shape)
        out[0] = 32.0 * xi[0] * (1.0 - xi[0]) * (1.0 - 2.0 * xi[0]) * inv_len[0]
        return out
    raise ValueError(f"unknown profile {name!r}")


def sinusoid_time(omega, amplitude=0.5):
    """Smooth time factor 1 + A sin(omega t) with its exact derivative."""
    return (
        lambda t: 1.0 + amplitude * math.sin(omega * t),
        lambda t: amplitude * omega * math.cos(omega * t),
    )


def make_weak_test(name, basis, time=None) -> WeakTest:
    """Build a weak-form probe from a canonical profile.

    The spatial factor is the band-limited representative of the profile;
    its gradient is the exact gradient of that representative, and the
    momentum pairing uses its velocity-family projection in every component.
    ``time`` is an optional (phi, dphi) pair of callables.
    """
    raw = profile_values(name, basis)
    zeta = spectral.band_limit(basis, raw)
    grad_zeta = spectral.grid_gradient(basis, zeta)
    scalar = spectral.project(basis, zeta)
    psi = np.tile(scalar, (basis.dim, 1))
    phi, dphi = time if time is not None else (None, None)
    return WeakTest(name=name, psi=psi, zeta=zeta, grad_zeta=grad_zeta,
                    time=phi, time_derivative=dphi)


def canonical_weak_tests(basis, time=None):
    """All five canonical probes, ready for solve_path."""
    return [make_weak_test(name, basis, time=time) for name in PROFILE_NAMES]
