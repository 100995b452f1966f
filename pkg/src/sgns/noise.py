"""Multiplicative forcing: windowed diffusion coefficients and Wiener draws.

The forcing acting on the momentum balance is a sum over independent scalar
Brownian motions, mode k carrying the vector field

    F_k(rho, u)(x) = f_k * psi(rho(x)) * phi(|u(x)|) * b_k(x) e_{dir(k)},

with amplitudes f_k = amplitude / k, a density window psi that vanishes for
rho outside [alpha, 1/alpha], a speed window phi that vanishes once |u|
reaches 1/alpha, and smooth spatial profiles b_k. Both windows are cubic
ramps, so every coefficient is bounded and Lipschitz in (rho, u); the speed
ramp is given width >= 3/2 which caps its slope at one.

Randomness comes from counter-based Philox streams keyed by (seed, purpose)
with the counter encoding (step, path). Any increment is therefore a pure
function of those four integers: paths can be re-simulated, resumed or
verified out of order without replaying a sequential stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import spectral

NOISE_STREAM = 0
INITIAL_STREAM = 1


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Forcing description; ``profile`` may inject custom spatial shapes.

    ``profile`` is a callable (k, basis) -> (dim, *grid) replacing the
    default cosine profiles, used by tests to plant exactly representable
    modes.
    """

    count: int = 4
    amplitude: float = 0.05
    alpha: float = 0.1
    profile: object = None


def build_noise(count=4, amplitude=0.05, alpha=0.1, profile=None) -> NoiseModel:
    if count < 0:
        raise ValueError("mode count must be nonnegative")
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    if not 0.0 < alpha < 0.5:
        raise ValueError(
            "alpha must lie in (0, 0.5): the density window needs "
            "2*alpha < 1/(2*alpha) and the speed ramp needs room below 1/alpha"
        )
    return NoiseModel(count=count, amplitude=amplitude, alpha=alpha, profile=profile)


def _ramp(s):
    """Cubic smoothstep: 0 below 0, 1 above 1, s^2 (3 - 2 s) between."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def density_window(alpha, rho):
    """psi: 0 outside [alpha, 1/alpha], 1 on [2 alpha, 1/(2 alpha)]."""
    rho = np.asarray(rho, dtype=float)
    up = _ramp((rho - alpha) / alpha)
    lo = 1.0 / (2.0 * alpha)
    down = 1.0 - _ramp((rho - lo) / lo)
    return up * down


def speed_window(alpha, speed):
    """phi: 1 on [0, 1/alpha - w], 0 beyond 1/alpha, slope at most one."""
    speed = np.asarray(speed, dtype=float)
    hi = 1.0 / alpha
    w = max(1.0 / (2.0 * alpha), 1.5)
    return 1.0 - _ramp((speed - (hi - w)) / w)


@lru_cache(maxsize=16)
def _profile_fields(model: NoiseModel, basis):
    """Stacked spatial profiles, shape (count, dim, *grid)."""
    out = np.zeros((model.count, basis.dim) + basis.grid_shape)
    coords = spectral.coordinates(basis)
    for k in range(1, model.count + 1):
        if model.profile is not None:
            out[k - 1] = model.profile(k, basis)
            continue
        direction = (k - 1) % basis.dim
        wave = (k - 1) // basis.dim
        length = basis.axes[direction].length
        if basis.family == "fourier":
            kap = 2.0 * math.pi * wave / length
        else:
            kap = math.pi * wave / length
        out[k - 1, direction] = np.cos(kap * coords[direction])
    return out


def diffusion_coefficient(model: NoiseModel, basis, k, rho, velocity):
    """The k-th coefficient field F_k(rho, u), shape (dim, *grid)."""
    if not 1 <= k <= model.count:
        raise ValueError(f"mode index {k} outside 1..{model.count}")
    speed = np.sqrt(np.sum(np.asarray(velocity, float) ** 2, axis=0))
    window = density_window(model.alpha, rho) * speed_window(model.alpha, speed)
    f_k = model.amplitude / k
    return f_k * window * _profile_fields(model, basis)[k - 1]


def path_rng(seed, path, step=0, purpose=NOISE_STREAM):
    """Counter-based generator: a pure function of (seed, purpose, step, path)."""
    key = np.array([seed, purpose], dtype=np.uint64)
    counter = np.array([0, 0, step, path], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def sample_increments(seed, path, step, count, dt):
    """Wiener increments for one step: count i.i.d. N(0, dt) draws."""
    rng = path_rng(seed, path, step, NOISE_STREAM)
    return math.sqrt(dt) * rng.standard_normal(count)


@dataclass(frozen=True, eq=False)
class NoiseTerms:
    """Everything one step needs from the forcing, in one pass.

    increment    modal momentum increment sum_k Proj(rho Proj F_k) dW_k
    qv_rate      per-coefficient sum_k g_k^2 (quadratic variation per unit dt)
    energy_rate  0.5 sum_k Int rho |Proj F_k|^2 dx (kinetic drift per unit dt)
    work         realized martingale work sum_k dW_k Int rho u . Proj F_k dx
    """

    increment: np.ndarray
    qv_rate: np.ndarray
    energy_rate: float
    work: float


def noise_terms(model: NoiseModel, basis, rho, velocity, dW) -> NoiseTerms:
    """Assemble the projected forcing increment and its energy bookkeeping.

    rho and velocity are grid fields; dW the increment vector. The modal
    projection of rho * (Proj F_k) equals the density-weighted Gram matrix
    applied to the coefficients of Proj F_k, because both are the same
    quadrature sum; the energy rate below is therefore exactly the Ito
    correction of the discrete kinetic energy.
    """
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (model.count,):
        raise ValueError(f"expected {model.count} increments, got {dW.shape}")
    rho = np.asarray(rho, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    speed = np.sqrt(np.sum(velocity**2, axis=0))
    window = density_window(model.alpha, rho) * speed_window(model.alpha, speed)
    profiles = _profile_fields(model, basis)

    increment = np.zeros((basis.dim, basis.n_scalar))
    qv_rate = np.zeros((basis.dim, basis.n_scalar))
    energy_rate = 0.0
    work = 0.0
    for k in range(1, model.count + 1):
        coef = model.amplitude / k
        field = coef * window * profiles[k - 1]
        projected = spectral.synthesize(basis, spectral.project(basis, field))
        weighted = rho * projected
        g = spectral.project(basis, weighted)
        increment += g * dW[k - 1]
        qv_rate += g * g
        energy_rate += 0.5 * spectral.integrate(
            basis, rho * np.sum(projected**2, axis=0)
        )
        work += dW[k - 1] * spectral.integrate(
            basis, np.sum(velocity * weighted, axis=0)
        )
    return NoiseTerms(
        increment=increment, qv_rate=qv_rate,
        energy_rate=float(energy_rate), work=float(work),
    )
