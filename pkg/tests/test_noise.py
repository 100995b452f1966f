"""Tests for the forcing layer: windows, streams, projected increments."""

import math

import numpy as np
import pytest

from sgns import noise, spectral
from sgns.noise import (
    NoiseModel,
    build_noise,
    density_window,
    diffusion_coefficient,
    noise_terms,
    path_rng,
    sample_increments,
    speed_window,
)
from sgns.spectral import DomainSpec, build_basis


def make_basis(dim=2, family="sine", modes=4, grid=12, lengths=1.0):
    return build_basis(DomainSpec(dim, lengths, family, modes, grid))


# ---------------------------------------------------------------------------
# windows


def test_build_noise_validation():
    with pytest.raises(ValueError):
        build_noise(count=-1)
    with pytest.raises(ValueError):
        build_noise(amplitude=-0.1)
    with pytest.raises(ValueError):
        build_noise(alpha=0.0)
    with pytest.raises(ValueError):
        build_noise(alpha=0.5)
    build_noise(alpha=0.49)


def test_density_window_shape():
    a = 0.1
    assert density_window(a, 0.5 * a) == 0.0
    assert density_window(a, a) == 0.0
    assert density_window(a, 2 * a) == 1.0
    assert density_window(a, 1.0) == 1.0
    assert density_window(a, 1.0 / (2 * a)) == 1.0
    assert density_window(a, 1.0 / a) == 0.0
    assert density_window(a, 2.0 / a) == 0.0
    # cubic ramp midpoint
    assert math.isclose(density_window(a, 1.5 * a), 0.5)
    # monotone on each ramp
    up = density_window(a, np.linspace(a, 2 * a, 50))
    assert np.all(np.diff(up) >= 0)
    down = density_window(a, np.linspace(1 / (2 * a), 1 / a, 50))
    assert np.all(np.diff(down) <= 0)


def test_speed_window_shape_and_lipschitz():
    for a in (0.05, 0.2, 0.4):
        hi = 1.0 / a
        w = max(1.0 / (2 * a), 1.5)
        assert speed_window(a, 0.0) == 1.0
        assert speed_window(a, hi - w) == 1.0
        assert speed_window(a, hi) == 0.0
        assert speed_window(a, hi + 3.0) == 0.0
        assert math.isclose(speed_window(a, hi - 0.5 * w), 0.5)
        s = np.linspace(0.0, hi + 1.0, 20001)
        slopes = np.abs(np.diff(speed_window(a, s)) / np.diff(s))
        assert np.max(slopes) <= 1.0 + 1e-6


def test_windows_vectorize():
    a = 0.1
    rho = np.array([[0.05, 1.0], [2.0, 50.0]])
    out = density_window(a, rho)
    assert out.shape == (2, 2)
    assert out[0, 0] == 0.0 and out[0, 1] == 1.0 and out[1, 1] == 0.0


# ---------------------------------------------------------------------------
# streams


def test_increments_are_pure_functions_of_labels():
    a = sample_increments(seed=7, path=3, step=11, count=5, dt=0.01)
    b = sample_increments(seed=7, path=3, step=11, count=5, dt=0.01)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_increments(7, 3, 12, 5, 0.01))
    assert not np.array_equal(a, sample_increments(7, 4, 11, 5, 0.01))
    assert not np.array_equal(a, sample_increments(8, 3, 11, 5, 0.01))


def test_purpose_streams_independent():
    a = path_rng(7, 3, 0, purpose=noise.NOISE_STREAM).standard_normal(8)
    b = path_rng(7, 3, 0, purpose=noise.INITIAL_STREAM).standard_normal(8)
    assert not np.array_equal(a, b)


def test_increment_moments():
    dt = 0.02
    draws = np.concatenate(
        [sample_increments(1, p, 0, 40, dt) for p in range(500)]
    )
    assert abs(np.mean(draws)) < 3 * math.sqrt(dt / draws.size)
    assert abs(np.var(draws) - dt) < 0.05 * dt


# ---------------------------------------------------------------------------
# coefficient fields


def test_diffusion_coefficient_direction_and_magnitude():
    b = make_basis(dim=2, modes=3, grid=10)
    model = build_noise(count=5, amplitude=0.3, alpha=0.1)
    rho = np.ones(b.grid_shape)        # plateau of psi
    u = np.zeros((2,) + b.grid_shape)  # plateau of phi
    for k in range(1, 6):
        f = diffusion_coefficient(model, b, k, rho, u)
        direction = (k - 1) % 2
        wave = (k - 1) // 2
        assert np.max(np.abs(f[1 - direction])) == 0.0
        x = spectral.coordinates(b)[direction]
        expected = (0.3 / k) * np.cos(math.pi * wave * x)
        assert np.max(np.abs(f[direction] - expected)) < 1e-14


def test_diffusion_coefficient_vanishes_outside_windows():
    b = make_basis()
    model = build_noise(count=2, amplitude=1.0, alpha=0.1)
    u = np.zeros((2,) + b.grid_shape)
    thin = np.full(b.grid_shape, 0.05)    # below alpha
    dense = np.full(b.grid_shape, 20.0)   # above 1/alpha
    assert np.max(np.abs(diffusion_coefficient(model, b, 1, thin, u))) == 0.0
    assert np.max(np.abs(diffusion_coefficient(model, b, 1, dense, u))) == 0.0
    fast = np.zeros((2,) + b.grid_shape)
    fast[0] = 30.0                        # speed above 1/alpha
    rho = np.ones(b.grid_shape)
    assert np.max(np.abs(diffusion_coefficient(model, b, 1, rho, fast))) == 0.0


def test_diffusion_coefficient_bounded_by_amplitude():
    b = make_basis()
    model = build_noise(count=3, amplitude=0.7, alpha=0.2)
    rng = np.random.default_rng(0)
    rho = np.exp(rng.standard_normal(b.grid_shape))
    u = rng.standard_normal((2,) + b.grid_shape)
    for k in (1, 2, 3):
        f = diffusion_coefficient(model, b, k, rho, u)
        assert np.max(np.abs(f)) <= 0.7 / k + 1e-14


def test_mode_index_validation():
    b = make_basis()
    model = build_noise(count=2)
    rho = np.ones(b.grid_shape)
    u = np.zeros((2,) + b.grid_shape)
    with pytest.raises(ValueError):
        diffusion_coefficient(model, b, 0, rho, u)
    with pytest.raises(ValueError):
        diffusion_coefficient(model, b, 3, rho, u)


def test_fourier_profiles_periodic():
    b = make_basis(dim=1, family="fourier", modes=5, grid=16, lengths=2.0)
    model = build_noise(count=3, amplitude=1.0, alpha=0.1)
    rho = np.ones(b.grid_shape)
    u = np.zeros((1,) + b.grid_shape)
    f = diffusion_coefficient(model, b, 2, rho, u)
    x = b.axes[0].x
    expected = 0.5 * np.cos(2 * math.pi * 1 * x / 2.0)
    assert np.max(np.abs(f[0] - expected)) < 1e-14


# ---------------------------------------------------------------------------
# assembled increments


def planted_mode_profile(k, basis):
    """Spatial profile equal to the first velocity mode along axis 0."""
    e = np.zeros(basis.n_scalar)
    e[0] = 1.0
    out = np.zeros((basis.dim,) + basis.grid_shape)
    out[0] = spectral.synthesize(basis, e)
    return out


def test_noise_terms_single_planted_mode():
    # with a profile that is exactly one velocity mode, unit density on the
    # psi plateau and zero velocity, every projection in the pipeline is the
    # identity and the outputs have closed forms
    b = make_basis(dim=2, modes=3, grid=12)
    model = NoiseModel(count=1, amplitude=0.4, alpha=0.1, profile=planted_mode_profile)
    rho = np.ones(b.grid_shape)
    u = np.zeros((2,) + b.grid_shape)
    dW = np.array([0.37])
    out = noise_terms(model, b, rho, u, dW)
    expected = np.zeros((2, b.n_scalar))
    expected[0, 0] = 0.4 * 0.37
    assert np.max(np.abs(out.increment - expected)) < 1e-12
    qv = np.zeros((2, b.n_scalar))
    qv[0, 0] = 0.4**2
    assert np.max(np.abs(out.qv_rate - qv)) < 1e-12
    assert abs(out.energy_rate - 0.5 * 0.4**2) < 1e-12
    assert out.work == 0.0


def test_noise_terms_work_matches_modal_pairing():
    # realized work equals the modal inner product of the velocity
    # coefficients with the momentum increment: two reductions, one number
    b = make_basis(dim=2, modes=4, grid=12)
    model = build_noise(count=5, amplitude=0.2, alpha=0.1)
    rng = np.random.default_rng(1)
    c = 0.1 * rng.standard_normal((2, b.n_scalar))
    u = spectral.synthesize(b, c)
    rho = 1.0 + 0.3 * np.sin(math.pi * spectral.coordinates(b)[0])
    dW = rng.standard_normal(5) * 0.1
    out = noise_terms(model, b, rho, u, dW)
    assert abs(out.work - np.sum(c * out.increment)) < 1e-12


def test_noise_terms_linear_in_amplitude():
    b = make_basis()
    rng = np.random.default_rng(2)
    rho = 1.0 + 0.2 * rng.random(b.grid_shape)
    u = 0.05 * rng.standard_normal((2,) + b.grid_shape)
    dW = rng.standard_normal(3) * 0.05
    one = noise_terms(build_noise(count=3, amplitude=0.1, alpha=0.1), b, rho, u, dW)
    two = noise_terms(build_noise(count=3, amplitude=0.2, alpha=0.1), b, rho, u, dW)
    assert np.max(np.abs(two.increment - 2.0 * one.increment)) < 1e-13
    assert abs(two.energy_rate - 4.0 * one.energy_rate) < 1e-13


def test_energy_rate_bounded():
    # projection contracts the quadrature norm and |F_k| <= f_k, so the
    # kinetic drift is at most 0.5 max(rho) Vol sum f_k^2
    b = make_basis(dim=2, modes=4, grid=12, lengths=(1.0, 1.3))
    model = build_noise(count=6, amplitude=0.5, alpha=0.1)
    rng = np.random.default_rng(3)
    rho = np.exp(0.5 * rng.standard_normal(b.grid_shape))
    u = 0.3 * rng.standard_normal((2,) + b.grid_shape)
    out = noise_terms(model, b, rho, u, np.zeros(6))
    vol = 1.0 * 1.3
    bound = 0.5 * np.max(rho) * vol * sum(
        (0.5 / k) ** 2 for k in range(1, 7)
    )
    assert out.energy_rate <= bound + 1e-12


def test_noise_terms_rejects_wrong_increment_count():
    b = make_basis()
    model = build_noise(count=3)
    with pytest.raises(ValueError):
        noise_terms(model, b, np.ones(b.grid_shape),
                    np.zeros((2,) + b.grid_shape), np.zeros(2))


def test_noise_terms_zero_modes():
    b = make_basis()
    model = build_noise(count=0)
    out = noise_terms(model, b, np.ones(b.grid_shape),
                      np.zeros((2,) + b.grid_shape), np.zeros(0))
    assert np.all(out.increment == 0.0)
    assert out.energy_rate == 0.0
