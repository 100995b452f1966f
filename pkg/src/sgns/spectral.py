"""Tensor-product spectral bases on a box, with quadrature-exact transforms.

Two families:

* ``sine`` (Dirichlet): scalar modes prod_i sqrt(2/L_i) sin(k_i pi x_i / L_i),
  k_i >= 1. Each mode vanishes on the boundary together with its Laplacian
  and bi-Laplacian, and is an eigenfunction of -Lap^3 with eigenvalue
  |kappa|^6, kappa_i = k_i pi / L_i.
* ``fourier`` (periodic): real trigonometric modes, constant + cos/sin pairs
  per axis; also -Lap^3 eigenfunctions.

Vector (velocity) modes are scalar modes times coordinate unit vectors, so a
velocity coefficient array has shape (dim, n_scalar). The quadrature grid is
uniform (midpoints for ``sine``, left points for ``fourier``) and the uniform
weight makes the discrete inner product of any two kept modes exactly
orthonormal, provided the grid satisfies the dealiasing margin
N >= 2 * max_mode_index + 1 per axis (enforced at construction).

Everything is realized as small per-axis matrices: mode values, mode
derivative values, and their weighted transposes for projections. Products of
fields are formed pointwise on the grid and projected back by quadrature
(pseudo-spectral evaluation). Separate full-resolution families are kept for
the density (Neumann-compatible cosines on the Dirichlet box) and for fluxes
(interior sines; the Nyquist mode is dropped so derivatives stay in the
cosine family), so that density transport and diffusion act on plain grid
fields via exact matrix transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, LengthMismatch, ResolutionTooLow

FAMILIES = ("sine", "fourier")


@dataclass(frozen=True)
class DomainSpec:
    """Geometry request: box, family and resolution (scalars broadcast)."""

    dim: int
    lengths: object = 1.0
    family: str = "sine"
    modes: object = 8
    grid: object = 24

    def lengths_tuple(self):
        return _broadcast(self.lengths, self.dim, float)

    def modes_tuple(self):
        return _broadcast(self.modes, self.dim, int)

    def grid_tuple(self):
        return _broadcast(self.grid, self.dim, int)


def _broadcast(value, dim, cast):
    if np.isscalar(value):
        return (cast(value),) * dim
    out = tuple(cast(v) for v in value)
    if len(out) != dim:
        raise ValueError(f"expected {dim} per-axis values, got {len(out)}")
    return out


@dataclass(frozen=True, eq=False)
class AxisBasis:
    """Per-axis mode/derivative value matrices and projection transposes."""

    length: float
    points: int
    modes: int
    x: np.ndarray          # (N,) quadrature nodes
    weight: float          # uniform quadrature weight h
    val: np.ndarray        # (N, m) velocity-family mode values
    dval: np.ndarray       # (N, m) velocity-family mode derivatives
    lap1: np.ndarray       # (m,) one-dimensional -Lap eigenvalues
    den_val: np.ndarray    # (N, N) density-family values (full resolution)
    den_dval: np.ndarray   # (N, N)
    den_lap1: np.ndarray   # (N,)
    ddx_den: np.ndarray    # (N, N) grid derivative of the density interpolant
    ddx_flux: np.ndarray   # (N, N) grid derivative of the flux interpolant
    pval: np.ndarray = field(default=None)   # (m, N) = h * val.T
    pdval: np.ndarray = field(default=None)  # (m, N) = h * dval.T
    pden: np.ndarray = field(default=None)   # (N, N) = h * den_val.T


@dataclass(frozen=True, eq=False)
class Basis:
    dim: int
    family: str
    axes: tuple
    grid_shape: tuple
    modes_shape: tuple
    n_scalar: int
    cell: float            # volume element prod_i h_i
    lap: np.ndarray        # (n_scalar,) -Lap eigenvalues of scalar modes
    lap3: np.ndarray       # (n_scalar,) -Lap^3 eigenvalues
    den_lap: np.ndarray    # grid-shaped -Lap eigenvalues of the density family


def _sine_axis(length, points, modes):
    h = length / points
    x = (np.arange(points) + 0.5) * h
    scale = math.pi / length
    k = np.arange(1, modes + 1)
    kap = scale * k
    norm = math.sqrt(2.0 / length)
    val = norm * np.sin(np.outer(x, kap))
    dval = norm * kap * np.cos(np.outer(x, kap))
    lap1 = kap**2

    # density family: full cosine set, k = 0..N-1
    kd = np.arange(points)
    kapd = scale * kd
    dnorm = np.full(points, math.sqrt(2.0 / length))
    dnorm[0] = math.sqrt(1.0 / length)
    den_val = dnorm * np.cos(np.outer(x, kapd))
    den_dval = -dnorm * kapd * np.sin(np.outer(x, kapd))
    den_lap1 = kapd**2

    # flux family: full interior sine set, k = 1..N-1 (Nyquist dropped)
    kf = np.arange(1, points)
    kapf = scale * kf
    fval = norm * np.sin(np.outer(x, kapf))
    fdval = norm * kapf * np.cos(np.outer(x, kapf))

    ddx_den = den_dval @ (h * den_val.T)
    ddx_flux = fdval @ (h * fval.T)
    return AxisBasis(
        length=length, points=points, modes=modes, x=x, weight=h,
        val=val, dval=dval, lap1=lap1,
        den_val=den_val, den_dval=den_dval, den_lap1=den_lap1,
        ddx_den=ddx_den, ddx_flux=ddx_flux,
        pval=h * val.T, pdval=h * dval.T, pden=h * den_val.T,
    )


def _fourier_tables(length, points, count):
    """First ``count`` real periodic modes on the axis grid: values,
    derivatives and -Lap eigenvalues. Order: const, cos q, sin q, q = 1, 2...
    For even resolutions the Nyquist cosine closes the full set; its grid
    derivative vanishes identically."""
    h = length / points
    x = np.arange(points) * h
    scale = 2.0 * math.pi / length
    val = np.empty((points, count))
    dval = np.empty((points, count))
    lap1 = np.empty(count)
    val[:, 0] = math.sqrt(1.0 / length)
    dval[:, 0] = 0.0
    lap1[0] = 0.0
    norm = math.sqrt(2.0 / length)
    for idx in range(1, count):
        q = (idx + 1) // 2
        kap = scale * q
        if 2 * q == points and idx == count - 1 and idx % 2 == 1:
            # Nyquist cosine: (-1)^j on the grid, norm 1/sqrt(L)
            val[:, idx] = math.sqrt(1.0 / length) * np.cos(kap * x)
            dval[:, idx] = 0.0
        elif idx % 2 == 1:
            val[:, idx] = norm * np.cos(kap * x)
            dval[:, idx] = -norm * kap * np.sin(kap * x)
        else:
            val[:, idx] = norm * np.sin(kap * x)
            dval[:, idx] = norm * kap * np.cos(kap * x)
        lap1[idx] = kap * kap
    return x, h, val, dval, lap1


def _fourier_axis(length, points, modes):
    x, h, val, dval, lap1 = _fourier_tables(length, points, modes)
    _, _, den_val, den_dval, den_lap1 = _fourier_tables(length, points, points)
    ddx = den_dval @ (h * den_val.T)
    return AxisBasis(
        length=length, points=points, modes=modes, x=x, weight=h,
        val=val, dval=dval, lap1=lap1,
        den_val=den_val, den_dval=den_dval, den_lap1=den_lap1,
        ddx_den=ddx, ddx_flux=ddx,
        pval=h * val.T, pdval=h * dval.T, pden=h * den_val.T,
    )


def build_basis(spec: DomainSpec) -> Basis:
    """Construct the tensor-product basis; enforces the dealiasing margin."""
    if spec.family not in FAMILIES:
        raise ValueError(f"unknown basis family {spec.family!r}")
    if spec.dim not in (1, 2, 3):
        raise ValueError("dim must be 1, 2 or 3")
    lengths = spec.lengths_tuple()
    modes = spec.modes_tuple()
    grid = spec.grid_tuple()
    axes = []
    for length, m, n in zip(lengths, modes, grid):
        if length <= 0:
            raise ValueError("box edge lengths must be positive")
        if m < 1:
            raise ValueError("need at least one mode per axis")
        if spec.family == "sine":
            max_index = m
            if n < 2 * max_index + 1:
                raise ResolutionTooLow(
                    f"grid {n} < dealiasing margin {2 * max_index + 1} "
                    f"for {m} sine modes"
                )
            axes.append(_sine_axis(length, n, m))
        else:
            if m % 2 == 0:
                raise ValueError("fourier mode count per axis must be odd")
            max_index = (m - 1) // 2
            if n < max(2 * max_index + 1, m):
                raise ResolutionTooLow(
                    f"grid {n} < dealiasing margin {2 * max_index + 1} "
                    f"for {m} fourier modes"
                )
            axes.append(_fourier_axis(length, n, m))

    modes_shape = tuple(a.modes for a in axes)
    grid_shape = tuple(a.points for a in axes)
    lap = np.zeros(modes_shape)
    den_lap = np.zeros(grid_shape)
    for i, a in enumerate(axes):
        shape = [1] * spec.dim
        shape[i] = a.modes
        lap = lap + a.lap1.reshape(shape)
        shape[i] = a.points
        den_lap = den_lap + a.den_lap1.reshape(shape)
    lap = lap.reshape(-1)
    cell = float(np.prod([a.weight for a in axes]))
    return Basis(
        dim=spec.dim, family=spec.family, axes=tuple(axes),
        grid_shape=grid_shape, modes_shape=modes_shape,
        n_scalar=int(np.prod(modes_shape)), cell=cell,
        lap=lap, lap3=lap**3, den_lap=den_lap,
    )


def coordinates(basis: Basis):
    """Stacked grid coordinates, shape (dim, *grid)."""
    grids = np.meshgrid(*[a.x for a in basis.axes], indexing="ij")
    return np.stack(grids)


def _axis_apply(mat, f, axis):
    return np.moveaxis(np.tensordot(mat, f, axes=(1, axis)), 0, axis)


def _tensor_apply(mats, f):
    out = np.asarray(f, dtype=float)
    for ax, mat in enumerate(mats):
        out = _axis_apply(mat, out, ax)
    return out


def _scalar_synth(basis, coef):
    return _tensor_apply([a.val for a in basis.axes], coef.reshape(basis.modes_shape))


def _scalar_project(basis, f):
    return _tensor_apply([a.pval for a in basis.axes], f).reshape(-1)


def synthesize(basis: Basis, c):
    """Modal coefficients -> grid field. (n,) -> grid, (dim, n) -> (dim, *grid)."""
    c = np.asarray(c, dtype=float)
    if c.ndim == 1:
        if c.shape[0] != basis.n_scalar:
            raise LengthMismatch(
                f"expected {basis.n_scalar} coefficients, got {c.shape[0]}"
            )
        return _scalar_synth(basis, c)
    if c.shape != (basis.dim, basis.n_scalar):
        raise LengthMismatch(
            f"expected shape ({basis.dim}, {basis.n_scalar}), got {c.shape}"
        )
    return np.stack([_scalar_synth(basis, comp) for comp in c])


def project(basis: Basis, f):
    """Grid field -> modal coefficients (the orthonormal projection Pi_n)."""
    f = np.asarray(f, dtype=float)
    if f.shape == basis.grid_shape:
        return _scalar_project(basis, f)
    if f.shape == (basis.dim,) + basis.grid_shape:
        return np.stack([_scalar_project(basis, comp) for comp in f])
    raise GridMismatch(
        f"field shape {f.shape} does not match grid {basis.grid_shape}"
    )


def integrate(basis: Basis, f):
    """Quadrature of a grid field over the box."""
    f = np.asarray(f, dtype=float)
    if f.shape[-basis.dim:] != basis.grid_shape:
        raise GridMismatch(
            f"field shape {f.shape} does not match grid {basis.grid_shape}"
        )
    return basis.cell * f.reshape(f.shape[: f.ndim - basis.dim] + (-1,)).sum(axis=-1)


def _component_gradient(basis, coef):
    """Grid values of grad of one scalar mode combination, shape (dim, *grid)."""
    coef = coef.reshape(basis.modes_shape)
    out = []
    for j in range(basis.dim):
        mats = [a.dval if i == j else a.val for i, a in enumerate(basis.axes)]
        out.append(_tensor_apply(mats, coef))
    return np.stack(out)


def velocity_gradient(basis: Basis, c):
    """Full gradient d_j u_i on the grid, shape (dim, dim, *grid)."""
    c = np.asarray(c, dtype=float)
    if c.shape != (basis.dim, basis.n_scalar):
        raise LengthMismatch(
            f"expected shape ({basis.dim}, {basis.n_scalar}), got {c.shape}"
        )
    return np.stack([_component_gradient(basis, comp) for comp in c])


def differentiate(basis: Basis, c, op: str):
    """Spectral derivatives of a velocity coefficient array.

    op = 'sym_gradient'  -> symmetric gradient on the grid (dim, dim, *grid)
    op = 'divergence'    -> divergence on the grid (*grid)
    op = 'tri_laplacian' -> modal action of Lap^3, i.e. -|kappa|^6 c (dim, n)
    """
    if op == "tri_laplacian":
        c = np.asarray(c, dtype=float)
        if c.shape != (basis.dim, basis.n_scalar):
            raise LengthMismatch(
                f"expected shape ({basis.dim}, {basis.n_scalar}), got {c.shape}"
            )
        return -basis.lap3 * c
    grad = velocity_gradient(basis, c)
    if op == "sym_gradient":
        return 0.5 * (grad + np.swapaxes(grad, 0, 1))
    if op == "divergence":
        return np.einsum("ii...->...", grad)
    raise ValueError(f"unknown derivative op {op!r}")


def grid_gradient(basis: Basis, f):
    """Gradient of a scalar grid field via the density-family interpolant."""
    f = np.asarray(f, dtype=float)
    if f.shape != basis.grid_shape:
        raise GridMismatch(f"field shape {f.shape} does not match grid")
    return np.stack(
        [_axis_apply(basis.axes[j].ddx_den, f, j) for j in range(basis.dim)]
    )


def grid_divergence(basis: Basis, vec):
    """Divergence of a vector grid field via the flux-family interpolant.

    Each component is interpolated in the family that matches its boundary
    behaviour (interior sines for the Dirichlet box, full periodic modes
    otherwise); the derivative lands in the complementary family and is
    evaluated back on the grid. The grid mean of the result is exactly zero,
    which is what makes discrete mass conservation exact.
    """
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (basis.dim,) + basis.grid_shape:
        raise GridMismatch(f"field shape {vec.shape} does not match grid")
    out = np.zeros(basis.grid_shape)
    for j in range(basis.dim):
        out = out + _axis_apply(basis.axes[j].ddx_flux, vec[j], j)
    return out


def density_transform(basis: Basis, f):
    """Grid field -> full density-family coefficients (grid-shaped tensor)."""
    f = np.asarray(f, dtype=float)
    if f.shape != basis.grid_shape:
        raise GridMismatch(f"field shape {f.shape} does not match grid")
    return _tensor_apply([a.pden for a in basis.axes], f)


def density_synthesis(basis: Basis, coef):
    return _tensor_apply([a.den_val for a in basis.axes], np.asarray(coef, float))


def band_limit(basis: Basis, f):
    """Project a scalar grid field onto the full density family.

    The density transform is a bijection on grid values, so for plain grid
    fields this is the identity to rounding; it is used to give analytically
    defined profiles an exactly band-limited representative.
    """
    return density_synthesis(basis, density_transform(basis, f))


def project_weak_gradient(basis: Basis, scalar_field):
    """Coefficients q[i, k] = Int scalar * d_i omega_k dx (quadrature)."""
    f = np.asarray(scalar_field, dtype=float)
    if f.shape != basis.grid_shape:
        raise GridMismatch(f"field shape {f.shape} does not match grid")
    out = np.empty((basis.dim, basis.n_scalar))
    for i in range(basis.dim):
        mats = [a.pdval if j == i else a.pval for j, a in enumerate(basis.axes)]
        out[i] = _tensor_apply(mats, f).reshape(-1)
    return out


def project_weak_divergence(basis: Basis, tensor_field):
    """Coefficients w[i, k] = sum_j Int T[i, j] d_j omega_k dx.

    Pairing a tensor field against gradients of the velocity modes; the
    projection of div T onto the i-th velocity component is -w[i].
    """
    t = np.asarray(tensor_field, dtype=float)
    if t.shape != (basis.dim, basis.dim) + basis.grid_shape:
        raise GridMismatch(f"tensor shape {t.shape} does not match grid")
    out = np.zeros((basis.dim, basis.n_scalar))
    for j in range(basis.dim):
        mats = [a.pdval if ax == j else a.pval for ax, a in enumerate(basis.axes)]
        for i in range(basis.dim):
            out[i] += _tensor_apply(mats, t[i, j]).reshape(-1)
    return out


def mass_matrix(basis: Basis, rho):
    """Scalar-mode Gram matrix M[k, l] = Int rho omega_k omega_l dx.

    Velocity modes are scalar modes times unit vectors, so the full Gram
    matrix is block diagonal with this block repeated per component. The
    assembly contracts the weighted density against per-axis value matrices
    (separable quadrature), which is far cheaper than forming the full
    tensor-product value matrix.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != basis.grid_shape:
        raise GridMismatch(f"field shape {rho.shape} does not match grid")
    w = basis.cell * rho
    axes = basis.axes
    if basis.dim == 1:
        m = np.einsum("a,ak,al->kl", w, axes[0].val, axes[0].val,
                      optimize=True)
        return m
    if basis.dim == 2:
        t = np.einsum("ab,bk,bl->akl", w, axes[1].val, axes[1].val,
                      optimize=True)
        m = np.einsum("akl,ai,aj->ikjl", t, axes[0].val, axes[0].val,
                      optimize=True)
        return m.reshape(basis.n_scalar, basis.n_scalar)
    t = np.einsum("abc,ck,cl->abkl", w, axes[2].val, axes[2].val,
                  optimize=True)
    t = np.einsum("abkl,bm,bn->amknl", t, axes[1].val, axes[1].val,
                  optimize=True)
    m = np.einsum("amknl,ai,aj->imkjnl", t, axes[0].val, axes[0].val,
                  optimize=True)
    return m.reshape(basis.n_scalar, basis.n_scalar)
