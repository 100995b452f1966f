"""Time stepping for the regularized stochastic compressible system.

One step advances the pair (rho, u) of grid density and modal velocity by an
Euler-Maruyama transition of the coupled balance laws

    d rho   + div(rho [u]_R) dt = eps Lap rho dt
    d(rho u) + div(rho [u]_R (x) u) dt
            = [mu Lap^3 u + div S(Du) - chi grad p(rho) + eps Lap(rho u)] dt
              + sum_k Proj(rho Proj F_k) dW_k,

with [u]_R a smooth norm cutoff of the transport velocity. The velocity block
is a Galerkin projection onto the spectral modes; the density is evolved on
the full quadrature grid so that products with velocity fields stay pointwise.

Scheme, in the order the code performs it:

1. synthesize u_j, apply the cutoff factor s = cut(|c_j| - R), v = s u_j;
2. advective/acoustic step-size check;
3. density update, diagonal in the density family:
   rho' = (1 + eps dt K2)^(-1) (rho_j - dt div(rho_j v)), K2 the family
   Laplacian symbol; positivity of rho' is enforced;
4. explicit weak-form momentum terms at the left endpoint: convection
   +<rho u_i v_j, d_j w>, stress -<S_ij, d_j w>, pressure +chi <p, d_i w>,
   plus the projected noise increment;
5. implicit momentum diffusion, split: first the diagonal eps-block
   b* = rhs / (1 + eps dt K2m), then the coupled solve
   (M(rho') + mu dt K6) c' = b* with M the rho'-weighted Gram matrix
   (one Cholesky factorization per step, shared by all components);
6. publish b_{j+1} = b* - mu dt K6 c', which keeps the one-step identity
   b_{j+1} = b_j + drift + noise exact in floating point up to summation
   order.

The momentum coefficients b always satisfy b = M(rho) c, because projecting
rho times a synthesized field is algebraically the Gram matrix applied to
the coefficients (same quadrature sum). Kinetic energy is b . c / 2 exactly.

Randomness never touches solver state: Wiener increments and initial draws
are pure functions of (seed, path, step) via counter-based streams, so any
path is reproducible from its labels alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import constitutive, noise, spectral
from .errors import (
    CflViolation,
    NotPositiveDefinite,
    PositivityLost,
)

LEDGER_COLUMNS = (
    "t",
    "kinetic",
    "potential",
    "dissipation_F",
    "dissipation_Fstar",
    "ito_correction",
    "noise_work_increment",
    "mass",
    "min_rho",
    "max_rho",
    "norm_u",
    "stopped",
    "div_u_max",
    "dissipation_eps",
    "dissipation_mu",
    "entropy",
    "entropy_flux",
    "entropy_eps",
)


@dataclass(frozen=True)
class SolverParams:
    dt: float
    hyper_viscosity: float = 1e-4   # mu, weight of the Lap^3 smoothing
    regularization: float = 0.0     # eps; zero recovers the base level
    cutoff_radius: float = math.inf  # R; inf disables the transport cutoff
    pressure_weight: float = 1.0    # chi in [0, 1]
    cfl_safety: float = 0.9

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.hyper_viscosity < 0:
            raise ValueError("hyper-viscosity must be nonnegative")
        if self.regularization < 0:
            raise ValueError("regularization must be nonnegative")
        if self.cutoff_radius <= 0:
            raise ValueError("cutoff radius must be positive")
        if not 0.0 <= self.pressure_weight <= 1.0:
            raise ValueError("pressure weight must lie in [0, 1]")
        if self.cfl_safety <= 0:
            raise ValueError("cfl safety factor must be positive")


@dataclass(frozen=True)
class InitialLaw:
    """Law of the initial pair: banded density, decaying random velocity.

    The density is rho_mid plus a sup-normalized random low-mode profile
    scaled by fill * rho_halfwidth, so it lies in the band
    [rho_mid - fill * rho_halfwidth, rho_mid + fill * rho_halfwidth] and has
    exact mean rho_mid. Velocity coefficients are independent Gaussians
    damped by (1 + |kappa|^2)^(-decay / 2) and rescaled, if necessary, so
    the coefficient norm never exceeds velocity_cap.
    """

    rho_mid: float = 1.0
    rho_halfwidth: float = 0.5
    fill: float = 0.5
    rho_waves: int = 2
    velocity_scale: float = 0.1
    velocity_decay: float = 2.0
    velocity_cap: float = math.inf

    def __post_init__(self):
        if self.rho_mid <= 0:
            raise ValueError("rho_mid must be positive")
        if not 0.0 <= self.rho_halfwidth < self.rho_mid:
            raise ValueError("rho_halfwidth must lie in [0, rho_mid)")
        if not 0.0 <= self.fill <= 1.0:
            raise ValueError("fill must lie in [0, 1]")
        if self.rho_waves < 1:
            raise ValueError("rho_waves must be at least one")
        if self.velocity_scale < 0:
            raise ValueError("velocity_scale must be nonnegative")
        if self.velocity_cap <= 0:
            raise ValueError("velocity_cap must be positive")


@dataclass(eq=False)
class State:
    t: float
    step: int
    rho: np.ndarray   # (grid,)
    c: np.ndarray     # (dim, n_scalar) velocity coefficients
    b: np.ndarray     # (dim, n_scalar) momentum coefficients, b = M(rho) c


@dataclass(eq=False)
class StepRecord:
    """Per-transition data consumed by running diagnostics."""

    dW: np.ndarray
    forcing: noise.NoiseTerms
    drift: np.ndarray          # b_{j+1} - b_j - noise increment, i.e. dt * drift
    flux: np.ndarray           # rho_j v_j on the grid
    cutoff: float              # transport cutoff factor s in [0, 1]


@dataclass(eq=False)
class Analysis:
    """Grid realizations and energy-ledger rates of one state."""

    u: np.ndarray
    grad_u: np.ndarray
    sym: np.ndarray
    stress: np.ndarray
    grad_rho: np.ndarray
    cutoff: float
    v: np.ndarray
    flux: np.ndarray
    row: dict


def cutoff_factor(c, radius):
    """Smooth transport cutoff: 1 while |c| <= radius, 0 past radius + 1."""
    if not np.isfinite(radius):
        return 1.0
    sigma = float(np.sqrt(np.sum(np.asarray(c) ** 2))) - radius
    if sigma <= 0.0:
        return 1.0
    if sigma >= 1.0:
        return 0.0
    return 1.0 - sigma * sigma * (3.0 - 2.0 * sigma)


def assemble_mass_solve(basis, rho, shift):
    """Cholesky solve for M(rho) + diag(shift); raises if not SPD."""
    m = spectral.mass_matrix(basis, rho)
    idx = np.arange(basis.n_scalar)
    m[idx, idx] += shift
    try:
        factor = cho_factor(m, lower=True)
    except LinAlgError as exc:
        raise NotPositiveDefinite(
            "density-weighted Gram matrix is not positive definite"
        ) from exc
    return lambda rhs: cho_solve(factor, rhs.T).T


def sample_initial_data(basis, law: InitialLaw, seed, path) -> State:
    """Draw the initial state from its label-determined stream."""
    rng = noise.path_rng(seed, path, 0, noise.INITIAL_STREAM)
    waves = law.rho_waves
    if any(waves + 1 > a.points for a in basis.axes):
        raise ValueError("rho_waves exceeds the quadrature resolution")
    shape = tuple(waves + 1 for _ in range(basis.dim))
    low = rng.standard_normal(shape)
    low.flat[0] = 0.0
    coef = np.zeros(basis.grid_shape)
    coef[tuple(slice(0, waves + 1) for _ in range(basis.dim))] = low
    profile = spectral.density_synthesis(basis, coef)
    peak = float(np.max(np.abs(profile)))
    if peak > 0.0 and law.fill * law.rho_halfwidth > 0.0:
        rho = law.rho_mid + (law.fill * law.rho_halfwidth / peak) * profile
    else:
        rho = np.full(basis.grid_shape, law.rho_mid)

    c = rng.standard_normal((basis.dim, basis.n_scalar))
    c *= law.velocity_scale * (1.0 + basis.lap) ** (-0.5 * law.velocity_decay)
    norm = float(np.sqrt(np.sum(c**2)))
    if norm > law.velocity_cap:
        c *= law.velocity_cap / norm
    b = (spectral.mass_matrix(basis, rho) @ c.T).T
    return State(t=0.0, step=0, rho=rho, c=c, b=b)


def analyze(basis, model, params: SolverParams, state: State) -> Analysis:
    """Realize grid fields and the ledger rates of a state.

    All rates are instantaneous (left-endpoint) values; realized increments
    (noise work) are filled in by the transition that consumes them.
    """
    u = spectral.synthesize(basis, state.c)
    grad_u = spectral.velocity_gradient(basis, state.c)
    sym = 0.5 * (grad_u + np.swapaxes(grad_u, 0, 1))
    div_u = np.einsum("ii...->...", grad_u)
    stress = constitutive.stress_of_strain(model, sym)
    grad_rho = spectral.grid_gradient(basis, state.rho)
    s = cutoff_factor(state.c, params.cutoff_radius)
    v = u if s == 1.0 else s * u
    flux = state.rho * v

    chi = params.pressure_weight
    eps = params.regularization
    mu = params.hyper_viscosity
    grad_rho_sq = np.sum(grad_rho**2, axis=0)
    row = {
        "t": state.t,
        "kinetic": 0.5 * float(np.sum(state.b * state.c)),
        "potential": chi * float(
            spectral.integrate(basis, constitutive.pressure_potential(model, state.rho))
        ),
        "dissipation_F": float(
            spectral.integrate(basis, constitutive.potential_value(model, sym))
        ),
        "dissipation_Fstar": float(
            spectral.integrate(basis, constitutive.conjugate_value(model, stress))
        ),
        "ito_correction": 0.0,
        "noise_work_increment": 0.0,
        "mass": float(spectral.integrate(basis, state.rho)),
        "min_rho": float(np.min(state.rho)),
        "max_rho": float(np.max(state.rho)),
        "norm_u": float(np.sqrt(np.sum(state.c**2))),
        "stopped": 0.0,
        "div_u_max": float(np.max(np.abs(div_u))),
        "dissipation_eps": eps * (
            chi * float(spectral.integrate(
                basis,
                constitutive.pressure_potential_curvature(model, state.rho)
                * grad_rho_sq,
            ))
            + float(np.sum(basis.lap * state.b * state.c))
        ),
        "dissipation_mu": mu * float(np.sum(basis.lap3 * state.c**2)),
        "entropy": float(spectral.integrate(basis, state.rho * np.log(state.rho))),
        "entropy_flux": float(
            spectral.integrate(basis, np.sum(grad_rho * v, axis=0))
        ),
        "entropy_eps": eps * float(
            spectral.integrate(basis, grad_rho_sq / state.rho)
        ),
    }
    return Analysis(
        u=u, grad_u=grad_u, sym=sym, stress=stress, grad_rho=grad_rho,
        cutoff=s, v=v, flux=flux, row=row,
    )


def _check_cfl(basis, model, params, state, analysis):
    h_min = min(a.weight for a in basis.axes)
    speed = float(np.max(np.abs(analysis.u)))
    if params.pressure_weight > 0.0:
        wave = math.sqrt(
            params.pressure_weight
            * float(constitutive.pressure_slope(model, np.max(state.rho)))
        )
    else:
        wave = 0.0
    fastest = max(speed, wave)
    if fastest > 0.0 and params.dt > params.cfl_safety * h_min / fastest:
        raise CflViolation(
            f"dt = {params.dt:g} exceeds {params.cfl_safety:g} * "
            f"{h_min:g} / {fastest:g} at t = {state.t:g}",
            t=state.t,
        )


def step_regularized(basis, model, forcing, params: SolverParams, state: State,
                     dW, analysis: Analysis = None):
    """Advance one step; returns (new_state, record).

    ``analysis`` may pass in the precomputed left-endpoint realization to
    avoid doing it twice when a ledger is being written alongside.
    """
    an = analysis if analysis is not None else analyze(basis, model, params, state)
    _check_cfl(basis, model, params, state, an)
    dt = params.dt
    eps = params.regularization
    mu = params.hyper_viscosity

    # density update, diagonal in the density family
    transported = state.rho - dt * spectral.grid_divergence(basis, an.flux)
    if eps > 0.0:
        coef = spectral.density_transform(basis, transported)
        rho_next = spectral.density_synthesis(
            basis, coef / (1.0 + eps * dt * basis.den_lap)
        )
    else:
        rho_next = transported
    low = float(np.min(rho_next))
    if low <= 0.0:
        raise PositivityLost(
            f"density reached {low:g} at t = {state.t + dt:g}", t=state.t + dt
        )

    # explicit weak-form momentum terms at the left endpoint
    conv = spectral.project_weak_divergence(
        basis, np.einsum("i...,j...->ij...", an.u, an.flux)
    )
    stress_term = -spectral.project_weak_divergence(basis, an.stress)
    rhs = conv + stress_term
    if params.pressure_weight > 0.0:
        rhs += params.pressure_weight * spectral.project_weak_gradient(
            basis, constitutive.pressure_value(model, state.rho)
        )

    forcing_terms = noise.noise_terms(forcing, basis, state.rho, an.u, dW)
    b_explicit = state.b + dt * rhs + forcing_terms.increment

    # implicit diffusion, split into the diagonal eps-block and the SPD solve
    if eps > 0.0:
        b_star = b_explicit / (1.0 + eps * dt * basis.lap)
    else:
        b_star = b_explicit
    solve = assemble_mass_solve(basis, rho_next, dt * mu * basis.lap3)
    c_next = solve(b_star)
    b_next = b_star - (dt * mu * basis.lap3) * c_next

    new_state = State(
        t=state.t + dt, step=state.step + 1, rho=rho_next, c=c_next, b=b_next
    )
    record = StepRecord(
        dW=dW,
        forcing=forcing_terms,
        drift=b_next - state.b - forcing_terms.increment,
        flux=an.flux,
        cutoff=an.cutoff,
    )
    return new_state, record


def step_base(basis, model, forcing, params: SolverParams, state: State,
              dW, analysis: Analysis = None):
    """One step of the unregularized system (eps forced to zero)."""
    if params.regularization != 0.0:
        params = replace(params, regularization=0.0)
        analysis = None
    return step_regularized(basis, model, forcing, params, state, dW, analysis)


def stopping_time_update(norm_u, cumulative_dissipation, stop_norm=None,
                         stop_dissipation=None):
    """True once either exit criterion of the two-part stopping rule fires."""
    if stop_norm is not None and norm_u >= stop_norm:
        return True
    if stop_dissipation is not None and cumulative_dissipation >= stop_dissipation:
        return True
    return False


@dataclass(eq=False)
class WeakTest:
    """A space-time test function phi(t, x) = time(t) * zeta(x).

    psi holds the modal velocity-family projection of zeta (per component)
    for the momentum pairing; zeta / grad_zeta are the band-limited grid
    realization and its gradient for the continuity pairing.
    """

    name: str
    psi: np.ndarray        # (dim, n_scalar)
    zeta: np.ndarray       # (*grid,)
    grad_zeta: np.ndarray  # (dim, *grid)
    time: object = None          # callable t -> float, default constant one
    time_derivative: object = None

    def __post_init__(self):
        if (self.time is None) != (self.time_derivative is None):
            raise ValueError("time and time_derivative must be given together")

    def phi(self, t):
        return 1.0 if self.time is None else float(self.time(t))

    def dphi(self, t):
        return 0.0 if self.time is None else float(self.time_derivative(t))


@dataclass(eq=False)
class PathResult:
    seed: int
    path: int
    ledger: np.ndarray
    columns: tuple
    state: State
    snapshots: list
    qv_emp: np.ndarray
    qv_pred: np.ndarray
    weak: dict
    stopped_at: float


def solve_path(basis, model, forcing, params: SolverParams, law_or_state,
               t_final, seed=0, path=0, weak_tests=(), snapshot_every=None,
               stop_norm=None, stop_dissipation=None) -> PathResult:
    """Run one path on [0, t_final], writing the ledger and running checks.

    law_or_state: either an InitialLaw to draw from, or a prepared State.
    The ledger has one row per time point (n_steps + 1 rows); rate columns
    are left-endpoint values and realized increments sit in the row of the
    step that produced them. Once a stopping rule fires the state freezes:
    later rows repeat the frozen state with zero rates and stopped = 1.
    """
    if isinstance(law_or_state, State):
        state = law_or_state
    else:
        state = sample_initial_data(basis, law_or_state, seed, path)
    dt = params.dt
    n_steps = int(round(t_final / dt))
    if n_steps < 1:
        raise ValueError("t_final shorter than one step")
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, abs(t_final)):
        raise ValueError("t_final must be an integer multiple of dt")

    rows = []
    snapshots = []
    qv_emp = np.zeros((basis.dim, basis.n_scalar))
    qv_pred = np.zeros((basis.dim, basis.n_scalar))
    weak_acc = {w.name: {"momentum": 0.0, "continuity": 0.0} for w in weak_tests}
    mom0 = {}
    den0 = {}
    stopped = False
    stopped_at = math.nan
    cumulative_dissipation = 0.0
    t_row = state.t

    an = analyze(basis, model, params, state)
    for w in weak_tests:
        mom0[w.name] = w.phi(state.t) * float(np.sum(w.psi * state.b))
        den0[w.name] = w.phi(state.t) * float(
            spectral.integrate(basis, state.rho * w.zeta)
        )
    if snapshot_every:
        snapshots.append((state.t, state.rho.copy(), state.c.copy()))

    for j in range(n_steps):
        if stopped:
            row = dict(an.row)
            for key in ("dissipation_F", "dissipation_Fstar", "ito_correction",
                        "noise_work_increment", "dissipation_eps",
                        "dissipation_mu", "entropy_flux", "entropy_eps"):
                row[key] = 0.0
            row["stopped"] = 1.0
            row["t"] = t_row
            rows.append([row[k] for k in LEDGER_COLUMNS])
            t_row += dt
            continue

        dW = noise.sample_increments(seed, path, state.step, forcing.count, dt)
        new_state, record = step_regularized(
            basis, model, forcing, params, state, dW, analysis=an
        )
        row = dict(an.row)
        row["ito_correction"] = record.forcing.energy_rate
        row["noise_work_increment"] = record.forcing.work
        rows.append([row[k] for k in LEDGER_COLUMNS])

        qv_emp += record.forcing.increment**2
        qv_pred += dt * record.forcing.qv_rate
        cumulative_dissipation += dt * row["dissipation_F"]

        an_next = analyze(basis, model, params, new_state)
        for w in weak_tests:
            acc = weak_acc[w.name]
            phi_j = w.phi(state.t)
            acc["momentum"] += (
                dt * w.dphi(state.t) * float(np.sum(w.psi * state.b))
                + phi_j * float(np.sum(w.psi * record.drift))
                + phi_j * float(np.sum(w.psi * record.forcing.increment))
            )
            cont = dt * w.dphi(state.t) * float(
                spectral.integrate(basis, state.rho * w.zeta)
            ) + phi_j * dt * float(
                spectral.integrate(
                    basis, np.sum(record.flux * w.grad_zeta, axis=0)
                )
            )
            if params.regularization > 0.0:
                cont -= phi_j * params.regularization * dt * float(
                    spectral.integrate(
                        basis, np.sum(an_next.grad_rho * w.grad_zeta, axis=0)
                    )
                )
            acc["continuity"] += cont

        state = new_state
        an = an_next
        t_row = state.t
        if snapshot_every and (state.step % snapshot_every == 0 or j == n_steps - 1):
            snapshots.append((state.t, state.rho.copy(), state.c.copy()))
        if stopping_time_update(
            an.row["norm_u"], cumulative_dissipation, stop_norm, stop_dissipation
        ):
            stopped = True
            stopped_at = state.t

    final_row = dict(an.row)
    final_row["noise_work_increment"] = 0.0
    final_row["t"] = t_row
    if stopped:
        for key in ("dissipation_F", "dissipation_Fstar", "ito_correction",
                    "noise_work_increment", "dissipation_eps",
                    "dissipation_mu", "entropy_flux", "entropy_eps"):
            final_row[key] = 0.0
        final_row["stopped"] = 1.0
        if snapshot_every and snapshots and snapshots[-1][0] != state.t:
            snapshots.append((state.t, state.rho.copy(), state.c.copy()))
    rows.append([final_row[k] for k in LEDGER_COLUMNS])

    weak = {}
    for w in weak_tests:
        acc = weak_acc[w.name]
        mom_end = w.phi(state.t) * float(np.sum(w.psi * state.b))
        den_end = w.phi(state.t) * float(
            spectral.integrate(basis, state.rho * w.zeta)
        )
        weak[w.name] = {
            "momentum_residual": mom_end - mom0[w.name] - acc["momentum"],
            "continuity_residual": den_end - den0[w.name] - acc["continuity"],
            "momentum_boundary": mom_end - mom0[w.name],
            "continuity_boundary": den_end - den0[w.name],
        }
    return PathResult(
        seed=seed, path=path,
        ledger=np.array(rows), columns=LEDGER_COLUMNS,
        state=state, snapshots=snapshots,
        qv_emp=qv_emp, qv_pred=qv_pred, weak=weak,
        stopped_at=stopped_at,
    )
