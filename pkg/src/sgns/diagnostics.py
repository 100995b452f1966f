"""Falsifiable checks on simulation output.

Every routine here turns one of the structural properties of the continuous
system into a quantitative test on discrete artifacts: energy and entropy
budgets from the per-step ledger, a density band from the divergence
history, an Orlicz-type velocity bound from the dissipation, quadratic
variation of the momentum martingale, and tail statistics of the two-part
stopping rule. All functions are pure array-level computations; file-format
concerns live with the ensemble driver.

Ledger conventions (see the solver): rate columns hold left-endpoint
instantaneous values, realized increments sit in the row of the step that
produced them, and rows after a stopping event repeat the frozen state with
zero rates. Time integrals below are therefore left-endpoint Riemann sums,
which makes every budget residual first order in dt; the final row's rates
never enter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import constitutive, spectral
from .errors import IncompleteLedger, WrongBasisFamily
from .solver import LEDGER_COLUMNS


def column(ledger, columns, name):
    ledger = np.asarray(ledger, dtype=float)
    if ledger.ndim != 2 or ledger.shape[1] != len(columns):
        raise IncompleteLedger(
            f"ledger shape {ledger.shape} does not match {len(columns)} columns"
        )
    if ledger.shape[0] < 2:
        raise IncompleteLedger("ledger needs at least two rows")
    try:
        idx = list(columns).index(name)
    except ValueError:
        raise IncompleteLedger(f"ledger lacks column {name!r}") from None
    return ledger[:, idx]


def energy_terms(ledger, columns=LEDGER_COLUMNS):
    """Named views of the ledger plus derived totals."""
    get = lambda name: column(ledger, columns, name)
    t = get("t")
    total = get("kinetic") + get("potential")
    dissipation = (
        get("dissipation_F") + get("dissipation_Fstar")
        + get("dissipation_mu") + get("dissipation_eps")
    )
    return {
        "t": t,
        "energy": total,
        "dissipation_rate": dissipation,
        "ito_rate": get("ito_correction"),
        "work": get("noise_work_increment"),
    }


def ledger_residual(ledger, columns=LEDGER_COLUMNS, mode="cumulative",
                    martingale="realized"):
    """Energy-budget residual of one path.

    The budget compares the discrete transition

        E_{j+1} - E_j  vs  dt (ito_j - dissipation_j) + work_j,

    where dissipation collects the Fenchel pair of the viscous stress, the
    hyper-viscous term and the regularization terms. A positive residual
    means the path gained more energy than the budget allows.

    mode: 'increment' for the per-step array, 'cumulative' for its running
    sum, 'final' for the end value. Returns (values, summary).

    martingale: 'realized' subtracts the recorded noise work, giving the
    pathwise identity residual. 'averaged' keeps only the Ito correction
    on the budget side; the realized work is a mean-zero martingale, so
    this is the form whose ensemble average tests the expectation version
    of the energy inequality. With noise off the two coincide.
    """
    terms = energy_terms(ledger, columns)
    t = terms["t"]
    dt = np.diff(t)
    e = terms["energy"]
    increments = (
        np.diff(e)
        - dt * (terms["ito_rate"][:-1] - terms["dissipation_rate"][:-1])
    )
    if martingale == "realized":
        increments = increments - terms["work"][:-1]
    elif martingale != "averaged":
        raise ValueError(f"unknown martingale treatment {martingale!r}")
    cumulative = np.cumsum(increments)
    summary = {
        "final": float(cumulative[-1]),
        "max_cumulative": float(np.max(cumulative)),
        "max_abs_cumulative": float(np.max(np.abs(cumulative))),
        "max_abs_increment": float(np.max(np.abs(increments))),
        "scale": float(np.max(np.abs(e)) + np.sum(np.abs(dt * terms["dissipation_rate"][:-1]))),
    }
    if mode == "increment":
        return increments, summary
    if mode == "cumulative":
        return cumulative, summary
    if mode == "final":
        return cumulative[-1], summary
    raise ValueError(f"unknown residual mode {mode!r}")


def entropy_residual(ledger, columns=LEDGER_COLUMNS):
    """Budget residual of the density entropy Int rho log rho."""
    get = lambda name: column(ledger, columns, name)
    t = get("t")
    dt = np.diff(t)
    increments = (
        np.diff(get("entropy"))
        - dt * (get("entropy_flux")[:-1] - get("entropy_eps")[:-1])
    )
    cumulative = np.cumsum(increments)
    return cumulative, {
        "final": float(cumulative[-1]),
        "max_abs_cumulative": float(np.max(np.abs(cumulative))),
    }


def moment_report(ledgers, columns=LEDGER_COLUMNS):
    """Ensemble moments of pathwise energy statistics.

    For each path: the running supremum of total energy and the dissipation
    integral up to the stopping time (rates are already zeroed after a
    stop). Reports their ensemble mean, max and the mean of sup E^2, the
    quantities whose uniform-in-parameter boundedness the theory asserts.
    """
    if not ledgers:
        raise IncompleteLedger("no ledgers supplied")
    sup_energy = []
    total_dissipation = []
    for ledger in ledgers:
        terms = energy_terms(ledger, columns)
        dt = np.diff(terms["t"])
        sup_energy.append(float(np.max(terms["energy"])))
        total_dissipation.append(float(np.sum(dt * terms["dissipation_rate"][:-1])))
    sup_energy = np.array(sup_energy)
    total_dissipation = np.array(total_dissipation)
    combined = sup_energy + total_dissipation
    return {
        "paths": len(ledgers),
        "mean_sup_energy": float(np.mean(sup_energy)),
        "max_sup_energy": float(np.max(sup_energy)),
        "mean_sup_energy_sq": float(np.mean(sup_energy**2)),
        "mean_total_dissipation": float(np.mean(total_dissipation)),
        "max_total_dissipation": float(np.max(total_dissipation)),
        "max_combined": float(np.max(combined)),
        "mean_combined": float(np.mean(combined)),
    }


def pointwise_bounds(ledger, columns=LEDGER_COLUMNS, slack=0.05):
    """Density band check from the divergence history.

    Transport changes the density along characteristics at most at the rate
    |div v|, and the diffusive step only contracts the range, so

        min rho(0) exp(-I_j) <= rho <= max rho(0) exp(+I_j),
        I_j = integral of the largest divergence magnitude up to t_j.

    The transport velocity carries a cutoff factor <= 1, so the recorded
    |div u| overestimates its divergence and the band is conservative up to
    time discretization. ``slack`` widens the band multiplicatively to
    absorb the first-order stepping error. Returns per-row margins (>= 0
    when satisfied) and a summary.
    """
    get = lambda name: column(ledger, columns, name)
    t = get("t")
    dt = np.diff(t)
    stretch = np.concatenate([[0.0], np.cumsum(dt * get("div_u_max")[:-1])])
    lower = get("min_rho")[0] * np.exp(-stretch) * (1.0 - slack)
    upper = get("max_rho")[0] * np.exp(stretch) * (1.0 + slack)
    lower_margin = get("min_rho") - lower
    upper_margin = upper - get("max_rho")
    ok = bool(np.all(lower_margin >= 0) and np.all(upper_margin >= 0))
    return {
        "satisfied": ok,
        "worst_lower_margin": float(np.min(lower_margin)),
        "worst_upper_margin": float(np.min(upper_margin)),
        "band_lower": lower,
        "band_upper": upper,
    }


def orlicz_velocity_check(basis, model, c):
    """Orlicz-level coercivity of the dissipation over the velocity.

    For a velocity vanishing on the boundary of a box with edges at most
    one, each component at a point is dominated by the mean of |Du| along
    an axis line, and Jensen's inequality for the radial envelope g of the
    dissipation potential yields

        Int g(|u| / sqrt(d)) dx <= 3 Int F(Du) dx.

    Returns both sides and their ratio. Requires the boundary-vanishing
    family; the periodic family admits constants with zero dissipation, for
    which no such bound can hold.
    """
    if basis.family != "sine":
        raise WrongBasisFamily(
            "the velocity Orlicz bound needs the boundary-vanishing family"
        )
    if any(a.length > 1.0 + 1e-12 for a in basis.axes):
        raise ValueError("the Orlicz bound derivation needs box edges <= 1")
    c = np.asarray(c, dtype=float)
    u = spectral.synthesize(basis, c)
    speed = np.sqrt(np.sum(u**2, axis=0))
    envelope = constitutive.orlicz_envelope(model, basis.dim)
    lhs = float(spectral.integrate(basis, envelope(speed)))
    sym = spectral.differentiate(basis, c, "sym_gradient")
    rhs = 3.0 * float(
        spectral.integrate(basis, constitutive.potential_value(model, sym))
    )
    return {
        "lhs": lhs,
        "rhs": rhs,
        "ratio": lhs / rhs if rhs > 0 else math.inf if lhs > 0 else 0.0,
        "satisfied": bool(lhs <= rhs * (1.0 + 1e-9) + 1e-15),
    }


def martingale_qv_check(qv_emp, qv_pred, min_fraction=1e-3):
    """Compare realized and predicted quadratic variation across paths.

    qv_emp, qv_pred: arrays of shape (paths, dim, n) holding, per path, the
    summed squared noise increments of each momentum coefficient and the
    integrated predicted rate. Averaged over paths the two agree in
    expectation; the check reports the relative deviation of the totals and
    the worst relative deviation among coefficients carrying at least
    ``min_fraction`` of the total predicted variation.
    """
    qv_emp = np.asarray(qv_emp, dtype=float)
    qv_pred = np.asarray(qv_pred, dtype=float)
    if qv_emp.shape != qv_pred.shape or qv_emp.ndim != 3:
        raise ValueError("expected matching (paths, dim, n) arrays")
    paths = qv_emp.shape[0]
    mean_emp = qv_emp.mean(axis=0)
    mean_pred = qv_pred.mean(axis=0)
    total_pred = float(np.sum(mean_pred))
    total_emp = float(np.sum(mean_emp))
    if total_pred <= 0.0:
        return {
            "paths": paths,
            "total_relative_error": 0.0 if total_emp == 0.0 else math.inf,
            "worst_coefficient_error": 0.0,
            "significant_coefficients": 0,
        }
    mask = mean_pred >= min_fraction * total_pred
    rel = np.abs(mean_emp[mask] - mean_pred[mask]) / mean_pred[mask]
    return {
        "paths": paths,
        "total_relative_error": abs(total_emp - total_pred) / total_pred,
        "worst_coefficient_error": float(np.max(rel)) if rel.size else 0.0,
        "significant_coefficients": int(np.count_nonzero(mask)),
    }


@dataclass(frozen=True)
class StoppingReport:
    radii: tuple
    norm_thresholds: tuple
    dissipation_thresholds: tuple
    hit_fractions: tuple
    fitted_constant: float


def stopping_statistics(norm_series, dissipation_series, dt, radii) -> StoppingReport:
    """Tail statistics of the two-part stopping rule over a radius ladder.

    For radius R the rule fires when the velocity norm reaches sqrt(R) or
    the dissipation integral reaches log(sqrt(R)). Hitting events are
    nested in R path by path, so a single ensemble of norm and dissipation
    histories yields the whole ladder. The fitted constant is the smallest
    C with  hit fraction <= C (1/sqrt(R) + 1/log(sqrt(R)))  across the
    ladder, the shape of the tail bound furnished by the moment estimates.
    """
    radii = tuple(float(r) for r in radii)
    if not radii or any(r <= 1.0 for r in radii):
        raise ValueError("radii must exceed one (log sqrt(R) must be positive)")
    if list(radii) != sorted(radii):
        raise ValueError("radii must be ascending")
    if len(norm_series) != len(dissipation_series) or not norm_series:
        raise ValueError("need matching, nonempty series collections")
    peak_norm = np.array([float(np.max(s)) for s in norm_series])
    # left-endpoint running integral, consistent with the ledger convention
    peak_diss = np.array(
        [
            float(np.max(np.cumsum(np.asarray(s, dtype=float)[:-1]) * dt, initial=0.0))
            for s in dissipation_series
        ]
    )
    fractions = []
    fitted = 0.0
    for r in radii:
        a = math.sqrt(r)
        b = math.log(math.sqrt(r))
        hit = np.mean((peak_norm >= a) | (peak_diss >= b))
        fractions.append(float(hit))
        fitted = max(fitted, float(hit) / (1.0 / a + 1.0 / b))
    return StoppingReport(
        radii=radii,
        norm_thresholds=tuple(math.sqrt(r) for r in radii),
        dissipation_thresholds=tuple(math.log(math.sqrt(r)) for r in radii),
        hit_fractions=tuple(fractions),
        fitted_constant=fitted,
    )


def fenchel_checkpoint_check(basis, model, snapshots):
    """Verify the Fenchel equality F(Du) + F*(S(Du)) = S : Du on states.

    snapshots: iterable of (t, rho, c) triples as stored by solve_path.
    Returns the largest pointwise gap magnitude across all states; values
    at rounding level certify that the stress, potential and conjugate
    stay on the subdifferential graph along the computed flow.
    """
    worst = 0.0
    for _, _, c in snapshots:
        sym = spectral.differentiate(basis, np.asarray(c, float), "sym_gradient")
        stress = constitutive.stress_of_strain(model, sym)
        gap = constitutive.fenchel_gap(model, stress, sym)
        worst = max(worst, float(np.max(np.abs(gap))))
    return worst


def weak_form_summary(weak_results):
    """Aggregate weak-form residual dictionaries from several paths.

    weak_results: iterable of the per-path ``weak`` mappings produced by
    solve_path. Returns, per test-function name, the maximum residual
    magnitudes across paths.
    """
    summary = {}
    for weak in weak_results:
        for name, entry in weak.items():
            slot = summary.setdefault(
                name, {"momentum_residual": 0.0, "continuity_residual": 0.0}
            )
            slot["momentum_residual"] = max(
                slot["momentum_residual"], abs(entry["momentum_residual"])
            )
            slot["continuity_residual"] = max(
                slot["continuity_residual"], abs(entry["continuity_residual"])
            )
    return summary
