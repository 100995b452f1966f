"""Empirical Young measures, concentration defects and equi-integrability.

Ensemble trajectories supply samples of the flow state at grid points:
density r, velocity w, viscous stress S and shear rate D, stored as flat
vectors of length 1 + dim + 2 dim^2 (22 coordinates in three dimensions).
Cells of a time-space partition collect those samples into discrete
probability measures that can be paired against integrands. Truncation
ladders estimate the mass escaping to infinity (concentration defects),
and resolution ladders quantify the energy lost between coarse and fine
runs together with the convection and pressure gaps it must dominate.

Per-path measures are kept separate by default: almost-sure statements
become assertions checked path by path, while cells aggregate over time
and space only.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import constitutive, spectral
from .errors import DominationViolated, EmptyCell, LadderMismatch


@dataclass(frozen=True)
class PartitionSpec:
    """Axis-aligned partition of the time-space slab into cells.

    The slab [0, t_final] x prod_i [0, L_i] is split into time_bins uniform
    time intervals and space_bins[i] uniform intervals along axis i. Cell
    ids enumerate (time, space...) bins in C order. Boundary samples are
    assigned to the last bin of their axis.
    """

    t_final: float
    lengths: tuple
    time_bins: int
    space_bins: tuple

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        object.__setattr__(self, "space_bins", tuple(int(v) for v in self.space_bins))
        if not self.t_final > 0.0:
            raise ValueError("t_final must be positive")
        if self.time_bins < 1:
            raise ValueError("time_bins must be at least 1")
        if len(self.lengths) != len(self.space_bins):
            raise ValueError("lengths and space_bins must have equal length")
        if not self.lengths:
            raise ValueError("at least one spatial axis is required")
        if any(v <= 0.0 for v in self.lengths):
            raise ValueError("box edges must be positive")
        if any(v < 1 for v in self.space_bins):
            raise ValueError("space_bins entries must be at least 1")

    @property
    def dim(self):
        return len(self.lengths)

    @property
    def cell_count(self):
        n = self.time_bins
        for b in self.space_bins:
            n *= b
        return n


def cell_index(partition: PartitionSpec, times, positions):
    """Cell id of each (t, x) sample, vectorized over samples."""
    times = np.asarray(times, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    if positions.shape[1] != partition.dim:
        raise ValueError(
            f"positions have {positions.shape[1]} coordinates, "
            f"partition has {partition.dim}"
        )
    shape = (partition.time_bins,) + partition.space_bins
    idx = np.clip(
        np.floor(times / partition.t_final * partition.time_bins).astype(int),
        0, partition.time_bins - 1,
    )
    flat = idx
    for ax, (length, bins) in enumerate(zip(partition.lengths, partition.space_bins)):
        k = np.clip(
            np.floor(positions[:, ax] / length * bins).astype(int), 0, bins - 1
        )
        flat = flat * shape[1 + ax] + k
    return flat


@dataclass(eq=False)
class SampleBlock:
    """Samples contributed by one path at one checkpoint time."""

    path: int
    time: float
    positions: np.ndarray   # (n, dim)
    states: np.ndarray      # (n, state_dim)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if pos.shape[0] != states.shape[0]:
            raise ValueError("positions and states disagree on sample count")
        self.positions = pos
        self.states = states


@dataclass(eq=False)
class EmpiricalYoungMeasure:
    """Per-cell weighted sample clouds in state space, with provenance.

    Weights are uniform within each cell and sum to one there, so every
    cell carries a probability measure. The provenance arrays record which
    path, time and grid point produced each sample.
    """

    partition: PartitionSpec
    states: np.ndarray      # (n_samples, state_dim)
    weights: np.ndarray     # (n_samples,)
    cells: np.ndarray       # (n_samples,) int cell ids
    paths: np.ndarray       # (n_samples,) int
    times: np.ndarray       # (n_samples,)
    positions: np.ndarray   # (n_samples, dim)

    @property
    def state_dim(self):
        return self.states.shape[1]

    @property
    def n_samples(self):
        return self.states.shape[0]


def build_empirical(blocks, partition: PartitionSpec) -> EmpiricalYoungMeasure:
    """Assemble the empirical measure of a family of sample blocks.

    Every cell of the partition must receive at least one sample; a finer
    partition than the data can fill raises EmptyCell. Weights are uniform
    per cell.
    """
    blocks = list(blocks)
    if not blocks:
        raise ValueError("no sample blocks given")
    width = blocks[0].states.shape[1]
    for blk in blocks:
        if blk.states.shape[1] != width:
            raise ValueError("sample blocks disagree on state dimension")
        if blk.positions.shape[1] != partition.dim:
            raise ValueError("sample positions do not match the partition axes")
    states = np.concatenate([b.states for b in blocks])
    positions = np.concatenate([b.positions for b in blocks])
    times = np.concatenate(
        [np.full(b.states.shape[0], float(b.time)) for b in blocks]
    )
    paths = np.concatenate(
        [np.full(b.states.shape[0], int(b.path)) for b in blocks]
    )
    cells = cell_index(partition, times, positions)
    counts = np.bincount(cells, minlength=partition.cell_count)
    empty = int(np.sum(counts == 0))
    if empty:
        raise EmptyCell(
            f"{empty} of {partition.cell_count} cells received no samples"
        )
    weights = 1.0 / counts[cells]
    return EmpiricalYoungMeasure(
        partition=partition, states=states, weights=weights,
        cells=cells, paths=paths, times=times, positions=positions,
    )


def per_path_measures(blocks, partition: PartitionSpec):
    """One empirical measure per path, keyed by path index."""
    grouped = {}
    for blk in blocks:
        grouped.setdefault(int(blk.path), []).append(blk)
    return {
        path: build_empirical(group, partition)
        for path, group in sorted(grouped.items())
    }


def pair(measure: EmpiricalYoungMeasure, integrand):
    """Cell field of the pairing <nu_cell, G>.

    The integrand receives the (n, dim) sample positions and the
    (n, state_dim) sample states and must return one value per sample;
    the result is its weighted average in every cell.
    """
    values = np.asarray(
        integrand(measure.positions, measure.states), dtype=float
    )
    if values.shape != (measure.n_samples,):
        raise ValueError("integrand must return one value per sample")
    field = np.zeros(measure.partition.cell_count)
    np.add.at(field, measure.cells, measure.weights * values)
    return field


def state_layout(dim):
    """Column slices of (r, w, S, D) inside a flat state vector."""
    d2 = dim * dim
    return {
        "r": slice(0, 1),
        "w": slice(1, 1 + dim),
        "s": slice(1 + dim, 1 + dim + d2),
        "d": slice(1 + dim + d2, 1 + dim + 2 * d2),
    }


def state_width(dim):
    return 1 + dim + 2 * dim * dim


def flow_block(basis, model, path, t, rho, c) -> SampleBlock:
    """State samples of one solver checkpoint at every grid point.

    The stress coordinates are recomputed from the logged shear rate via
    the constitutive law, and tensors are stored row-major as full dim^2
    blocks. Density samples must be nonnegative.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0.0):
        raise ValueError("density samples must be nonnegative")
    dim = basis.dim
    u = spectral.synthesize(basis, np.asarray(c, dtype=float))
    if dim == 1:
        u = u.reshape((1,) + basis.grid_shape)
    sym = spectral.differentiate(basis, np.asarray(c, dtype=float), "sym_gradient")
    stress = constitutive.stress_of_strain(model, sym)
    n = rho.size
    cols = state_layout(dim)
    states = np.empty((n, state_width(dim)))
    states[:, cols["r"]] = rho.reshape(n, 1)
    states[:, cols["w"]] = u.reshape(dim, n).T
    states[:, cols["s"]] = stress.reshape(dim * dim, n).T
    states[:, cols["d"]] = sym.reshape(dim * dim, n).T
    positions = spectral.coordinates(basis).reshape(dim, n).T
    return SampleBlock(path=int(path), time=float(t), positions=positions,
                       states=states)


def flow_blocks(basis, model, result):
    """Sample blocks from every snapshot of a finished path."""
    return [
        flow_block(basis, model, result.path, t, rho, c)
        for t, rho, c in result.snapshots
    ]


def _sample_norms(values):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.abs(values)
    return np.sqrt(np.einsum("ij,ij->i", values, values))


def _truncate(values, level):
    """Radial truncation at |z| = level (sign-preserving clamp for scalars)."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.clip(values, -level, level)
    norms = _sample_norms(values)
    scale = np.where(norms > level, level / np.where(norms > 0, norms, 1.0), 1.0)
    return values * scale[:, None]


@dataclass(eq=False)
class SampleField:
    """One member of a resolution-indexed family of sampled fields."""

    resolution: int
    positions: np.ndarray     # (n, dim)
    values: np.ndarray        # (n,) scalars or (n, k) vectors
    quad_weights: np.ndarray  # (n,) integration weights

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        values = np.asarray(self.values, dtype=float)
        weights = np.asarray(self.quad_weights, dtype=float)
        if weights.shape != (pos.shape[0],) or values.shape[0] != pos.shape[0]:
            raise ValueError("field arrays disagree on sample count")
        self.positions = pos
        self.values = values
        self.quad_weights = weights


@dataclass(eq=False)
class DefectEstimate:
    """Tail masses over a truncation ladder and their extrapolated limits.

    f_tails[i, j, cell] integrates F(U_i) - F(T_j U_i) over the cell, where
    T_j truncates at level levels[j]; g_tails likewise for the dominating
    G. The resolved arrays extrapolate the last two resolutions to n = inf
    per level, and the limit arrays extrapolate the last two levels of the
    resolved values to M = inf. Cells where |F_inf| exceeds G_inf beyond
    the tolerance are flagged in violations.
    """

    resolutions: tuple
    levels: tuple
    cell_count: int
    f_tails: np.ndarray    # (n_res, n_levels, cells)
    g_tails: np.ndarray
    f_resolved: np.ndarray  # (n_levels, cells)
    g_resolved: np.ndarray
    f_limit: np.ndarray     # (cells,)
    g_limit: np.ndarray
    tolerance: float
    violations: np.ndarray  # (cells,) bool

    @property
    def total_f(self):
        return float(np.sum(self.f_limit))

    @property
    def total_g(self):
        return float(np.sum(self.g_limit))


def _inverse_trend(x1, t1, x2, t2):
    """Limit of t(x) = t_inf + c / x from its last two samples."""
    return (x2 * t2 - x1 * t1) / (x2 - x1)


def defect_estimate(fields, f, g, levels, partition: PartitionSpec,
                    tolerance=1e-8) -> DefectEstimate:
    """Concentration-defect estimate of a resolution-indexed family.

    For each truncation level M the integral of F(U_n) - F(T_M U_n) over
    each cell measures the mass of F carried above level M; the resolution
    limit is taken first (last-two-points trend in 1/n), then the level
    limit (trend in 1/M). G must dominate |F| pointwise on the samples,
    which is what makes |F_inf| <= G_inf a meaningful check.
    """
    fields = sorted(fields, key=lambda fld: fld.resolution)
    if not fields:
        raise ValueError("no sample fields given")
    resolutions = tuple(int(fld.resolution) for fld in fields)
    if any(a >= b for a, b in zip(resolutions, resolutions[1:])):
        raise ValueError("resolutions must be distinct")
    levels = tuple(float(v) for v in levels)
    if not levels or any(v <= 0 for v in levels):
        raise ValueError("truncation levels must be positive")
    if any(a >= b for a, b in zip(levels, levels[1:])):
        raise ValueError("truncation levels must be strictly increasing")

    n_res, n_lev = len(fields), len(levels)
    cells = partition.cell_count
    f_tails = np.zeros((n_res, n_lev, cells))
    g_tails = np.zeros((n_res, n_lev, cells))
    for i, fld in enumerate(fields):
        n = fld.positions.shape[0]
        fv = np.asarray(f(fld.values), dtype=float)
        gv = np.asarray(g(fld.values), dtype=float)
        if fv.shape != (n,) or gv.shape != (n,):
            raise ValueError("F and G must return one value per sample")
        bad = np.abs(fv) > gv + 1e-12 * np.maximum(1.0, np.abs(gv))
        if np.any(bad):
            raise DominationViolated(
                f"|F| exceeds G at {int(np.sum(bad))} samples "
                f"of resolution {fld.resolution}"
            )
        ids = cell_index(partition, np.zeros(n), fld.positions)
        for j, level in enumerate(levels):
            clipped = _truncate(fld.values, level)
            np.add.at(f_tails[i, j], ids,
                      fld.quad_weights * (fv - np.asarray(f(clipped), float)))
            np.add.at(g_tails[i, j], ids,
                      fld.quad_weights * (gv - np.asarray(g(clipped), float)))

    if n_res == 1:
        f_resolved, g_resolved = f_tails[0], g_tails[0]
    else:
        f_resolved = _inverse_trend(resolutions[-2], f_tails[-2],
                                    resolutions[-1], f_tails[-1])
        g_resolved = _inverse_trend(resolutions[-2], g_tails[-2],
                                    resolutions[-1], g_tails[-1])
    if n_lev == 1:
        f_limit, g_limit = f_resolved[0], g_resolved[0]
    else:
        f_limit = _inverse_trend(levels[-2], f_resolved[-2],
                                 levels[-1], f_resolved[-1])
        g_limit = _inverse_trend(levels[-2], g_resolved[-2],
                                 levels[-1], g_resolved[-1])
    # Tails of the dominating G are nonnegative by construction, so any
    # negative extrapolant is a trend artifact and is floored.
    g_limit = np.maximum(g_limit, 0.0)
    violations = np.abs(f_limit) > g_limit + tolerance
    return DefectEstimate(
        resolutions=resolutions, levels=levels, cell_count=cells,
        f_tails=f_tails, g_tails=g_tails,
        f_resolved=np.asarray(f_resolved), g_resolved=np.asarray(g_resolved),
        f_limit=np.asarray(f_limit), g_limit=np.asarray(g_limit),
        tolerance=float(tolerance), violations=violations,
    )


def defect_summary(estimate: DefectEstimate):
    """JSON-ready digest of a defect estimate."""
    return {
        "resolutions": list(estimate.resolutions),
        "levels": list(estimate.levels),
        "cell_count": estimate.cell_count,
        "total_f": estimate.total_f,
        "total_g": estimate.total_g,
        "f_limit": [float(v) for v in estimate.f_limit],
        "g_limit": [float(v) for v in estimate.g_limit],
        "violating_cells": int(np.sum(estimate.violations)),
        "tolerance": estimate.tolerance,
    }


def equi_integrability_check(fields, candidates,
                             levels=(1.0, 2.0, 4.0, 8.0, 16.0),
                             growth_threshold=0.25, tail_tol=1e-8):
    """Superlinear-moment and uniform-tail tests of a sample family.

    For each candidate N-function g the report lists the integrals of
    g(|U_n|) across the family, their supremum, and a bounded/diverging
    verdict from the growth exponent of a log-log fit. The direct tail
    criterion integrates the excess of |U_n| above each level M and asks
    whether its supremum over n vanishes at the largest level.
    """
    fields = sorted(fields, key=lambda fld: fld.resolution)
    if not fields:
        raise ValueError("no sample fields given")
    resolutions = [float(fld.resolution) for fld in fields]
    norms = [_sample_norms(fld.values) for fld in fields]

    out = {}
    for name, gfun in candidates.items():
        ints = [
            float(np.sum(fld.quad_weights * np.asarray(gfun(nv), float)))
            for fld, nv in zip(fields, norms)
        ]
        if len(ints) >= 2 and all(v > 1e-300 for v in ints):
            exponent = float(
                np.polyfit(np.log(resolutions), np.log(ints), 1)[0]
            )
        else:
            exponent = 0.0
        out[name] = {
            "integrals": ints,
            "sup": max(ints),
            "growth_exponent": exponent,
            "verdict": "diverging" if exponent > growth_threshold else "bounded",
        }

    levels = tuple(float(v) for v in levels)
    tail_sup = []
    for level in levels:
        tails = [
            float(np.sum(fld.quad_weights * np.maximum(nv - level, 0.0)))
            for fld, nv in zip(fields, norms)
        ]
        tail_sup.append(max(tails))
    vanishes = tail_sup[-1] <= tail_tol * max(1.0, tail_sup[0])
    return {
        "resolutions": [int(v) for v in resolutions],
        "candidates": out,
        "tail_levels": list(levels),
        "tail_sup": tail_sup,
        "tail_vanishes": vanishes,
        "equi_integrable": vanishes and all(
            entry["verdict"] == "bounded" for entry in out.values()
        ),
    }


@dataclass(eq=False)
class LadderRun:
    """One member of a resolution ladder sharing the evaluation grid."""

    modes: int
    basis: object
    model: object
    snapshots: list   # (t, rho, c) checkpoint records


def _checkpoint_fields(run: LadderRun, k):
    t, rho, c = run.snapshots[k]
    u = spectral.synthesize(run.basis, np.asarray(c, dtype=float))
    if run.basis.dim == 1:
        u = u.reshape((1,) + run.basis.grid_shape)
    return np.asarray(rho, dtype=float), u


def energy_defect_ladder(runs, rtol=1e-2, atol=1e-10):
    """Energy, convection and pressure gaps between resolution neighbours.

    For each consecutive pair and checkpoint the energy defect is the
    signed difference of total energies coarse minus fine; the convection
    and pressure surrogates are the total variations of the gaps in
    rho u (x) u and p(rho) on the shared grid. Domination asks that their
    sum not exceed the energy defect beyond atol + rtol times the energy
    scale. The decay series takes the largest absolute energy defect per
    pair; it should shrink as the fine resolution grows.
    """
    runs = list(runs)
    if len(runs) < 2:
        raise LadderMismatch("a ladder needs at least two runs")
    base = runs[0]
    base_lengths = tuple(a.length for a in base.basis.axes)
    for prev, cur in zip(runs, runs[1:]):
        if cur.modes < prev.modes:
            raise LadderMismatch("ladder resolutions must be non-decreasing")
    for run in runs:
        if run.basis.dim != base.basis.dim:
            raise LadderMismatch("ladder runs disagree on dimension")
        if run.basis.grid_shape != base.basis.grid_shape:
            raise LadderMismatch("ladder runs must share the evaluation grid")
        if tuple(a.length for a in run.basis.axes) != base_lengths:
            raise LadderMismatch("ladder runs disagree on the box")
        if run.basis.family != base.basis.family:
            raise LadderMismatch("ladder runs disagree on the basis family")
        if run.model != base.model:
            raise LadderMismatch("ladder runs disagree on the model")
        if len(run.snapshots) != len(base.snapshots):
            raise LadderMismatch("ladder runs disagree on checkpoint count")
        for (ta, _, _), (tb, _, _) in zip(run.snapshots, base.snapshots):
            if abs(ta - tb) > 1e-12 * max(1.0, abs(tb)):
                raise LadderMismatch("ladder runs disagree on checkpoint times")
    if not base.snapshots:
        raise LadderMismatch("ladder runs carry no checkpoints")

    model = base.model
    times = [float(t) for t, _, _ in base.snapshots]
    pairs = []
    for coarse, fine in zip(runs, runs[1:]):
        defects, thetas, lambdas, dominated = [], [], [], []
        for k in range(len(times)):
            rho_c, u_c = _checkpoint_fields(coarse, k)
            rho_f, u_f = _checkpoint_fields(fine, k)
            e_c = (0.5 * rho_c * np.einsum("i...,i...->...", u_c, u_c)
                   + constitutive.pressure_potential(model, rho_c))
            e_f = (0.5 * rho_f * np.einsum("i...,i...->...", u_f, u_f)
                   + constitutive.pressure_potential(model, rho_f))
            total_c = float(spectral.integrate(fine.basis, e_c))
            total_f = float(spectral.integrate(fine.basis, e_f))
            gap = (rho_c * np.einsum("i...,j...->ij...", u_c, u_c)
                   - rho_f * np.einsum("i...,j...->ij...", u_f, u_f))
            theta = float(spectral.integrate(
                fine.basis, np.sqrt(np.einsum("ij...,ij...->...", gap, gap))
            ))
            lam = float(spectral.integrate(
                fine.basis,
                np.abs(constitutive.pressure_value(model, rho_c)
                       - constitutive.pressure_value(model, rho_f)),
            ))
            tol = atol + rtol * max(abs(total_c), abs(total_f))
            defects.append(total_c - total_f)
            thetas.append(theta)
            lambdas.append(lam)
            dominated.append(bool(theta + lam <= (total_c - total_f) + tol))
        pairs.append({
            "coarse": int(coarse.modes),
            "fine": int(fine.modes),
            "energy_defect": defects,
            "theta_tv": thetas,
            "lambda_tv": lambdas,
            "dominated": dominated,
            "max_abs_defect": max(abs(v) for v in defects),
        })
    decay = [p["max_abs_defect"] for p in pairs]
    return {
        "checkpoints": times,
        "pairs": pairs,
        "defect_decay": decay,
        "monotone_decay": all(
            b <= a + atol for a, b in zip(decay, decay[1:])
        ),
        "dominated_everywhere": all(
            all(p["dominated"]) for p in pairs
        ),
    }


def write_measure(measure: EmpiricalYoungMeasure, stem):
    """Serialize a measure to stem.csv (samples) and stem.json (partition)."""
    dim = measure.positions.shape[1]
    width = measure.state_dim
    header = (["cell", "weight", "path", "time"]
              + [f"x{i}" for i in range(dim)]
              + [f"z{i}" for i in range(width)])
    table = np.column_stack([
        measure.cells, measure.weights, measure.paths, measure.times,
        measure.positions, measure.states,
    ])
    np.savetxt(f"{stem}.csv", table, delimiter=",",
               header=",".join(header), comments="", fmt="%.17g")
    meta = {
        "t_final": measure.partition.t_final,
        "lengths": list(measure.partition.lengths),
        "time_bins": measure.partition.time_bins,
        "space_bins": list(measure.partition.space_bins),
        "dim": dim,
        "state_dim": width,
        "samples": int(measure.n_samples),
    }
    with open(f"{stem}.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_measure(stem) -> EmpiricalYoungMeasure:
    """Read back a measure written by write_measure, bit-exact."""
    with open(f"{stem}.json") as fh:
        meta = json.load(fh)
    partition = PartitionSpec(
        t_final=meta["t_final"], lengths=tuple(meta["lengths"]),
        time_bins=meta["time_bins"], space_bins=tuple(meta["space_bins"]),
    )
    table = np.loadtxt(f"{stem}.csv", delimiter=",", skiprows=1, ndmin=2)
    dim, width = meta["dim"], meta["state_dim"]
    return EmpiricalYoungMeasure(
        partition=partition,
        states=table[:, 4 + dim:4 + dim + width],
        weights=table[:, 1],
        cells=table[:, 0].astype(int),
        paths=table[:, 2].astype(int),
        times=table[:, 3],
        positions=table[:, 4:4 + dim],
    )
