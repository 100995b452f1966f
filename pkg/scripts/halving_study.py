"""Time-step halving study for the discrete energy identity.

Runs the same noise-free path at dt, dt/2, dt/4, ... and tabulates the
final cumulative energy residual per level. A first-order scheme should
show residual ratios near 2 between consecutive levels.
"""

import argparse
import sys

from sgns import config, diagnostics, noise, solver


def run_level(conf, dt):
    conf = config.with_overrides(conf, **{"solver.dt": dt, "noise.count": 0})
    parts = config.build_components(conf)
    res = solver.solve_path(parts.basis, parts.model, parts.forcing,
                            parts.params, parts.law, conf.solver.t_final,
                            seed=conf.ensemble.base_seed, path=0)
    _, info = diagnostics.ledger_residual(res.ledger, res.columns)
    return info


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="base config file (defaults otherwise)")
    ap.add_argument("--family", default="newtonian",
                    choices=("newtonian", "power"))
    ap.add_argument("--p", type=float, default=3.0,
                    help="power-law exponent when --family power")
    ap.add_argument("--dt0", type=float, default=1e-3,
                    help="coarsest time step")
    ap.add_argument("--levels", type=int, default=3,
                    help="number of halvings, including dt0")
    ap.add_argument("--t-final", type=float, default=0.5)
    args = ap.parse_args(argv)

    conf = config.load_config(args.config) if args.config else config.RunConfig()
    overrides = {"model.family": args.family,
                 "solver.t_final": args.t_final}
    if args.family == "power":
        overrides["model.p"] = args.p
    conf = config.with_overrides(conf, **overrides)

    print(f"family {args.family}"
          + (f" p={args.p}" if args.family == "power" else "")
          + f", T={args.t_final}, domain {conf.domain.dim}d "
          f"modes {conf.domain.modes}")
    print(f"{'dt':>10}  {'final residual':>15}  {'max |cum|':>12}  {'ratio':>6}")
    previous = None
    for level in range(args.levels):
        dt = args.dt0 / 2 ** level
        info = run_level(conf, dt)
        ratio = "" if previous is None else f"{previous / info['final']:.3f}"
        print(f"{dt:10.2e}  {info['final']:15.6e}  "
              f"{info['max_abs_cumulative']:12.4e}  {ratio:>6}")
        previous = info["final"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
