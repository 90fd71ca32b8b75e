"""Command-line front end.

Subcommands::

    isac run --config FILE --out DIR [--seed N] [--trials N] [--frames N]
             [--estimators LIST]
    isac sweep --config FILE --sweep FILE --out DIR
    isac spectrum --config FILE --estimator tms|tms-approx|cms|cms-approx
             --out FILE [--seed N] [--frames N]
    isac beampattern --config FILE --rates LIST --out FILE [--points N]

``run`` writes ``trials.csv`` (one row per estimator and target per trial),
``sweep`` writes ``sweep.csv`` (the RMSE table), ``spectrum`` writes a
long-form (theta_deg, sigma_theta_deg, value) CSV and ``beampattern`` a
(rate_bps_hz, theta_deg, power) CSV with one block per requested rate floor.
Beampatterns are synthesized from the configured target parameters.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .angle_est import AngleEstimate, sample_covariance
from .beamform import beampattern, radar_objective, solve_beamformer
from .harness import (
    ESTIMATORS,
    canonical_estimator,
    compute_spectrum,
    emit_beampattern,
    emit_rmse_table,
    emit_spectrum,
    emit_trials,
    isotropic_beamformer,
    load_run,
    load_sweep,
    run_sweep,
    run_trial,
)
from .scene import simulate_frame


def _add_config(parser):
    parser.add_argument("--config", required=True, help="scenario file")


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="isac",
        description="Sensing-and-communication simulation and estimation runs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Monte Carlo trials of the full pipeline")
    _add_config(p_run)
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override base seed")
    p_run.add_argument("--trials", type=int, default=1)
    p_run.add_argument("--frames", type=int, default=1, help="frames per trial")
    p_run.add_argument(
        "--estimators",
        default="tms_approx",
        help="comma-separated subset of " + ",".join(ESTIMATORS),
    )

    p_sweep = sub.add_parser("sweep", help="RMSE sweep over one parameter")
    _add_config(p_sweep)
    p_sweep.add_argument("--sweep", required=True, help="sweep file")
    p_sweep.add_argument("--out", required=True, help="output directory")

    p_spec = sub.add_parser("spectrum", help="pseudo-spectrum of one estimator")
    _add_config(p_spec)
    p_spec.add_argument(
        "--estimator",
        required=True,
        choices=[e.replace("_", "-") for e in ESTIMATORS] + list(ESTIMATORS),
    )
    p_spec.add_argument("--out", required=True, help="output CSV file")
    p_spec.add_argument("--seed", type=int, default=None)
    p_spec.add_argument("--frames", type=int, default=1)

    p_beam = sub.add_parser("beampattern", help="transmit pattern vs rate floor")
    _add_config(p_beam)
    p_beam.add_argument(
        "--rates", required=True, help="comma-separated rate floors in bps/Hz"
    )
    p_beam.add_argument("--out", required=True, help="output CSV file")
    p_beam.add_argument("--points", type=int, default=721, help="grid points over angle")

    return parser.parse_args(argv)


def _cmd_run(args) -> int:
    setup = load_run(args.config)
    cfg = setup.scenario
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, rng_seed=args.seed)
    estimators = [canonical_estimator(e) for e in args.estimators.split(",")]
    results = [
        run_trial(cfg, estimators, cfg.rng_seed + t, grid=setup.grid, n_frames=args.frames)
        for t in range(args.trials)
    ]
    out_dir = Path(args.out)
    emit_trials(results, cfg, out_dir / "trials.csv")
    print(f"wrote {out_dir / 'trials.csv'} ({args.trials} trials)")
    return 0


def _cmd_sweep(args) -> int:
    setup = load_run(args.config)
    spec = load_sweep(args.sweep)
    table = run_sweep(setup.scenario, spec, grid=setup.grid)
    out_dir = Path(args.out)
    emit_rmse_table(table, out_dir / "sweep.csv")
    print(f"wrote {out_dir / 'sweep.csv'} ({len(table.rows)} rows)")
    return 0


def _cmd_spectrum(args) -> int:
    setup = load_run(args.config)
    cfg = setup.scenario
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, rng_seed=args.seed)
    v0 = isotropic_beamformer(cfg)
    rng = np.random.default_rng(cfg.rng_seed)
    frames = [simulate_frame(cfg, v0, rng) for _ in range(args.frames)]
    r_hat = sample_covariance(frames)
    spectrum = compute_spectrum(args.estimator, r_hat, cfg, v0, setup.grid)
    emit_spectrum(spectrum, args.out)
    theta, sigma = spectrum.argmax()
    print(
        f"wrote {args.out}; peak at theta={np.degrees(theta):.2f} deg, "
        f"sigma={np.degrees(sigma):.2f} deg"
    )
    return 0


def _cmd_beampattern(args) -> int:
    setup = load_run(args.config)
    cfg = setup.scenario
    rates = [float(r) for r in args.rates.split(",") if r.strip()]
    if not rates:
        raise ValueError("--rates must contain at least one value")
    estimates = AngleEstimate(
        theta_rad=np.array([t.mean_angle_rad for t in cfg.targets]),
        sigma_theta_rad=np.array([t.angle_spread_rad for t in cfg.targets]),
    )
    objective = radar_objective(estimates, cfg.array.n_tx)
    theta_grid = np.deg2rad(np.linspace(-90.0, 90.0, args.points))
    blocks = []
    for rate in rates:
        users = tuple(
            dataclasses.replace(u, rate_threshold_bps_hz=rate) for u in cfg.users
        )
        sol = solve_beamformer(
            objective, users, cfg.tx_power, noise_var=cfg.rx_noise_var
        )
        if sol.v is None:
            print(f"rate {rate}: solver status {sol.solver_status}", file=sys.stderr)
            continue
        blocks.append((rate, beampattern(sol.v, theta_grid)))
    if not blocks:
        print("no feasible rate produced a pattern", file=sys.stderr)
        return 1
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("rate_bps_hz,theta_deg,power\n")
        for rate, power in blocks:
            for t, p in zip(theta_grid, power):
                fh.write(
                    f"{format(rate, '.17g')},{format(np.degrees(t), '.17g')},"
                    f"{format(p, '.17g')}\n"
                )
    print(f"wrote {path} ({len(blocks)} rate floor(s))")
    return 0


def main(argv=None) -> int:
    args = _parse_args(argv if argv is not None else sys.argv[1:])
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "spectrum": _cmd_spectrum,
        "beampattern": _cmd_beampattern,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
