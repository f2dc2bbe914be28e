"""Command line interface.

Exit codes: 0 success, 1 verification failure, 2 input error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from contextlib import contextmanager

from . import bounds, dynamics, harness, linalg, metric
from .bounds import BoundReport, QuadratureConfig
from .errors import QSLError

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


# -- shared flags -------------------------------------------------------------------

def _add_quadrature_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("quadrature and numerical tolerances")
    g.add_argument("--quad-rule", choices=["gauss", "midpoint", "trapezoid"], default="gauss")
    g.add_argument("--tol-quad", type=float, default=QuadratureConfig.rel_tol,
                   help="relative convergence tolerance of the speed integral")
    g.add_argument("--max-levels", type=int, default=QuadratureConfig.max_levels)
    g.add_argument("--quad-order", type=int, default=QuadratureConfig.order)
    g.add_argument("--tol-singular", type=float, default=metric.EPS_SING,
                   help="f - P below this is treated as the frozen latitude")
    g.add_argument("--tol-radicand", type=float, default=metric.RADICAND_TOL)


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", help="write to this file instead of stdout")


def _quad(args) -> QuadratureConfig:
    metric.EPS_SING = args.tol_singular
    metric.RADICAND_TOL = args.tol_radicand
    return QuadratureConfig(rule=args.quad_rule, rel_tol=args.tol_quad,
                            max_levels=args.max_levels, order=args.quad_order)


@contextmanager
def _sink(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def report_text(rep: BoundReport, fmt: str) -> str:
    if fmt == "json":
        return json.dumps({k: harness._jsonable(v) for k, v in rep.to_dict().items()}, indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BoundReport.columns())
    w.writerow(rep.csv_row())
    return buf.getvalue()


# -- subcommands ----------------------------------------------------------------------

def cmd_experiment(args) -> int:
    cfg = harness.ExperimentConfig(
        samples=args.samples, seed=args.seed, tau=args.tau, grid_m=args.grid,
        hamiltonian_scale=args.scale, output_path=args.out, format=args.format,
        fixed_environment=args.fixed_environment, state_rank=args.rank,
        workers=args.workers, quadrature=_quad(args),
    )
    records, summary = harness.run_random_experiment(cfg)
    text = harness.records_csv(records) if cfg.format == "csv" else harness.records_json(records, summary)
    with _sink(cfg.output_path) as fh:
        fh.write(text)
    fr = summary.fractions
    print(
        f"fractions F1={fr['F1']:.3f} F2={fr['F2']:.3f} F3={fr['F3']:.3f}  "
        f"tauCombined/tau mean={summary.ratio_mean:.4f} min={summary.ratio_min:.4f} max={summary.ratio_max:.4f}",
        file=sys.stderr,
    )
    return EXIT_OK


def _emit_verification(rep: harness.VerificationReport, args) -> int:
    if args.format == "json":
        text = json.dumps(rep.to_dict(), indent=1) + "\n"
    else:
        text = "\n".join(rep.lines()) + "\n"
    with _sink(args.out) as fh:
        fh.write(text)
    if not rep.passed:
        print(f"verification failed (seed={args.seed})", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_verify_metric(args) -> int:
    tol = harness.MetricTolerances(
        triangle=args.tol_triangle, symmetry=args.tol_symmetry, identity=args.tol_identity,
        unitary=args.tol_unitary, norm=args.tol_norm, latitude=args.tol_latitude,
        range=args.tol_range, fd_ratio=args.tol_fd_ratio,
    )
    rep = harness.verify_metric(seed=args.seed, trials=args.trials, tol=tol, fd_probes=args.fd_probes)
    return _emit_verification(rep, args)


def cmd_verify_attainability(args) -> int:
    tol = harness.AttainabilityTolerances(
        saturation_low=args.tol_saturation_low, saturation_high=args.tol_saturation_high,
        closed_form=args.tol_closed_form, unitary=args.tol_unitary,
        unitary_f3=args.tol_unitary_f3, generic_gap=args.tol_generic_gap,
    )
    rep = harness.verify_attainability(seed=args.seed, tol=tol, cfg=_quad(args))
    return _emit_verification(rep, args)


def cmd_bounds(args) -> int:
    with open(args.trajectory) as fh:
        traj = dynamics.read_trajectory(fh)
    rep = bounds.evaluate_bounds(traj, _quad(args), args.alpha2)
    with _sink(args.out) as fh:
        fh.write(report_text(rep, args.format))
    return EXIT_OK


def _read_state(path, role="state"):
    with open(path) as fh:
        return linalg.parse_matrix(fh, role=role)


def _schedule(name: str, tau: float, start: float, end: float) -> dynamics.Schedule:
    return dynamics.Schedule.linear(tau, start, end) if name == "linear" else dynamics.Schedule.cosine(tau, start, end)


def build_trajectory(args) -> dynamics.Trajectory:
    rng = linalg.RngStream(args.seed, 0).generator()

    def state(path, dim):
        return _read_state(path) if path else linalg.random_density(dim, rng)

    if args.generator == "depolarize":
        rho0 = state(args.state, args.dim)
        return dynamics.depolarize(rho0, _schedule(args.schedule, args.tau, 1.0, args.p_end), args.tau, args.grid)
    if args.generator == "geodesic":
        rho0 = state(args.state, args.dim)
        return dynamics.geodesic(rho0, _schedule(args.schedule, args.tau, 0.0, args.beta_end), args.tau, args.grid)
    if args.generator == "qubit-unitary":
        return dynamics.qubit_mixture_unitary(args.lam, args.phi, args.tau, args.grid)
    rho_s = state(args.state, 2)
    rho_e = state(args.env, 2)
    h = _read_state(args.hamiltonian, "hamiltonian") if args.hamiltonian else \
        linalg.random_diag_hamiltonian(4, rng, args.scale)
    return dynamics.composite_unitary(rho_s, rho_e, h, args.tau, args.grid)


def cmd_generate(args) -> int:
    traj = build_trajectory(args)
    if args.dump_trajectory:
        with open(args.dump_trajectory, "w") as fh:
            dynamics.write_trajectory(traj, fh)
    rep = bounds.evaluate_bounds(traj, _quad(args), args.alpha2)
    with _sink(args.out) as fh:
        fh.write(report_text(rep, args.format))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="geoqsl", description="Geometric quantum speed limit bounds.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("experiment", help="random composite-qubit experiment, one CSV/JSON row per trial")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=dynamics.DEFAULT_GRID)
    p.add_argument("--scale", type=float, default=2 * math.pi, help="Hamiltonian entries are uniform on [0, scale]")
    p.add_argument("--fixed-environment", action="store_true", help="share one environment state across trials")
    p.add_argument("--rank", type=int, default=None,
                   help="ancilla dimension of the random state measure (1 = pure states; default = Hilbert-Schmidt)")
    p.add_argument("--workers", type=int, default=1)
    _add_output_flags(p)
    _add_quadrature_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify-metric", help="distance axioms and embedding identities on random states")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--fd-probes", type=int, default=20)
    d = harness.MetricTolerances()
    for name in ("triangle", "symmetry", "identity", "unitary", "norm", "latitude", "range"):
        p.add_argument(f"--tol-{name}", type=float, default=getattr(d, name))
    p.add_argument("--tol-fd-ratio", type=float, default=d.fd_ratio,
                   help="minimum residual shrink factor when h halves")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify_metric)

    p = sub.add_parser("verify-attainability", help="saturation checks for the optimal dynamics")
    p.add_argument("--seed", type=int, default=0)
    d = harness.AttainabilityTolerances()
    for name in ("saturation_low", "saturation_high", "closed_form", "unitary", "unitary_f3", "generic_gap"):
        p.add_argument("--tol-" + name.replace("_", "-"), type=float, default=getattr(d, name))
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--out")
    _add_quadrature_flags(p)
    p.set_defaults(func=cmd_verify_attainability)

    p = sub.add_parser("bounds", help="evaluate every bound on a trajectory file")
    p.add_argument("trajectory")
    p.add_argument("--alpha2", type=float, default=None)
    _add_output_flags(p)
    _add_quadrature_flags(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("generate", help="build a trajectory from a generator and evaluate its bounds")
    p.add_argument("generator", choices=["depolarize", "geodesic", "qubit-unitary", "composite"])
    p.add_argument("--seed", type=int, default=0, help="seed for states not read from files")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=dynamics.DEFAULT_GRID)
    p.add_argument("--dim", type=int, default=2, help="dimension of a random initial state")
    p.add_argument("--state", help="initial (system) state in matrix text format")
    p.add_argument("--env", help="environment state for 'composite'")
    p.add_argument("--hamiltonian", help="4x4 Hamiltonian for 'composite'")
    p.add_argument("--scale", type=float, default=2 * math.pi)
    p.add_argument("--schedule", choices=["linear", "cosine"], default="linear")
    p.add_argument("--p-end", type=float, default=0.0, help="final depolarizing weight")
    p.add_argument("--beta-end", type=float, default=-0.5, help="final geodesic parameter")
    p.add_argument("--lam", type=float, default=0.8)
    p.add_argument("--phi", type=float, default=0.0)
    p.add_argument("--alpha2", type=float, default=None)
    p.add_argument("--dump-trajectory", help="also write the sampled trajectory to this file")
    _add_output_flags(p)
    _add_quadrature_flags(p)
    p.set_defaults(func=cmd_generate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except QSLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ArithmeticError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
