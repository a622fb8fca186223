"""Command-line surface: JSON channel configs in, JSON/CSV reports out.

Exit codes: 0 success, 1 validation/usage error, 2 solver non-convergence,
3 verification failure. Reports are byte-identical for identical config
and seed; wall-clock timing therefore goes to stderr, never into the
report files.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import sys
import time

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .channel import (
    BCChannel,
    ChannelFormatError,
    MACChannel,
    channel_to_dict,
    load_channel,
    validate,
)
from .duality import TransformError, bc_to_mac, mac_to_bc
from .pareto import (
    frontier_sweep,
    pareto_solve,
    sweep_to_csv,
    weight_map_gamma_to_r,
    weight_map_r_to_gamma,
)
from .penalty import PenaltyConfig, run_penalty_game, trajectory_to_csv
from .rates import BroadcastGame, CovarianceProfile, MultipleAccessGame
from .solver import ConvergenceError, SolveOptions, certify, solve_noe
from .uniqueness import sample_dsc, trace_inequality, trace_inequality_tight2

USAGE_ERROR, NONCONVERGENCE, VERIFICATION_FAILURE = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on bad flags; the contract is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(USAGE_ERROR)


def _csv_floats(text):
    return [float(v) for v in text.split(",") if v != ""]


def _csv_ints(text):
    return [int(v) for v in text.split(",") if v != ""]


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _digest(doc) -> str:
    canonical = json.dumps(_jsonable(doc), sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canonical.encode()).hexdigest()


def _emit(text: str, out_path) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_report(command, digest, seed, outputs, out_path) -> None:
    report = {
        "command": command,
        "config_digest": digest,
        "seed": seed,
        "outputs": _jsonable(outputs),
    }
    _emit(json.dumps(report, sort_keys=True, indent=2) + "\n", out_path)


def _load_game(args):
    channel = load_channel(args.config)
    report = validate(channel)
    if not report.ok:
        raise ChannelFormatError(str(report))
    order = _csv_ints(args.order) if args.order else None
    if isinstance(channel, BCChannel):
        return BroadcastGame(channel, order)
    return MultipleAccessGame(channel, order)


def _load_profile(path) -> CovarianceProfile:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "matrices" not in doc:
        raise ChannelFormatError('profile file must be {"matrices": [...]}')
    return CovarianceProfile([np.array(m, dtype=np.float64) for m in doc["matrices"]])


def _opts(args) -> SolveOptions:
    kwargs = {}
    if getattr(args, "tol", None) is not None:
        kwargs["tol"] = args.tol
    if getattr(args, "max_iter", None) is not None:
        kwargs["max_iterations"] = args.max_iter
    if getattr(args, "damping", None) is not None:
        kwargs["damping"] = args.damping
    if getattr(args, "seed", None) is not None:
        kwargs["seed"] = args.seed
    return SolveOptions(**kwargs)


def _certificate_dict(cert) -> dict:
    return {
        "shadow_price": cert.shadow_price,
        "stationarity_residuals": cert.stationarity_residuals,
        "multiplier_min_eigs": cert.multiplier_min_eigs,
        "complementary_slackness": cert.complementary_slackness,
        "power_residual": cert.power_residual,
        "best_response_gaps": cert.best_response_gaps,
        "fixed_point_residual": cert.fixed_point_residual,
        "max_residual": cert.max_residual,
    }


def _cmd_validate(args):
    channel = load_channel(args.config)
    report = validate(channel)
    digest = _digest(channel_to_dict(channel))
    _emit_report(
        "validate", digest, args.seed,
        {"valid": report.ok, "violations": report.violations},
        args.out,
    )
    return 0 if report.ok else USAGE_ERROR


def _cmd_solve_noe(args):
    game = _load_game(args)
    weights = _csv_floats(args.weights)
    profile, cert = solve_noe(game, weights, _opts(args))
    outputs = {
        "weights": weights,
        "order": list(game.order),
        "profile": [m for m in profile.matrices],
        "rates": game.rates(profile).values,
        "certificate": _certificate_dict(cert),
    }
    _emit_report("solve-noe", _digest(channel_to_dict(game.channel)), args.seed, outputs, args.out)
    return 0


def _cmd_certify(args):
    game = _load_game(args)
    weights = _csv_floats(args.weights)
    profile = _load_profile(args.profile)
    cert = certify(game, profile, weights, _opts(args))
    tol = args.tol if args.tol is not None else 1e-6
    outputs = {
        "weights": weights,
        "order": list(game.order),
        "certificate": _certificate_dict(cert),
        "tolerance": tol,
        "certified": cert.ok(tol),
    }
    _emit_report("certify", _digest(channel_to_dict(game.channel)), args.seed, outputs, args.out)
    return 0 if cert.ok(tol) else VERIFICATION_FAILURE


def _cmd_pareto_sweep(args):
    game = _load_game(args)
    gammas = [_csv_floats(args.gamma)] if args.gamma else None
    sweep = frontier_sweep(
        game, gammas=gammas, grid=args.gamma_grid, opts=_opts(args), jobs=args.jobs
    )
    if args.format == "csv":
        buf = io.StringIO()
        sweep_to_csv(sweep, buf)
        _emit(buf.getvalue(), args.out)
    else:
        rows = []
        for row in sweep.rows:
            if row.error is not None:
                rows.append({"gamma": row.gamma, "error": row.error})
            else:
                rows.append(
                    {
                        "gamma": row.gamma,
                        "rates": row.rates.values,
                        "weights_r": row.weights_r,
                        "eta": row.eta,
                        "active_mask": row.active_mask,
                        "profile": list(row.profile.matrices),
                    }
                )
        _emit_report(
            "pareto-sweep", _digest(channel_to_dict(game.channel)), args.seed,
            {"rows": rows, "num_failed": sweep.num_failed}, args.out,
        )
    if sweep.num_failed:
        sys.stderr.write(f"{sweep.num_failed} sweep point(s) failed\n")
    return 0


def _cmd_map_weights(args):
    game = _load_game(args)
    if bool(args.gamma) == bool(args.weights):
        raise ChannelFormatError("map-weights needs exactly one of --gamma or --weights")
    opts = _opts(args)
    if args.gamma:
        gamma = _csv_floats(args.gamma)
        profile, rate_tuple = pareto_solve(game, gamma, opts)
        result = weight_map_gamma_to_r(game, gamma, profile)
    else:
        weights = _csv_floats(args.weights)
        profile, _ = solve_noe(game, weights, opts)
        rate_tuple = game.rates(profile)
        result = weight_map_r_to_gamma(game, weights, profile)
    outputs = {
        "direction": result.direction,
        "status": result.status,
        "weights_r": result.weights_r,
        "weights_gamma": result.weights_gamma,
        "eta": result.eta,
        "a_matrix": result.a_matrix,
        "b_vector": result.b_vector,
        "active_mask": result.active_mask,
        "profile": list(profile.matrices),
        "rates": rate_tuple.values,
    }
    _emit_report("map-weights", _digest(channel_to_dict(game.channel)), args.seed, outputs, args.out)
    return 0


def _cmd_dual_transform(args):
    game = _load_game(args)
    profile = _load_profile(args.profile)
    if isinstance(game.channel, MACChannel):
        dual, transformed, report = mac_to_bc(game.channel, profile, game.order)
    else:
        dual, transformed, report = bc_to_mac(game.channel, profile, game.order)
    outputs = {
        "dual_channel": channel_to_dict(dual),
        "source_order": list(report.source_order),
        "target_order": list(report.target_order),
        "profile": list(transformed.matrices),
        "source_rates": report.source_rates,
        "target_rates": report.target_rates,
        "max_rate_delta": report.max_rate_delta,
        "power_delta": report.power_delta,
        "psd_residuals": report.psd_residuals,
    }
    _emit_report(
        "dual-transform", _digest(channel_to_dict(game.channel)), args.seed, outputs, args.out
    )
    return 0


def _cmd_check_dsc(args):
    game = _load_game(args)
    weights = _csv_floats(args.weights)
    report = sample_dsc(game, weights, num_samples=args.samples, seed=args.seed)
    outputs = {
        "weights": weights,
        "order": list(game.order),
        "num_samples": report.num_samples,
        "min_gap": report.min_gap,
        "verdict": report.verdict,
        "conclusion": report.uniqueness_conclusion,
    }
    _emit_report("check-dsc", _digest(channel_to_dict(game.channel)), args.seed, outputs, args.out)
    return 0 if report.verdict == "no-violation" else VERIFICATION_FAILURE


def _cmd_trace_ineq(args):
    rng = np.random.default_rng(args.seed)
    tol = args.tol if args.tol is not None else 1e-10

    def wishart(dim, definite=False):
        g = rng.normal(size=(dim, dim))
        m = g @ g.T
        return m + 1e-6 * np.eye(dim) if definite else m

    min_chain = np.inf
    min_pair = np.inf
    for _ in range(args.samples):
        a_mats = [wishart(args.dim, definite=True)] + [
            wishart(args.dim) for _ in range(args.users - 1)
        ]
        b_mats = [wishart(args.dim, definite=True)] + [
            wishart(args.dim) for _ in range(args.users - 1)
        ]
        min_chain = min(min_chain, trace_inequality(a_mats, b_mats))
        w = rng.uniform(0.1, 10.0)
        min_pair = min(
            min_pair,
            trace_inequality_tight2(
                wishart(args.dim, True), wishart(args.dim, True),
                wishart(args.dim), wishart(args.dim), w,
            ),
        )
    params = {"samples": args.samples, "users": args.users, "dim": args.dim,
              "seed": args.seed, "tolerance": tol}
    outputs = {
        "samples": args.samples,
        "users": args.users,
        "dim": args.dim,
        "min_chain_value": min_chain,
        "min_two_matrix_value": min_pair,
        "tolerance": tol,
    }
    _emit_report("trace-ineq", _digest(params), args.seed, outputs, args.out)
    ok = min_chain >= -tol and min_pair >= -tol
    return 0 if ok else VERIFICATION_FAILURE


def _cmd_penalty_sim(args):
    game = _load_game(args)
    weights = _csv_floats(args.weights)
    reference = None
    if args.lambda_star is not None:
        lam = args.lambda_star
    else:
        reference, cert = solve_noe(game, weights, _opts(args))
        lam = cert.shadow_price
    cfg = PenaltyConfig(
        lam,
        weights,
        max_iterations=args.max_iter if args.max_iter else 1000,
        damping=args.damping if args.damping else 0.5,
        schedule=args.schedule,
    )
    result = run_penalty_game(game, cfg, reference=reference)
    if args.format == "csv":
        buf = io.StringIO()
        trajectory_to_csv(result, buf, game.num_users)
        _emit(buf.getvalue(), args.out)
        return 0
    outputs = {
        "weights": weights,
        "shadow_price": lam,
        "schedule": cfg.schedule,
        "profile": list(result.profile.matrices),
        "converged": result.converged,
        "iterations": result.iterations,
        "constraint_violation": result.constraint_violation,
        "distance_to_reference": result.distance_to_reference,
        "is_equilibrium_candidate": result.is_equilibrium_candidate,
    }
    _emit_report("penalty-sim", _digest(channel_to_dict(game.channel)), args.seed, outputs, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="channelgames", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="JSON channel description")
        p.add_argument("--order", help="interference order, comma list of 0-based user indices")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--out", default=None, help="output path (stdout when omitted)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--max-iter", type=int, default=None)
        p.add_argument("--damping", type=float, default=None)

    p = sub.add_parser("validate", help="check a channel config")
    common(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("solve-noe", help="solve a weighted equilibrium")
    common(p)
    p.add_argument("--weights", required=True, help="comma list of positive weights")
    p.set_defaults(func=_cmd_solve_noe)

    p = sub.add_parser("certify", help="KKT-certify a covariance profile")
    common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--profile", required=True, help='JSON file {"matrices": [...]}')
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("pareto-sweep", help="sweep the weighted sum-rate frontier")
    common(p)
    p.add_argument("--gamma", help="single weight vector instead of a grid")
    p.add_argument("--gamma-grid", type=int, default=None, help="simplex grid resolution")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_pareto_sweep, format="csv")

    p = sub.add_parser("map-weights", help="convert between gamma and r weights")
    common(p)
    p.add_argument("--gamma", help="scalarization weights (maps to r)")
    p.add_argument("--weights", help="equilibrium weights (maps to gamma)")
    p.set_defaults(func=_cmd_map_weights)

    p = sub.add_parser("dual-transform", help="transform a profile to the dual channel")
    common(p)
    p.add_argument("--profile", required=True)
    p.set_defaults(func=_cmd_dual_transform)

    p = sub.add_parser("check-dsc", help="sample the uniqueness gap")
    common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(func=_cmd_check_dsc)

    p = sub.add_parser("trace-ineq", help="randomized trace-inequality check")
    common(p, config=False)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--users", type=int, default=3)
    p.add_argument("--dim", type=int, default=3)
    p.set_defaults(func=_cmd_trace_ineq)

    p = sub.add_parser("penalty-sim", help="run the penalty-priced dynamics")
    common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--lambda-star", type=float, default=None,
                   help="shadow price; solved from the weights when omitted")
    p.add_argument("--schedule", choices=("sequential", "simultaneous"), default="sequential")
    p.set_defaults(func=_cmd_penalty_sim)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.perf_counter()
    try:
        code = args.func(args)
    except (ChannelFormatError, FileNotFoundError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return USAGE_ERROR
    except ConvergenceError as exc:
        sys.stderr.write(f"solver did not converge: {exc}\n")
        return NONCONVERGENCE
    except (TransformError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"verification failure: {exc}\n")
        return VERIFICATION_FAILURE
    sys.stderr.write(f"{args.command} finished in {time.perf_counter() - started:.3f} s\n")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
