"""Command-line entry point: ``drokit <subcommand> ...`` or ``python3 -m drokit``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import LabeledDataset, TransportCost, format_float, ot_distance, read_distribution
from .ctransform import dro_value_via_envelope
from .envelopes import UnivariateLoss, envelope
from .errors import DrokitError
from .regbounds import DerivativeProfile, lipschitz_bound, variation_bound, wasserstein_bound


def _floats(text: str):
    return np.array([float(v) for v in text.replace(";", ",").split(",") if v.strip()])


def _emit(args, payload, csv_text=None):
    if args.format == "csv" and csv_text is not None:
        text = csv_text
    else:
        text = json.dumps(payload, indent=None) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _num(v):
    return None if v is None else float(v)


def cmd_envelope(args):
    L = UnivariateLoss.parse(args.loss)
    res = envelope(L, args.p, args.s, args.lam)
    payload = {"value": res.value, "maximizer": _num(res.maximizer)}
    _emit(args, payload, f"value,maximizer\n{format_float(res.value)},{'' if res.maximizer is None else format_float(res.maximizer)}\n")


def cmd_dro_value(args):
    P = read_distribution(args.dist)
    L = UnivariateLoss.parse(args.loss)
    res = dro_value_via_envelope(L, args.norm, args.p, _floats(args.theta), P, args.eps)
    payload = {"value": res.value, "lambda_star": res.lambda_star}
    _emit(args, payload, f"value,lambda_star\n{format_float(res.value)},{format_float(res.lambda_star)}\n")


def cmd_bound(args):
    data = json.loads(Path(args.profile).read_text())
    profile = DerivativeProfile(data["losses"], data.get("tensor_norms", []),
                                {int(k): v for k, v in data.get("lipschitz", {}).items()})
    weights = data.get("weights") or np.full(profile.losses.size, 1.0 / profile.losses.size)
    fns = {"variation": lambda: variation_bound(profile, weights, args.p, args.eps),
           "lipschitz": lambda: lipschitz_bound(profile, weights, args.p, args.eps),
           "wasserstein_variation": lambda: wasserstein_bound(profile, weights, args.p, args.eps, "variation"),
           "wasserstein_lipschitz": lambda: wasserstein_bound(profile, weights, args.p, args.eps, "lipschitz")}
    rep = fns[args.variant]()
    lines = ["k,term,cumulative"]
    running = rep.nominal
    lines.append(f"0,{format_float(rep.nominal)},{format_float(running)}")
    for k, t in enumerate(rep.terms, 1):
        running += t
        lines.append(f"{k},{format_float(t)},{format_float(running)}")
    payload = {"variant": rep.variant, "nominal": rep.nominal, "terms": list(rep.terms), "total": rep.total}
    _emit(args, payload, "\n".join(lines) + "\n")


def _alpha(spec: str, sol, J: int):
    from .nash_svm import single_alpha, uniform_alpha
    if spec == "uniform":
        return uniform_alpha(sol, J)
    if spec.startswith("single:"):
        return single_alpha(sol, J, int(spec.split(":", 1)[1]))
    text = Path(spec).read_text()
    try:
        return np.asarray(json.loads(text), float)
    except json.JSONDecodeError:
        return np.array([float(v) for v in text.replace(",", " ").split()])


def cmd_svm_nash(args):
    from .nash_svm import nash_family, solve_dual_light, solve_primal_svm, verify_saddle
    data = LabeledDataset.read_csv(args.data)
    dual = solve_dual_light(data, args.norm, args.eps)
    primal = solve_primal_svm(data, args.norm, args.eps, tol=args.tol or 1e-7, dual=dual)
    Q = nash_family(data, dual, _alpha(args.alpha, dual, data.size), args.norm)
    cert = verify_saddle(data, args.norm, args.eps, primal.theta, Q, sol=dual)
    payload = {"primal": primal.value, "dual": dual.value, "gap": primal.value - dual.value,
               "residuals": {"left": cert.left_residual, "right": cert.right_residual},
               "theta": primal.theta.tolist(), "support": dual.support.tolist()}
    if args.out_prefix:
        k = data.dim
        rows = ["source,mass," + ",".join(f"x{i + 1}" for i in range(k)) + ",y"]
        for j, m, x, y in zip(Q.sources, Q.masses, Q.features, Q.labels):
            rows.append(",".join([str(int(j)), format_float(m)] + [format_float(v) for v in x] + [str(int(y))]))
        Path(f"{args.out_prefix}_perturbed.csv").write_text("\n".join(rows) + "\n")
        Path(f"{args.out_prefix}_certificate.json").write_text(json.dumps(payload))
    _emit(args, payload)


def cmd_portfolio(args):
    from .portfolio import PortfolioExperimentConfig, rows_to_csv, run_portfolio_experiment
    cfg = PortfolioExperimentConfig(d=args.d, n_train=args.train, n_test=args.test, n_trials=args.trials,
                                    seed=args.seed, solver=args.solver, jobs=args.jobs)
    if args.eps_grid:
        cfg.eps_grid = tuple(_floats(args.eps_grid))
    if args.tol:
        cfg.tol = args.tol
    rows = run_portfolio_experiment(cfg)
    text = rows_to_csv(rows)
    if args.format == "json":
        keys = ("trial", "eps", "oos_loss", "mean_return", "sharpe")
        _emit(args, [dict(zip(keys, r)) for r in rows])
    else:
        _emit(args, None, text)


def cmd_ot_distance(args):
    P = read_distribution(args.p)
    Q = read_distribution(args.q)
    cost = TransportCost.parse(args.cost, args.power)
    value, plan = ot_distance(P, Q, cost)
    payload = {"value": value, "plan": [list(m) for m in plan.moves]}
    _emit(args, payload, f"value\n{format_float(value)}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    common.add_argument("--tol", type=float, default=None, help="solver tolerance override")
    common.add_argument("--out", default=None, help="write output here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default=None,
                        help="output format (json, or csv for bound and portfolio)")

    parser = argparse.ArgumentParser(prog="drokit", description="Optimal-transport DRO toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("envelope", parents=[common], help="p-th envelope of a univariate loss")
    p.add_argument("--loss", required=True, choices=("hinge", "zero_one", "quadratic", "neg_log", "logistic"))
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.set_defaults(fn=cmd_envelope)

    p = sub.add_parser("dro-value", parents=[common], help="worst-case expected loss of a linear model")
    p.add_argument("--dist", required=True, help="JSON distribution {atoms, weights}")
    p.add_argument("--theta", required=True, help="comma separated coefficients")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--loss", required=True, choices=("hinge", "zero_one", "quadratic", "logistic"))
    p.add_argument("--norm", default="2", choices=("1", "2", "inf"))
    p.add_argument("--p", type=int, default=1)
    p.set_defaults(fn=cmd_dro_value)

    p = sub.add_parser("bound", parents=[common], help="regularization upper bounds")
    p.add_argument("--profile", required=True, help="JSON {losses, tensor_norms, lipschitz, weights}")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--variant", default="variation",
                   choices=("variation", "lipschitz", "wasserstein_variation", "wasserstein_lipschitz"))
    p.set_defaults(fn=cmd_bound, default_format="csv")

    p = sub.add_parser("svm-nash", parents=[common], help="robust SVM with a Nash strategy of nature")
    p.add_argument("--data", required=True, help="CSV with header x1,...,xk,y")
    p.add_argument("--norm", default="2", choices=("1", "2", "inf"))
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--alpha", default="uniform", help="uniform | single:<j> | path to weights")
    p.add_argument("--out-prefix", default=None)
    p.set_defaults(fn=cmd_svm_nash)

    p = sub.add_parser("portfolio", parents=[common], help="SAA versus DRO portfolio experiment")
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--train", type=int, default=100)
    p.add_argument("--test", type=int, default=100_000)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--eps-grid", default=None, help="comma separated radii")
    p.add_argument("--solver", default="graal", choices=("graal", "pg"))
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_portfolio, default_format="csv")

    p = sub.add_parser("ot-distance", parents=[common], help="exact discrete optimal transport")
    p.add_argument("--p", required=True, help="JSON distribution")
    p.add_argument("--q", required=True, help="JSON distribution")
    p.add_argument("--cost", required=True, help="norm1 | norm2 | norminf | label1 | label2 | labelinf | log")
    p.add_argument("--power", type=int, default=1)
    p.set_defaults(fn=cmd_ot_distance)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = getattr(args, "default_format", "json")
    try:
        args.fn(args)
    except (DrokitError, ValueError, KeyError, FileNotFoundError) as exc:
        code = getattr(exc, "code", "invalid_input")
        if args.format == "json":
            sys.stderr.write(json.dumps({"error": code, "message": str(exc)}) + "\n")
        else:
            sys.stderr.write(f"drokit: {code}: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
