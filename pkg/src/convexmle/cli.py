"""``convexmle`` command line: MLE fitting, asymptotic curves and the WLB tools.

Curves are written as ``z,value,method`` CSV; sampler output as
``draw_index,theta``.  Without ``--out`` results go to standard output.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from .asymptotic import edgeworth_cdf, exact_exponential_cdf, normal_cdf_approx, refined_cdf
from .curves import parse_grid
from .exceptions import ConvexMLEError
from .mle import Dataset, empirical_mle_distribution, solve_mle
from .models import available_models, get_model
from .moments import MomentMethod, fisher_info
from .numerics import RngStream, stream_id_for
from .wlb import (
    probability_matching_samples,
    wlb_exact_cdf,
    wlb_fisher_approx,
    wlb_normal_approx,
    wlb_samples,
)


def _emit(text: str, out) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _draws_csv(draws) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["draw_index", "theta"])
    for i, t in enumerate(draws):
        w.writerow([i, repr(float(t))])
    return buf.getvalue()


def _moments(args):
    return MomentMethod.parse(args.moments, seed=args.seed) if args.moments else None


def cmd_mle_fit(args) -> None:
    model = get_model(args.model)
    data = Dataset.from_csv(args.data)
    theta = solve_mle(model, data)
    info = fisher_info(model, theta)
    se = float(1.0 / np.sqrt(data.n * info))
    print(f"model={model.name} n={data.n} theta_hat={theta!r} fisher_info={info!r} se={se!r}")


def cmd_mle_simdist(args) -> None:
    model = get_model(args.model)
    rng = RngStream(args.seed, stream_id_for("simdist"))
    grid = parse_grid(args.grid, model.param_support) if args.grid else None
    curve = empirical_mle_distribution(model, args.theta, args.n, args.reps, rng, grid)
    for flag in curve.flags:
        print(f"warning: {flag}", file=sys.stderr)
    _emit(curve.to_csv(), args.out)


def cmd_asymp_curve(args) -> None:
    model = get_model(args.model)
    moments = _moments(args)
    if args.method == "edgeworth":
        # grid is on the parameter scale; map to the standardised scale
        z = parse_grid(args.grid, model.param_support)
        info = fisher_info(model, args.theta, moments)
        x = np.sqrt(args.n * info) * (z - args.theta)
        curve = edgeworth_cdf(model, args.theta, args.n, x, moments)
        curve.grid = z
    elif args.method == "exact":
        if model.name != "exponential":
            raise ConvexMLEError("the exact law is only available for the exponential model")
        curve = exact_exponential_cdf(args.theta, args.n, parse_grid(args.grid, model.param_support))
    else:
        grid = parse_grid(args.grid, model.param_support)
        fn = refined_cdf if args.method == "refined" else normal_cdf_approx
        curve = fn(model, args.theta, args.n, grid, moments)
    for flag in curve.flags:
        print(f"warning: {flag}", file=sys.stderr)
    _emit(curve.to_csv(), args.out)


def cmd_wlb_curve(args) -> None:
    model = get_model(args.model)
    data = Dataset.from_csv(args.data)
    grid = parse_grid(args.grid, model.param_support)
    if args.wlb_cmd == "exact":
        curve = wlb_exact_cdf(model, data, grid)
    elif args.wlb_cmd == "approx":
        curve = wlb_normal_approx(model, data, grid)
    else:
        curve = wlb_fisher_approx(model, data, grid)
    for flag in curve.flags:
        print(f"warning: {flag}", file=sys.stderr)
    _emit(curve.to_csv(), args.out)


def cmd_wlb_sample(args) -> None:
    model = get_model(args.model)
    data = Dataset.from_csv(args.data)
    rng = RngStream(args.seed, stream_id_for("wlb-sample"))
    if args.wlb_cmd == "sample":
        draws = wlb_samples(model, data, args.draws, rng)
    else:
        draws = probability_matching_samples(model, data, args.draws, rng)
    _emit(_draws_csv(draws), args.out)


def build_parser() -> argparse.ArgumentParser:
    models = ", ".join(available_models())
    p = argparse.ArgumentParser(prog="convexmle", description="MLE distribution tools for convex losses.")
    top = p.add_subparsers(dest="group", required=True)

    def common(sp, data=True):
        sp.add_argument("--model", required=True, help=f"one of: {models}")
        if data:
            sp.add_argument("--data", required=True, help="CSV file, first column used")
        sp.add_argument("--out", help="output CSV (default: stdout)")

    mle = top.add_parser("mle", help="fit or simulate MLEs").add_subparsers(dest="mle_cmd", required=True)
    fit = mle.add_parser("fit", help="MLE of a dataset")
    common(fit)
    fit.set_defaults(func=cmd_mle_fit)
    sim = mle.add_parser("simdist", help="simulated sampling distribution of the MLE")
    common(sim, data=False)
    sim.add_argument("--theta", type=float, required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--reps", type=int, default=100_000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--grid", help="lo:hi:steps (default: quantile grid)")
    sim.set_defaults(func=cmd_mle_simdist)

    asymp = top.add_parser("asymp", help="asymptotic CDF curves").add_subparsers(dest="asymp_cmd", required=True)
    cur = asymp.add_parser("curve", help="refined, normal, edgeworth or exact CDF")
    common(cur, data=False)
    cur.add_argument("--method", choices=("refined", "normal", "edgeworth", "exact"), default="refined")
    cur.add_argument("--theta", type=float, required=True, help="true parameter")
    cur.add_argument("--n", type=int, required=True)
    cur.add_argument("--grid", required=True, help="lo:hi:steps on the parameter scale")
    cur.add_argument("--moments", help="closed | quad | auto | mc:<draws>")
    cur.add_argument("--seed", type=int, default=0, help="seed for mc moments")
    cur.set_defaults(func=cmd_asymp_curve)

    wlb = top.add_parser("wlb", help="weighted likelihood bootstrap").add_subparsers(dest="wlb_cmd", required=True)
    for name, desc in (("exact", "exact WLB CDF"), ("approx", "normal-type approximation"),
                       ("fisher", "Fisher-information approximation")):
        sp = wlb.add_parser(name, help=desc)
        common(sp)
        sp.add_argument("--grid", required=True, help="lo:hi:steps")
        sp.set_defaults(func=cmd_wlb_curve)
    for name, desc in (("sample", "WLB draws"), ("match", "probability-matching draws")):
        sp = wlb.add_parser(name, help=desc)
        common(sp)
        sp.add_argument("--draws", type=int, default=1000)
        sp.add_argument("--seed", type=int, default=0)
        sp.set_defaults(func=cmd_wlb_sample)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ConvexMLEError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
