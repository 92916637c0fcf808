"""Named reproduction experiments and the ``paper-repro`` command.

Each experiment writes CSV files into its own directory and returns an
:class:`ExperimentReport` whose summary statistics can all be recomputed
from those files.  Checks compare summaries with fixed thresholds; the
command exits 0 only if every check passes.  Wall-clock times go only into
the JSON manifest so that CSV output is byte-for-byte reproducible.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid

from .asymptotic import (
    cdf_to_density,
    exact_exponential_cdf,
    normal_cdf_approx,
    pivot_study,
    refined_cdf,
)
from .curves import CdfCurve, empirical_cdf, make_grid, quantile_grid
from .mle import simulate_mles, solve_mle
from .models import get_model
from .moments import MomentMethod
from .numerics import RngStream, stream_id_for
from .wlb import (
    jeffreys_posterior_exponential,
    probability_matching_samples,
    wlb_exact_cdf,
    wlb_exact_value,
    wlb_mc_oracle,
    wlb_samples,
)

EXPERIMENTS = ("fig1", "fig2", "fig3", "wlb-beta", "wlb-jeffreys", "probmatch")
FIG3_SIZES = (15, 25, 100)
DEFAULT_SEED = 42

#: variance bands for the pivot study, keyed by n: (Var T_N band, Var T band)
PIVOT_BANDS = {
    15: ((1.6, 2.0), (0.70, 0.90)),
    25: ((1.28, 1.48), (0.78, 0.93)),
    100: ((1.1, 1.4), (1.1, 1.4)),
}


@dataclass
class ExperimentConfig:
    experiment: str
    model: str
    n: int
    theta_star: float
    reps: int
    seed: int
    grid: str = ""
    moments: str = "auto"
    out: str = "repro_out"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        get_model(self.model)
        if self.n < 1 or self.reps < 1:
            raise ValueError("n and reps must be >= 1")

    def stream(self, label: str = "") -> RngStream:
        return RngStream(self.seed, stream_id_for(self.experiment + label))


@dataclass
class Check:
    name: str
    value: float
    lower: float | None
    upper: float | None
    passed: bool = field(init=False)

    def __post_init__(self):
        self.value = float(self.value)
        ok = math.isfinite(self.value)
        if self.lower is not None:
            ok = ok and self.value >= self.lower
        if self.upper is not None:
            ok = ok and self.value <= self.upper
        self.passed = bool(ok)


@dataclass
class ExperimentReport:
    name: str
    config: dict
    csv_paths: list
    summary: dict
    checks: list
    wall_clock: float = 0.0
    flags: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_table(path: Path, header, columns) -> str:
    """Write equal-length columns as CSV with round-trip float formatting."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) for v in row])
    return str(path)


def read_table(path) -> dict:
    """Read a numeric CSV written by :func:`write_table` into float columns."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = {}
    for key in rows[0] if rows else []:
        try:
            cols[key] = np.array([float(r[key]) for r in rows])
        except ValueError:
            cols[key] = [r[key] for r in rows]
    return cols


def _curves_csv(path: Path, *curves: CdfCurve) -> str:
    grid = curves[0].grid
    header = ["z"] + [c.method for c in curves]
    return write_table(path, header, [grid] + [c.values for c in curves])


def ks_to_cdf(samples, cdf_values) -> float:
    """One-sample KS distance given the model CDF at the sorted samples."""
    s = np.asarray(cdf_values, dtype=float)
    k = s.size
    i = np.arange(1, k + 1)
    return float(max(np.max(i / k - s), np.max(s - (i - 1) / k)))


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def run_fig1(cfg: ExperimentConfig | None = None) -> ExperimentReport:
    """Exponential model, n=10, theta*=1: refined vs normal vs exact law."""
    cfg = cfg or default_config("fig1")
    model = get_model("exponential")
    out = Path(cfg.out) / "fig1"
    grid = np.linspace(0.4, 3.0, 261)
    refined = refined_cdf(model, cfg.theta_star, cfg.n, grid, cfg.moments)
    generic = refined_cdf(model, cfg.theta_star, cfg.n, grid, "quad", simplify=False)
    normal = normal_cdf_approx(model, cfg.theta_star, cfg.n, grid)
    exact = exact_exponential_cdf(cfg.theta_star, cfg.n, grid)
    path = _curves_csv(out / "curves.csv", refined, normal, exact)
    gen_path = _curves_csv(out / "generic.csv", generic)
    sup_refined = refined.sup_distance(exact)
    sup_normal = normal.sup_distance(exact)
    sup_generic = generic.sup_distance(refined)
    summary = {"sup_refined_exact": sup_refined, "sup_normal_exact": sup_normal,
               "sup_generic_closed": sup_generic}
    checks = [
        Check("refined closer than normal", sup_normal - sup_refined, 0.0, None),
        Check("generic quadrature path matches closed form", sup_generic, None, 1e-8),
    ]
    return ExperimentReport("fig1", asdict(cfg), [path, gen_path], summary, checks)


def run_fig2(cfg: ExperimentConfig | None = None) -> ExperimentReport:
    """Fisk model, n=10, theta*=2: simulated MLE law vs refined curve with MC moments."""
    cfg = cfg or default_config("fig2")
    model = get_model("fisk")
    out = Path(cfg.out) / "fig2"
    mles, failures = simulate_mles(model, cfg.theta_star, cfg.n, cfg.reps, cfg.stream("-mle"))
    grid = quantile_grid(mles)
    empirical = CdfCurve(grid, empirical_cdf(mles, grid), "empirical")
    method = MomentMethod.parse(cfg.moments, seed=cfg.seed)
    if method.kind == "mc":
        method = MomentMethod("mc", draws=method.draws, seed=cfg.seed,
                              stream_id=stream_id_for("fig2-moments"))
    refined = refined_cdf(model, cfg.theta_star, cfg.n, grid, method)
    path = _curves_csv(out / "curves.csv", empirical, refined)
    gap = empirical.sup_distance(refined)
    med_emp = float(np.interp(0.5, empirical.values, grid))
    med_ref = float(np.interp(0.5, refined.values, grid))
    summary = {"sup_gap": gap, "median_empirical": med_emp, "median_refined": med_ref,
               "failures": failures, "moments": method.label()}
    checks = [Check("sup gap empirical vs refined", gap, None, 0.05)]
    return ExperimentReport("fig2", asdict(cfg), [path], summary, checks)


def run_fig3(cfg: ExperimentConfig | None = None) -> ExperimentReport:
    """Skew-normal pivots T and T_N at theta=0 for one sample size."""
    cfg = cfg or default_config("fig3")
    out = Path(cfg.out) / "fig3" / f"n{cfg.n}"
    study = pivot_study(cfg.n, cfg.reps, RngStream(cfg.seed, stream_id_for(f"fig3-n{cfg.n}")))
    idx = np.arange(study.t_refined.size)
    p1 = write_table(out / "pivots.csv", ["draw_index", "T", "T_N", "theta_hat"],
                     [idx, study.t_refined, study.t_normal, study.theta_hat])
    edges = np.linspace(-5.0, 5.0, 51)
    h_t, _ = np.histogram(study.t_refined, edges)
    h_n, _ = np.histogram(study.t_normal, edges)
    p2 = write_table(out / "histogram.csv", ["left", "right", "T_count", "T_N_count"],
                     [edges[:-1], edges[1:], h_t, h_n])
    summary = dict(study.moments())
    summary.update(failures=study.failures, quadrature_fallbacks=study.quadrature_fallbacks)
    checks = []
    if cfg.n in PIVOT_BANDS:
        (tn_lo, tn_hi), (t_lo, t_hi) = PIVOT_BANDS[cfg.n]
        checks = [
            Check(f"Var(T_N) band at n={cfg.n}", summary["TN_var"], tn_lo, tn_hi),
            Check(f"Var(T) band at n={cfg.n}", summary["T_var"], t_lo, t_hi),
        ]
    return ExperimentReport(f"fig3-n{cfg.n}", asdict(cfg), [p1, p2], summary, checks)


def beta_dataset(seed: int, n: int = 10) -> np.ndarray:
    """n draws from beta(2, 1), the power model at theta=2."""
    gen = RngStream(seed, stream_id_for("wlb-beta-data")).generator()
    return gen.beta(2.0, 1.0, n)


def run_wlb_beta(cfg: ExperimentConfig | None = None, draws: int = 1000,
                 oracle_draws: int = 1_000_000) -> ExperimentReport:
    """Power model on beta(2,1) data: exact WLB law vs sampled WLB draws and the MC oracle."""
    cfg = cfg or default_config("wlb-beta")
    model = get_model("power")
    out = Path(cfg.out) / "wlb-beta"
    x = beta_dataset(cfg.seed, cfg.n)
    theta_hat = solve_mle(model, x)
    samples = np.sort(wlb_samples(model, x, draws, cfg.stream("-draws")))
    lo = min(samples[0], theta_hat) * 0.5
    hi = max(samples[-1], theta_hat) * 1.5
    grid = make_grid(np.linspace(lo, hi, 401))
    exact = wlb_exact_cdf(model, x, grid)
    f_at = np.array([wlb_exact_value(model, x, s) for s in samples])
    ks = ks_to_cdf(samples, f_at)
    ogrid = make_grid(np.quantile(samples, np.linspace(0.025, 0.975, 21)))
    oracle = wlb_mc_oracle(model, x, ogrid, oracle_draws, cfg.stream("-oracle"))
    ovals = np.array([wlb_exact_value(model, x, z) for z in ogrid])
    excess = np.abs(ovals - oracle.p) / np.maximum(3 * oracle.se, 1e-3)
    paths = [
        write_table(out / "data.csv", ["x"], [x]),
        _curves_csv(out / "exact.csv", exact),
        write_table(out / "samples.csv", ["draw_index", "theta", "exact_cdf"],
                    [np.arange(samples.size), samples, f_at]),
        write_table(out / "oracle.csv", ["z", "exact", "oracle", "se"],
                    [ogrid, ovals, oracle.p, oracle.se]),
    ]
    bound = 1.36 * 2 / math.sqrt(draws)
    summary = {"theta_hat": theta_hat, "ks_samples_exact": ks, "ks_bound": bound,
               "oracle_max_ratio": float(np.max(excess)),
               "exact_monotone_violation": float(max(0.0, -np.min(np.diff(exact.values))))}
    checks = [
        Check("KS samples vs exact", ks, None, bound),
        Check("exact vs oracle, residual / max(3se, 1e-3)", np.max(excess), None, 1.0),
        Check("exact curve nondecreasing", summary["exact_monotone_violation"], None, 1e-9),
    ]
    return ExperimentReport("wlb-beta", asdict(cfg), paths, summary, checks, flags=exact.flags)


def _density_variance(grid, dens) -> tuple[float, float, float]:
    mass = float(trapezoid(dens, grid))
    mean = float(trapezoid(grid * dens, grid)) / mass
    var = float(trapezoid((grid - mean) ** 2 * dens, grid)) / mass
    return mass, mean, var


def jeffreys_dataset(seed: int, n: int = 10, theta: float = 1.0 / 3.0) -> np.ndarray:
    gen = RngStream(seed, stream_id_for("wlb-jeffreys-data")).generator()
    return get_model("exponential").sample(theta, n, gen)


def run_wlb_jeffreys(cfg: ExperimentConfig | None = None) -> ExperimentReport:
    """Exponential model, n=10 at theta=1/3: WLB exact density vs Jeffreys posterior."""
    cfg = cfg or default_config("wlb-jeffreys")
    model = get_model("exponential")
    out = Path(cfg.out) / "wlb-jeffreys"
    x = jeffreys_dataset(cfg.seed, cfg.n, cfg.theta_star)
    post = stats.gamma(a=x.size, scale=1.0 / x.sum())
    lo = 0.9 * min(1.0 / x.max(), post.ppf(1e-7))
    hi = 1.05 * max(1.0 / x.min(), post.ppf(1 - 1e-7))
    grid = make_grid(np.linspace(lo, hi, 2001))
    wlb_cdf = wlb_exact_cdf(model, x, grid)
    wlb_dens = cdf_to_density(wlb_cdf)
    jeff = jeffreys_posterior_exponential(x, grid)
    m_w, mu_w, var_w = _density_variance(grid, wlb_dens.values)
    m_j, mu_j, var_j = _density_variance(grid, jeff.values)
    paths = [
        write_table(out / "data.csv", ["x"], [x]),
        write_table(out / "densities.csv", ["z", "wlb_cdf", "wlb_density", "jeffreys_density"],
                    [grid, wlb_cdf.values, wlb_dens.values, jeff.values]),
    ]
    summary = {"wlb_mass": m_w, "wlb_mean": mu_w, "wlb_variance": var_w,
               "jeffreys_mass": m_j, "jeffreys_mean": mu_j, "jeffreys_variance": var_j}
    checks = [
        Check("Var(Jeffreys) - Var(WLB) > 0", var_j - var_w, 0.0, None),
        Check("Jeffreys density mass on grid", m_j, 0.999, None),
        Check("WLB density minimum", float(np.min(wlb_dens.values)), 0.0, None),
    ]
    return ExperimentReport("wlb-jeffreys", asdict(cfg), paths, summary, checks, flags=wlb_cdf.flags)


def probmatch_dataset(seed: int, n: int = 100, theta: float = math.log(3.0)) -> np.ndarray:
    gen = RngStream(seed, stream_id_for("probmatch-data")).generator()
    return get_model("gumbel_rate").sample(theta, n, gen)


def run_probmatch(cfg: ExperimentConfig | None = None, draws: int = 1000) -> ExperimentReport:
    """gumbel_rate, n=100: probability-matching draws vs WLB draws."""
    cfg = cfg or default_config("probmatch")
    model = get_model("gumbel_rate")
    out = Path(cfg.out) / "probmatch"
    x = probmatch_dataset(cfg.seed, cfg.n, cfg.theta_star)
    wlb = wlb_samples(model, x, draws, cfg.stream("-wlb"))
    pm = probability_matching_samples(model, x, draws, cfg.stream("-match"))
    ks = float(stats.ks_2samp(wlb, pm).statistic)
    grid = quantile_grid(np.concatenate([wlb, pm]))
    paths = [
        write_table(out / "data.csv", ["x"], [x]),
        write_table(out / "samples.csv", ["draw_index", "wlb", "probmatch"],
                    [np.arange(draws), wlb, pm]),
        write_table(out / "ecdf.csv", ["z", "wlb", "probmatch"],
                    [grid, empirical_cdf(wlb, grid), empirical_cdf(pm, grid)]),
    ]
    se = math.sqrt((np.var(wlb, ddof=1) + np.var(pm, ddof=1)) / draws)
    mean_gap = abs(float(np.mean(wlb) - np.mean(pm)))
    summary = {"ks": ks, "mean_wlb": float(np.mean(wlb)), "mean_probmatch": float(np.mean(pm)),
               "mean_gap": mean_gap, "mean_gap_se": se}
    checks = [
        Check("two-sample KS", ks, None, 0.10),
        Check("mean gap in standard errors", mean_gap / se, None, 3.0),
    ]
    return ExperimentReport("probmatch", asdict(cfg), paths, summary, checks)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "fig1": dict(model="exponential", n=10, theta_star=1.0, reps=1, moments="closed"),
    "fig2": dict(model="fisk", n=10, theta_star=2.0, reps=100_000, moments="mc:1000000"),
    "fig3": dict(model="skew_normal", n=15, theta_star=0.0, reps=5000, moments="quad"),
    "wlb-beta": dict(model="power", n=10, theta_star=2.0, reps=1),
    "wlb-jeffreys": dict(model="exponential", n=10, theta_star=1.0 / 3.0, reps=1),
    "probmatch": dict(model="gumbel_rate", n=100, theta_star=math.log(3.0), reps=1),
}


def default_config(name: str, seed: int = DEFAULT_SEED, out: str = "repro_out", **over) -> ExperimentConfig:
    kw = dict(_DEFAULTS[name])
    kw.update({k: v for k, v in over.items() if v is not None})
    return ExperimentConfig(experiment=name, seed=seed, out=out, **kw)


def _run_task(task) -> ExperimentReport:
    name, cfg, draws = task
    start = time.perf_counter()
    if name == "fig1":
        rep = run_fig1(cfg)
    elif name == "fig2":
        rep = run_fig2(cfg)
    elif name == "fig3":
        rep = run_fig3(cfg)
    elif name == "wlb-beta":
        rep = run_wlb_beta(cfg, draws=draws or 1000)
    elif name == "wlb-jeffreys":
        rep = run_wlb_jeffreys(cfg)
    else:
        rep = run_probmatch(cfg, draws=draws or 1000)
    rep.wall_clock = time.perf_counter() - start
    return rep


def plan(names, seed, out, n=None, reps=None, moments=None, draws=None):
    tasks = []
    for name in names:
        if name == "fig3" and n is None:
            for size in FIG3_SIZES:
                tasks.append((name, default_config(name, seed, out, n=size, reps=reps), draws))
        else:
            tasks.append((name, default_config(name, seed, out, n=n, reps=reps, moments=moments), draws))
    return tasks


def run_all(seed: int = DEFAULT_SEED, out: str = "repro_out", parallel: bool = False, **over):
    """Run every experiment and write ``manifest.json`` into ``out``."""
    return run_tasks(plan(EXPERIMENTS, seed, out, **over), out, parallel)


def run_tasks(tasks, out, parallel=False) -> list[ExperimentReport]:
    if parallel and len(tasks) > 1:
        with ProcessPoolExecutor() as pool:
            reports = list(pool.map(_run_task, tasks))
    else:
        reports = [_run_task(t) for t in tasks]
    Path(out).mkdir(parents=True, exist_ok=True)
    manifest = {"reports": [r.to_json() for r in reports],
                "passed": all(r.passed for r in reports)}
    with open(Path(out) / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=float)
    return reports


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="paper-repro", description="Run named reproduction experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS + ("all",))
    p.add_argument("--n", type=int, help="sample size (fig3 runs 15, 25 and 100 when omitted)")
    p.add_argument("--reps", type=int, help="simulation replicates (fig2, fig3)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default="repro_out", help="output directory")
    p.add_argument("--moments", help="closed | quad | auto | mc:<draws>")
    p.add_argument("--draws", type=int, help="sampler draws (wlb-beta, probmatch)")
    p.add_argument("--parallel", action="store_true", help="run independent experiments in processes")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    names = EXPERIMENTS if args.experiment == "all" else (args.experiment,)
    tasks = plan(names, args.seed, args.out, args.n, args.reps, args.moments, args.draws)
    reports = run_tasks(tasks, args.out, args.parallel)
    for rep in reports:
        for c in rep.checks:
            status = "PASS" if c.passed else "FAIL"
            print(f"{status}  {rep.name}: {c.name} = {c.value:.6g}  [{c.lower}, {c.upper}]")
        print(f"      {rep.name} finished in {rep.wall_clock:.1f}s")
    return 0 if all(r.passed for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
