"""Command-line front end.

Subcommands drive the full experiment pipeline: ``design`` optimizes an
allocation, ``evaluate`` scores one allocation's Monte Carlo regret,
``compare`` pits the optimized design against the uniform baseline, ``sweep``
measures regret decay across budgets, ``trajectories`` emits epidemic
quantile bands, and ``verify-bound`` checks the deterministic regret bound
draw by draw. Each command writes delimited output (CSV or JSON) plus a PNG
figure alongside it (suppress with ``--no-plot``); identical invocations
produce byte-identical files.

Configuration files are JSON with a mandatory ``schema_version: 1``; unknown
fields are a hard error. Recognized fields per problem:

* quadratic: sigma, prior_mean, prior_sd, budget, prior_draws, replications
* pricing: prices, prior_mean, prior_sd, budget, candidates, prior_draws,
  replications
* pandemic: contact_matrix, kappa, gamma, population, testing_capacity,
  horizon, initial_infected, budget, prior_draws, replications

plus the optional common fields ``problem`` and ``seed``. Flags override file
values. The environment variable REGRET_DESIGN_THREADS caps worker
parallelism (0 = auto); results do not depend on the thread count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import presets
from .design import DesignObjective, bayesian_design_objective, kkt_group_allocation
from .errors import ConfigError, RegretDesignError
from .estimation import Allocation
from .harness import compare_designs, evaluate_regret, regret_vs_budget_sweep, trajectory_quantiles
from .numerics import RngStream
from .priors import IndependentNormalPrior
from .problem import SmoothnessConstants, verify_regret_bound
from .problems import pandemic, quadratic
from . import report

__all__ = ["main"]

_PROBLEMS = ("quadratic", "pricing", "pandemic")
_COMMANDS = ("design", "evaluate", "compare", "sweep", "trajectories", "verify-bound")

_SCHEMA_VERSION = 1
_COMMON_FIELDS = {"schema_version", "problem", "seed"}
_PROBLEM_FIELDS = {
    "quadratic": {"sigma", "prior_mean", "prior_sd", "budget", "prior_draws", "replications"},
    "pricing": {"prices", "prior_mean", "prior_sd", "budget", "candidates", "prior_draws",
                "replications"},
    "pandemic": {"contact_matrix", "kappa", "gamma", "population", "testing_capacity",
                 "horizon", "initial_infected", "budget", "prior_draws", "replications"},
}


@dataclass
class RunConfig:
    command: str
    problem: str
    seed: int = 0
    replications: int | None = None
    budget: int | None = None
    budgets: tuple[int, ...] | None = None
    draws: int | None = None
    allocation: tuple[int, ...] | None = None
    output_path: Path | None = None
    format: str = "csv"
    plot: bool = True
    threads: int = 1
    file_values: dict = field(default_factory=dict)


def _thread_count() -> int:
    raw = os.environ.get("REGRET_DESIGN_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"REGRET_DESIGN_THREADS must be an integer, got {raw!r}")
    if value < 0:
        raise ConfigError(f"REGRET_DESIGN_THREADS must be >= 0, got {value}")
    return value if value > 0 else (os.cpu_count() or 1)


def _load_config_file(path: Path, problem: str) -> dict:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    version = raw.get("schema_version")
    if version != _SCHEMA_VERSION:
        raise ConfigError(f"field schema_version must be {_SCHEMA_VERSION}, got {version!r}")
    declared = raw.get("problem")
    if declared is not None and declared != problem:
        raise ConfigError(f"field problem: config says {declared!r} but --problem is {problem!r}")
    allowed = _COMMON_FIELDS | _PROBLEM_FIELDS[problem]
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"field {key!r} is not recognized for problem {problem!r}")
    return raw


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regret-design",
        description="Regret-aware experimental design for estimate-then-optimize.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="|".join(_COMMANDS))
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--problem", required=True, choices=_PROBLEMS)
        p.add_argument("--config", type=Path, default=None, help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
        p.add_argument("--replications", type=int, default=None)
        p.add_argument("--budget", type=int, default=None)
        p.add_argument("--output", "-o", type=Path, default=None)
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
        if name == "sweep":
            p.add_argument("--budgets", type=str, default=None,
                           help="comma-separated budgets, e.g. 100,300,1000,3000")
        if name in ("trajectories", "verify-bound"):
            p.add_argument("--draws", type=int, default=None)
        if name == "evaluate":
            p.add_argument("--allocation", type=str, default=None,
                           help="comma-separated counts; defaults to the optimized design")
    return parser


def _parse_int_list(text: str, flag: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise ConfigError(f"{flag} must be a comma-separated integer list, got {text!r}")
    if not values:
        raise ConfigError(f"{flag} must not be empty")
    return values


def _make_run_config(args: argparse.Namespace) -> RunConfig:
    file_values: dict = {}
    if args.config is not None:
        file_values = _load_config_file(args.config, args.problem)
    seed = args.seed if args.seed is not None else int(file_values.get("seed", 0))
    if not 0 <= seed < 2**64:
        raise ConfigError(f"field seed must be a 64-bit unsigned integer, got {seed}")
    replications = args.replications
    if replications is None and "replications" in file_values:
        replications = int(file_values["replications"])
    budget = args.budget
    if budget is None and "budget" in file_values:
        budget = int(file_values["budget"])

    cfg = RunConfig(
        command=args.command,
        problem=args.problem,
        seed=seed,
        replications=replications,
        budget=budget,
        format=args.format or ("json" if args.command == "design" else "csv"),
        plot=not args.no_plot,
        threads=_thread_count(),
        file_values=file_values,
    )
    if getattr(args, "budgets", None) is not None:
        cfg.budgets = _parse_int_list(args.budgets, "--budgets")
    if getattr(args, "draws", None) is not None:
        cfg.draws = int(args.draws)
    if getattr(args, "allocation", None) is not None:
        cfg.allocation = _parse_int_list(args.allocation, "--allocation")
    cfg.output_path = args.output or Path(f"{args.command.replace('-', '_')}_{args.problem}.{cfg.format}")
    return cfg


# ---------------------------------------------------------------------------
# Bundle assembly from config values
# ---------------------------------------------------------------------------


def _bundle_params(cfg: RunConfig) -> pandemic.SirParams:
    fv = cfg.file_values
    return pandemic.SirParams(
        contact_matrix=np.asarray(fv.get("contact_matrix",
                                         pandemic.default_params().contact_matrix), float),
        kappa=float(fv.get("kappa", 1.0 / 105.0)),
        gamma=float(fv.get("gamma", 0.1)),
        population=np.asarray(fv.get("population", (1000.0, 1000.0, 1000.0)), float),
        testing_capacity=float(fv.get("testing_capacity", 100.0)),
        horizon=int(fv.get("horizon", 100)),
        initial_infected=np.asarray(fv.get("initial_infected", (0.0, 1.0, 0.0)), float),
    )


def _bundle(cfg: RunConfig) -> presets.ExperimentBundle:
    fv = cfg.file_values
    try:
        if cfg.problem == "quadratic":
            return presets.quadratic_bundle(
                budget=cfg.budget or int(fv.get("budget", 100)),
                sigma=tuple(fv.get("sigma", (1.0, presets.SQRT3))),
                prior_mean=tuple(fv.get("prior_mean", (10.0, 5.0))),
                prior_sd=tuple(fv.get("prior_sd", (1.0, 1.0))),
                prior_draws=int(fv.get("prior_draws", 100)),
                replications=cfg.replications or int(fv.get("replications", 300)),
            )
        if cfg.problem == "pricing":
            return presets.pricing_bundle(
                prior_mean=tuple(fv.get("prior_mean", (-4.0, 1.0))),
                prior_sd=tuple(fv.get("prior_sd", (0.1, 0.1))),
                budget=cfg.budget or int(fv.get("budget", 100)),
                prices=fv.get("prices", list(range(10))),
                candidates=int(fv.get("candidates", 1000)),
                prior_draws=int(fv.get("prior_draws", 100)),
                replications=cfg.replications or int(fv.get("replications", 300)),
            )
        return presets.pandemic_bundle(
            params=_bundle_params(cfg),
            budget=cfg.budget or int(fv.get("budget", 10)),
            prior_draws=int(fv.get("prior_draws", 1000)),
            replications=cfg.replications or int(fv.get("replications", 1000)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration value: {exc}")


def _figure_path(cfg: RunConfig) -> Path:
    return cfg.output_path.with_suffix(".png")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_design(cfg: RunConfig) -> None:
    bundle = _bundle(cfg)
    stream = RngStream(cfg.seed)
    if cfg.problem == "pandemic":
        # one prior-draw pass: the averaged sensitivities give both the counts
        # and the criterion value (sum_j rho_j^2 / M_j equals the averaged trace)
        params = _bundle_params(cfg)
        design_stream = stream.child(0)
        rho = pandemic.mean_group_sensitivity(params, bundle.prior, bundle.prior_draws,
                                              design_stream.child(0))
        alloc = kkt_group_allocation(rho, bundle.budget, design_stream.child(1))
        objective = float(np.sum(rho**2 / alloc.counts()))
    else:
        alloc = bundle.designer(bundle.budget, stream.child(0))
        obj = DesignObjective(bundle.problem, bundle.cov_model, bundle.prior,
                              bundle.prior_draws, bundle.budget, stream.child(1),
                              solver_tol=bundle.solver_tol)
        objective = bayesian_design_objective(obj, alloc)
    payload = {
        "problem": cfg.problem,
        "seed": cfg.seed,
        "budget": bundle.budget,
        "design_points": [p for p in alloc.design_points],
        "allocation": [int(c) for c in alloc.counts()],
        "objective": objective,
    }
    if cfg.format == "json":
        report.write_json(cfg.output_path, payload)
    else:
        report.write_csv(cfg.output_path, ["design_point", "count"],
                         list(zip(payload["design_points"], payload["allocation"])))
    if cfg.plot:
        report.figure_allocation(alloc, _figure_path(cfg),
                                 f"{cfg.problem} design, budget {bundle.budget}")
    print(json.dumps(payload, sort_keys=True))


def _alloc_from_counts(cfg: RunConfig, bundle: presets.ExperimentBundle) -> Allocation:
    points = bundle.cov_model.design_points
    if cfg.allocation is None:
        return bundle.designer(bundle.budget, RngStream(cfg.seed).child(0))
    if len(cfg.allocation) != len(points):
        raise ConfigError(
            f"--allocation needs {len(points)} counts for problem {cfg.problem!r}"
        )
    if sum(cfg.allocation) != bundle.budget:
        raise ConfigError(
            f"--allocation sums to {sum(cfg.allocation)}, budget is {bundle.budget}"
        )
    return Allocation.from_counts(cfg.allocation, points)


def _cmd_evaluate(cfg: RunConfig) -> None:
    bundle = _bundle(cfg)
    alloc = _alloc_from_counts(cfg, bundle)
    rep = evaluate_regret(bundle.problem, bundle.cov_model, alloc, bundle.prior,
                          bundle.replications, RngStream(cfg.seed).child(2),
                          threads=cfg.threads, solver_tol=bundle.solver_tol,
                          keep_samples=True)
    name = "custom" if cfg.allocation is not None else "optimized"
    header = ["allocation_name", "mean_regret", "ci_half_width", "replications", "discarded"]
    rows = [[name, rep.mean_regret, rep.ci_half_width, rep.replications, rep.discarded]]
    if cfg.format == "json":
        report.write_json(cfg.output_path, dict(zip(header, rows[0])))
    else:
        report.write_csv(cfg.output_path, header, rows)
    if cfg.plot:
        report.figure_regret_histogram(rep, _figure_path(cfg),
                                       f"{cfg.problem} regret, {rep.replications} replications")
    print(f"{name}: mean_regret={rep.mean_regret:.6g} ci={rep.ci_half_width:.6g} "
          f"discarded={rep.discarded}")


def _cmd_compare(cfg: RunConfig) -> None:
    bundle = _bundle(cfg)
    stream = RngStream(cfg.seed)
    allocations = {
        "optimized": bundle.designer(bundle.budget, stream.child(0)),
        "uniform": bundle.uniform(bundle.budget),
    }
    reports = compare_designs(bundle.problem, bundle.cov_model, bundle.prior, allocations,
                              bundle.replications, stream.child(2), threads=cfg.threads,
                              solver_tol=bundle.solver_tol)
    header = ["allocation_name", "mean_regret", "ci_half_width", "discarded"]
    rows = [[name, r.mean_regret, r.ci_half_width, r.discarded] for name, r in reports.items()]
    if cfg.format == "json":
        report.write_json(cfg.output_path, {name: {"mean_regret": r.mean_regret,
                                                   "ci_half_width": r.ci_half_width,
                                                   "discarded": r.discarded}
                                            for name, r in reports.items()})
    else:
        report.write_csv(cfg.output_path, header, rows)
    if cfg.plot:
        report.figure_compare(reports, _figure_path(cfg),
                              f"{cfg.problem} regret, budget {bundle.budget}")
    for name, r in reports.items():
        print(f"{name}: mean_regret={r.mean_regret:.6g} ci={r.ci_half_width:.6g}")


def _cmd_sweep(cfg: RunConfig) -> None:
    bundle = _bundle(cfg)
    budgets = cfg.budgets or (100, 300, 1000, 3000)
    sweep = regret_vs_budget_sweep(bundle.problem, bundle.cov_model, bundle.prior, budgets,
                                   bundle.replications, RngStream(cfg.seed).child(3),
                                   designer=bundle.designer, uniform=bundle.uniform,
                                   threads=cfg.threads, solver_tol=bundle.solver_tol)
    header = ["budget", "optimized_regret", "optimized_ci", "uniform_regret", "uniform_ci"]
    rows = [
        [b, o.mean_regret, o.ci_half_width, u.mean_regret, u.ci_half_width]
        for b, o, u in zip(sweep.axis, sweep.optimized, sweep.uniform)
    ]
    if cfg.format == "json":
        report.write_json(cfg.output_path, {
            "budgets": list(sweep.axis),
            "optimized": [r.mean_regret for r in sweep.optimized],
            "uniform": [r.mean_regret for r in sweep.uniform],
            "loglog_slope": sweep.loglog_slope,
        })
    else:
        report.write_csv(cfg.output_path, header, rows)
    if cfg.plot:
        report.figure_sweep(sweep, _figure_path(cfg), f"{cfg.problem} regret vs budget")
    print(f"loglog_slope={sweep.loglog_slope:.6g}")


def _cmd_trajectories(cfg: RunConfig) -> None:
    if cfg.problem != "pandemic":
        raise ConfigError("field problem: trajectories requires --problem pandemic")
    bundle = _bundle(cfg)
    params = _bundle_params(cfg)
    stream = RngStream(cfg.seed)
    allocations = {
        "optimized": bundle.designer(bundle.budget, stream.child(0)),
        "uniform": bundle.uniform(bundle.budget),
    }
    draws = cfg.draws or bundle.replications
    bands = trajectory_quantiles(params, allocations, bundle.prior, draws, stream.child(2),
                                 solver_tol=bundle.solver_tol, threads=cfg.threads)
    header = ["day", "allocation", "q25", "q50", "q75"]
    rows = []
    for name, band in bands.items():
        for day in range(band["q50"].size):
            rows.append([day, name, band["q25"][day], band["q50"][day], band["q75"][day]])
    if cfg.format == "json":
        report.write_json(cfg.output_path, {
            name: {k: band[k].tolist() for k in ("q25", "q50", "q75")}
            for name, band in bands.items()
        })
    else:
        report.write_csv(cfg.output_path, header, rows)
    if cfg.plot:
        report.figure_trajectories(bands, _figure_path(cfg),
                                   f"cumulative infections, budget {bundle.budget}")
    for name, band in bands.items():
        print(f"{name}: median_final={band['q50'][-1]:.6g}")


def _cmd_verify_bound(cfg: RunConfig) -> None:
    if cfg.problem != "quadratic":
        raise ConfigError(
            "field problem: verify-bound ships curvature constants only for quadratic"
        )
    problem = quadratic.make_problem()
    # valid on theta_1 in [2, 8]: curvature there is between 2 and 8, and the
    # mixed third derivative vanishes because df/dx is linear in theta
    constants = SmoothnessConstants(rho=2.0, beta1=8.0, beta2=0.0)
    theta_star = np.array([10.0, 5.0])
    draws = cfg.draws or 1000
    prior = IndependentNormalPrior(theta_star, np.array([0.1, 0.1]))
    rng = RngStream(cfg.seed).child(4).generator()
    rows = []
    for k in range(draws):
        theta_hat = prior.draw(rng)
        check = verify_regret_bound(problem, constants, theta_star, theta_hat)
        rows.append([k, check.regret, check.bound, check.holds])
    all_hold = all(row[3] for row in rows)
    header = ["draw", "regret", "bound", "holds"]
    if cfg.format == "json":
        report.write_json(cfg.output_path, {
            "draws": draws, "all_hold": all_hold,
            "violations": int(sum(not row[3] for row in rows)),
        })
    else:
        report.write_csv(cfg.output_path, header, rows)
    if cfg.plot:
        report.figure_bound_checks(rows, _figure_path(cfg),
                                   f"regret bound check, {draws} draws")
    print(f"all_hold={all_hold} draws={draws}")
    if not all_hold:
        raise RegretDesignError("regret bound violated on at least one draw")


_DISPATCH = {
    "design": _cmd_design,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
    "sweep": _cmd_sweep,
    "trajectories": _cmd_trajectories,
    "verify-bound": _cmd_verify_bound,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _make_run_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        _DISPATCH[cfg.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except RegretDesignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
