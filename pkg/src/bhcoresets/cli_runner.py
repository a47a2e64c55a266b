"""Command-line front end: config file in, JSON/CSV reports out.

Subcommands: gen-data, build, evaluate, concentration, report. A single
JSON config file drives every command; unknown keys are rejected so typos
cannot silently change an experiment. All stage seeds derive from the
master seed by a fixed counter scheme (see `seeds`), and reports carry the
config hash plus package version, so rerunning a command with the same
config yields byte-identical files. Timestamps appear only in stderr log
lines, never in reports.

Exit codes: 0 success, 2 input/config error, 3 numeric or solver error.
"""

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import model_zoo
from .bhs_geometry import clr_features, gram
from .coreset_solvers import (SolverConfig, coreset_to_dict, frank_wolfe, iht,
                              quasi_newton_kl, read_coreset, uniform_subsample)
from .errors import InputError, NumericError
from .mcmc import McmcConfig, rw_metropolis
from .model_zoo import CsvSchema
from .posterior_metrics import (bound_report_to_dict, concentration_experiment,
                                concentration_report_to_dict, make_grid, verify_bounds)
from .seeds import (STAGE_BASE_SAMPLES, STAGE_CONCENTRATION, STAGE_DATA,
                    STAGE_MCMC_CORESET, STAGE_MCMC_FULL, STAGE_SOLVER, derive_seed)

log = logging.getLogger("bhcoresets")

_SCHEMA = {
    "seed": None,
    "output_dir": None,
    "model": {"kind": None, "d": None, "obs_variance": None},
    "data": {"source": None, "n": None, "theta_star": None, "path": None,
             "has_label": None, "header": None},
    "base": {"kind": None, "mean": None, "cov": None},
    "mc_samples": None,
    "solver": {"name": None, "m": None, "t": None, "tolerance": None},
    "mcmc": {"n_steps": None, "burn_in": None, "thinning": None, "proposal_sd": None},
    "metrics": {"grid_lo": None, "grid_hi": None, "grid_points": None,
                "delta": None, "trials": None},
}

SOLVER_NAMES = ("fw", "iht", "uniform", "qnkl")


def _validate_keys(cfg: dict, schema: dict, path: str = "") -> None:
    for key, val in cfg.items():
        if key not in schema:
            allowed = ", ".join(sorted(schema))
            raise InputError(f"unknown config key {path + key!r}; allowed: {allowed}")
        sub = schema[key]
        if isinstance(sub, dict):
            if not isinstance(val, dict):
                raise InputError(f"config key {path + key!r} must be an object")
            _validate_keys(val, sub, path + key + ".")


def load_config(path, seed_override=None, out_override=None, solver_override=None) -> dict:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: config must be a JSON object")
    _validate_keys(cfg, _SCHEMA)
    if seed_override is not None:
        cfg["seed"] = seed_override
    if out_override is not None:
        cfg["output_dir"] = out_override
    if solver_override is not None:
        cfg.setdefault("solver", {})["name"] = solver_override
    if "seed" not in cfg:
        raise InputError("config must declare a master 'seed'")
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _write_report(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %s", path)


# ---------------------------------------------------------------------------
# Config -> domain objects
# ---------------------------------------------------------------------------

def _model_from(cfg: dict) -> model_zoo.LikelihoodModel:
    spec = cfg.get("model")
    if not spec or "kind" not in spec or "d" not in spec:
        raise InputError("config needs model.kind and model.d")
    return model_zoo.LikelihoodModel(spec["kind"], int(spec["d"]),
                                     float(spec.get("obs_variance", 1.0)))


def _dataset_from(cfg: dict, model) -> model_zoo.Dataset:
    spec = cfg.get("data")
    if not spec or "source" not in spec:
        raise InputError("config needs data.source ('synthetic' or 'file')")
    if spec["source"] == "synthetic":
        n = int(spec.get("n", 0))
        seed = derive_seed(cfg["seed"], STAGE_DATA)
        return model_zoo.generate_synthetic(
            model.kind, n, model.d, seed,
            theta_star=spec.get("theta_star"),
            obs_variance=model.obs_variance)
    if spec["source"] == "file":
        if "path" not in spec:
            raise InputError("data.source 'file' needs data.path")
        schema = CsvSchema(d=model.d,
                           has_label=bool(spec.get("has_label",
                                                   model.kind == model_zoo.LOGISTIC)),
                           header=bool(spec.get("header", False)))
        return model_zoo.load_dataset(spec["path"], schema)
    raise InputError(f"unknown data.source {spec['source']!r}")


def _base_from(cfg: dict, model, dataset) -> model_zoo.BaseMeasure:
    spec = cfg.get("base", {"kind": model_zoo.STANDARD_GAUSSIAN})
    kind = spec.get("kind", model_zoo.STANDARD_GAUSSIAN)
    if kind == model_zoo.STANDARD_GAUSSIAN:
        return model_zoo.standard_gaussian(model.d)
    if kind == model_zoo.GAUSSIAN:
        if "mean" not in spec or "cov" not in spec:
            raise InputError("base.kind 'gaussian' needs base.mean and base.cov")
        return model_zoo.gaussian_measure(spec["mean"], spec["cov"])
    if kind == model_zoo.LAPLACE_APPROXIMATION:
        return model_zoo.laplace_approximation(model, dataset)
    raise InputError(f"unknown base.kind {kind!r}")


def _solver_config(cfg: dict) -> tuple:
    spec = cfg.get("solver")
    if not spec or "name" not in spec or "m" not in spec:
        raise InputError("config needs solver.name and solver.m")
    name = spec["name"]
    if name not in SOLVER_NAMES:
        raise InputError(f"unknown solver {name!r}; choose from {'|'.join(SOLVER_NAMES)}")
    sc = SolverConfig(m=int(spec["m"]), t=int(spec.get("t", 200)),
                      tolerance=float(spec.get("tolerance", 1e-8)),
                      seed=derive_seed(cfg["seed"], STAGE_SOLVER))
    return name, sc


def _mcmc_config(cfg: dict, d: int, seed: int) -> McmcConfig:
    spec = cfg.get("mcmc", {})
    return McmcConfig(n_steps=int(spec.get("n_steps", 20000)),
                      initial=np.zeros(d),
                      burn_in=spec.get("burn_in"),
                      thinning=int(spec.get("thinning", 1)),
                      proposal_sd=spec.get("proposal_sd"),
                      seed=seed)


def _samples_from(cfg: dict, base) -> model_zoo.ParameterSamples:
    s = int(cfg.get("mc_samples", 2000))
    return model_zoo.sample_base(base, s, derive_seed(cfg["seed"], STAGE_BASE_SAMPLES))


def _grid_from(cfg: dict):
    spec = cfg.get("metrics", {})
    return make_grid(float(spec.get("grid_lo", -10.0)),
                     float(spec.get("grid_hi", 10.0)),
                     int(spec.get("grid_points", 4001)))


def _provenance(cfg: dict) -> dict:
    return {"config_hash": config_hash(cfg), "version": __version__}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_data(cfg: dict) -> int:
    model = _model_from(cfg)
    spec = cfg.get("data", {})
    if spec.get("source") != "synthetic":
        raise InputError("gen-data requires data.source = 'synthetic'")
    dataset = _dataset_from(cfg, model)
    out = Path(cfg.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "dataset.csv"
    model_zoo.save_dataset(csv_path, dataset)
    log.info("wrote %s (%d rows)", csv_path, dataset.n)
    meta = {"kind": model.kind, "n": dataset.n, "d": dataset.d,
            "seed": derive_seed(cfg["seed"], STAGE_DATA),
            "source": dataset.source, **_provenance(cfg)}
    _write_report(out / "dataset.meta.json", meta)
    return 0


def _pipeline(cfg: dict):
    model = _model_from(cfg)
    dataset = _dataset_from(cfg, model)
    base = _base_from(cfg, model, dataset)
    samples = _samples_from(cfg, base)
    return model, dataset, base, samples


def cmd_build(cfg: dict) -> int:
    model, dataset, base, samples = _pipeline(cfg)
    name, solver_cfg = _solver_config(cfg)
    log.info("building %s coreset: N=%d, m=%d, S=%d", name, dataset.n,
             solver_cfg.m, samples.s)

    if name == "uniform":
        coreset = uniform_subsample(dataset.n, solver_cfg.m, solver_cfg.seed)
    elif name == "qnkl":
        subset = uniform_subsample(dataset.n, solver_cfg.m, solver_cfg.seed).active
        mcfg = _mcmc_config(cfg, model.d, seed=0)  # per-iteration seeds set by solver
        coreset = quasi_newton_kl(model, dataset, subset, solver_cfg, mcfg)
    else:
        features = clr_features(model, dataset, samples)
        gram_matrix = gram(features)
        solver = frank_wolfe if name == "fw" else iht
        coreset = solver(gram_matrix, solver_cfg)

    for i, obj in enumerate(coreset.trace):
        log.info("iteration %d: objective %.6e", i, obj)
    for warning in coreset.warnings:
        log.warning("%s", warning)

    out = Path(cfg.get("output_dir", "out"))
    payload = {**coreset_to_dict(coreset), **_provenance(cfg)}
    _write_report(out / "coreset.json", payload)
    return 0


def _moment_comparison(cfg: dict, model, dataset, coreset) -> dict:
    from .coreset_solvers import coreset_posterior_logdensity

    def run(weights, stage):
        mcfg = _mcmc_config(cfg, model.d, seed=derive_seed(cfg["seed"], stage))
        target = lambda theta: coreset_posterior_logdensity(model, dataset, weights, theta)
        samples, diags = rw_metropolis(target, mcfg)
        return {"mean": samples.values.mean(axis=0),
                "variance": samples.values.var(axis=0),
                "acceptance_rate": diags.acceptance_rate,
                "min_ess": float(diags.ess.min())}

    full = run(np.ones(dataset.n), STAGE_MCMC_FULL)
    approx = run(coreset.weights, STAGE_MCMC_CORESET)
    mean_diff = np.abs(np.asarray(full["mean"]) - np.asarray(approx["mean"]))
    var_diff = np.abs(np.asarray(full["variance"]) - np.asarray(approx["variance"]))
    return {"full_posterior": full, "coreset_posterior": approx,
            "max_abs_mean_difference": float(mean_diff.max()),
            "max_abs_variance_difference": float(var_diff.max())}


def cmd_evaluate(cfg: dict, coreset_path) -> int:
    model, dataset, base, samples = _pipeline(cfg)
    coreset = read_coreset(coreset_path)
    if coreset.n != dataset.n:
        raise InputError(f"coreset covers {coreset.n} points but dataset has {dataset.n}")

    payload = dict(_provenance(cfg))
    if model.d == 1:
        grid = _grid_from(cfg)
        report = verify_bounds(model, dataset, coreset, base, grid, samples)
        payload["bound_report"] = bound_report_to_dict(report)
        log.info("bounds: hellinger %s, kl %s, w1 %s",
                 report.hellinger.passed, report.kl.passed, report.w1.passed)
    else:
        payload["bound_report"] = {
            "skipped": f"quadrature bound verification supports d = 1 only (model has "
                       f"d = {model.d}); rerun with a 1-D model or rely on the "
                       f"norm-level comparison below"}
    payload["moment_comparison"] = _moment_comparison(cfg, model, dataset, coreset)

    out = Path(cfg.get("output_dir", "out"))
    _write_report(out / "evaluation.json", payload)
    return 0


def cmd_concentration(cfg: dict) -> int:
    model, dataset, base, samples = _pipeline(cfg)
    spec = cfg.get("metrics", {})
    m = int(cfg.get("solver", {}).get("m", 0))
    if m < 1:
        raise InputError("concentration needs solver.m >= 1")
    report = concentration_experiment(
        model, dataset, m,
        delta=float(spec.get("delta", 0.1)),
        trials=int(spec.get("trials", 1000)),
        base=base, samples=samples,
        seed=derive_seed(cfg["seed"], STAGE_CONCENTRATION))
    log.info("concentration: exceedance %.4f vs threshold %.4f",
             report.exceedance, report.threshold)
    out = Path(cfg.get("output_dir", "out"))
    payload = {**concentration_report_to_dict(report), **_provenance(cfg)}
    _write_report(out / "concentration.json", payload)
    return 0


def cmd_report(path, csv_path=None) -> int:
    with open(path) as fh:
        payload = json.load(fh)
    rows = []
    if "weights" in payload and "solver" in payload:
        print(f"coreset: solver={payload['solver']} m={payload['m']} n={payload['n']}")
        final = payload["trace"][-1] if payload.get("trace") else float("nan")
        print(f"final objective: {final}")
        print(f"stop reason: {payload.get('stop_reason', '')}")
        rows = [("index", "weight")] + [(i, w) for i, w in payload["weights"]]
    elif "hellinger" in payload.get("bound_report", {}) or "hellinger" in payload:
        rep = payload.get("bound_report", payload)
        print(f"bound report: B={rep['B']} norm={rep['bhs_norm']} all_passed={rep['all_passed']}")
        rows = [("distance", "lhs", "rhs", "passed")]
        for name in ("hellinger", "kl", "w1"):
            c = rep[name]
            print(f"  {name}: lhs={c['lhs']:.6e} rhs={c['rhs']:.6e} passed={c['passed']}")
            rows.append((name, c["lhs"], c["rhs"], c["passed"]))
    elif "exceedance" in payload:
        print(f"concentration: n={payload['n']} m={payload['m']} delta={payload['delta']}")
        print(f"  gamma={payload['gamma']:.6e} bound={payload['bound']:.6e}")
        print(f"  exceedance={payload['exceedance']} <= threshold={payload['threshold']:.4f}: "
              f"{payload['passed']}")
        rows = [("field", "value")] + sorted(
            (k, v) for k, v in payload.items() if isinstance(v, (int, float)))
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    if csv_path and rows:
        with open(csv_path, "w", newline="") as fh:
            for row in rows:
                fh.write(",".join(str(c) for c in row) + "\n")
        log.info("wrote %s", csv_path)
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bhcoresets",
        description="Construct and evaluate Bayesian coreset posterior approximations.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")

    p = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    common(p)

    p = sub.add_parser("build", help="construct a coreset and write it as JSON")
    common(p)
    p.add_argument("--solver", choices=SOLVER_NAMES, help="solver (overrides config)")

    p = sub.add_parser("evaluate", help="bound report and posterior moment comparison")
    common(p)
    p.add_argument("--coreset", required=True, help="coreset JSON from 'build'")

    p = sub.add_parser("concentration", help="run the subsampling concentration experiment")
    common(p)

    p = sub.add_parser("report", help="summarise a JSON report")
    p.add_argument("path", help="report file to summarise")
    p.add_argument("--csv", help="also export the main table as CSV")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.path, args.csv)
        cfg = load_config(args.config, seed_override=args.seed,
                          out_override=args.out,
                          solver_override=getattr(args, "solver", None))
        if args.command == "gen-data":
            return cmd_gen_data(cfg)
        if args.command == "build":
            return cmd_build(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.coreset)
        if args.command == "concentration":
            return cmd_concentration(cfg)
        raise InputError(f"unknown command {args.command!r}")
    except (InputError, OSError) as exc:
        log.error("%s", exc)
        return 2
    except NumericError as exc:
        log.error("%s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
