"""Experiment configuration, execution and the command line entry point.

Config files are flat ``section.key = value`` lines; ``#`` starts a comment.
Every key, its type and default is listed in :data:`SCHEMA`. The value
``auto`` selects a derived default (see the notes in ``SCHEMA``).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .algorithms import (CSV_COLUMNS, DivergenceError, HyperParams, Recorder, RunResult,
                         min_c_gamma, run_precision, run_prox_dsgda, run_prox_gt_sgda)
from .data import generate_synthetic_classification, load_libsvm, partition_equal
from .estimators import AdaptiveBatchConfig, Mode, estimate_sigma2
from .problems import (MinMaxProblem, build_auc_maximization, build_robust_regression,
                       build_synthetic_saddle)
from .topology import generate_erdos_renyi, laplacian_consensus_matrix, write_edge_list

logger = logging.getLogger(__name__)

PROBLEMS = ("regression", "auc", "synthetic")
ALGORITHMS = ("precision", "precision_plus", "prox_dsgda", "prox_gt_sgda")
AUTO = "auto"


class ConfigError(ValueError):
    pass


# key -> (type, default). "auto" defaults:
#   problem.lambda1  1/n^2            algo.q        ceil(sqrt(n))
#   algo.batch       q                adaptive.c_gamma  analysis lower bound
#   adaptive.sigma2  empirical variance at the initial point
#   run.stride       1 if T <= 1e4 else ceil(T / 1e4)
#   init.x0/init.y0  problem default (origin; uniform weights 1/n for regression)
SCHEMA: dict[str, tuple[type, Any]] = {
    "problem.name": (str, None),
    "problem.lambda1": (float, AUTO),
    "problem.lambda2": (float, 1e-3),
    "problem.alpha_reg": (float, 10.0),
    "problem.bound": (float, 10.0),
    "problem.n": (int, 200),
    "problem.dim_x": (int, 10),
    "problem.dim_y": (int, 5),
    "problem.mu": (float, 0.2),
    "problem.seed": (int, 0),
    "data.path": (str, ""),
    "data.n_samples": (int, 2000),
    "data.dim": (int, 10),
    "data.seed": (int, 0),
    "network.m": (int, 5),
    "network.p_c": (float, 0.6),
    "network.seed": (int, 0),
    "network.dump": (str, ""),
    "algo.name": (str, "precision"),
    "algo.nu": (float, 0.1),
    "algo.eta": (float, 0.1),
    "algo.alpha": (float, 1.0),
    "algo.tau": (float, 1.0),
    "algo.q": (int, AUTO),
    "algo.beta": (float, 1.0 / 12.0),
    "algo.batch": (int, AUTO),
    "algo.T": (int, 1000),
    "adaptive.c_gamma": (float, AUTO),
    "adaptive.c_epsilon": (float, 1.0),
    "adaptive.sigma2": (float, AUTO),
    "adaptive.epsilon": (float, 1e-4),
    "run.seed": (int, 0),
    "run.stride": (int, AUTO),
    "run.out": (str, "trace.csv"),
    "run.repeats": (int, 1),
    "init.x0": (float, AUTO),
    "init.y0": (float, AUTO),
}
REQUIRED = ("problem.name",)


@dataclass
class ExperimentConfig:
    values: dict[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def get(self, key: str) -> Any:
        """Value of ``key`` with ``auto`` mapped to ``None``."""
        v = self.values[key]
        return None if v == AUTO else v

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        vals = dict(self.values)
        for key, v in overrides.items():
            if v is not None:
                vals[key] = _coerce(key, v)
        _validate(vals)
        return ExperimentConfig(vals)


def _coerce(key: str, raw: Any) -> Any:
    typ, _ = SCHEMA[key]
    if isinstance(raw, str) and raw.strip().lower() == AUTO:
        return AUTO
    try:
        if typ is int and isinstance(raw, str):
            as_float = float(raw)
            if as_float != int(as_float):
                raise ValueError
            return int(as_float)
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None


def _validate(vals: dict[str, Any]) -> None:
    if vals["problem.name"] not in PROBLEMS:
        raise ConfigError(f"problem.name must be one of {PROBLEMS}, got {vals['problem.name']!r}")
    if vals["algo.name"] not in ALGORITHMS:
        raise ConfigError(f"algo.name must be one of {ALGORITHMS}, got {vals['algo.name']!r}")
    path = vals["data.path"]
    if path and not Path(path).is_file():
        raise ConfigError(f"data.path: no such file {path!r}")
    if vals["network.m"] < 1:
        raise ConfigError("network.m must be positive")
    if vals["algo.T"] < 0:
        raise ConfigError("algo.T must be nonnegative")


def parse_config(text: str) -> ExperimentConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        raw[key] = value
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    vals = {key: default for key, (_, default) in SCHEMA.items()}
    vals.update({key: _coerce(key, v) for key, v in raw.items()})
    _validate(vals)
    return ExperimentConfig(vals)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------------------

def build_problem(cfg: ExperimentConfig) -> MinMaxProblem:
    name, m = cfg["problem.name"], cfg["network.m"]
    if name == "synthetic":
        return build_synthetic_saddle(m, cfg["problem.n"], cfg["problem.dim_x"],
                                      cfg["problem.dim_y"], cfg["problem.seed"],
                                      mu_s=cfg["problem.mu"])
    if cfg["data.path"]:
        ds = load_libsvm(cfg["data.path"])
    else:
        ds = generate_synthetic_classification(cfg["data.n_samples"], cfg["data.dim"], cfg["data.seed"])
    parts = partition_equal(ds, m, cfg["data.seed"])
    if name == "regression":
        return build_robust_regression(parts, None, m, lambda1=cfg.get("problem.lambda1"),
                                       lambda2=cfg["problem.lambda2"],
                                       alpha_reg=cfg["problem.alpha_reg"])
    return build_auc_maximization(parts, None, m, bound=cfg["problem.bound"])


def hyperparams(cfg: ExperimentConfig, n: int) -> HyperParams:
    q = cfg.get("algo.q") or math.ceil(math.sqrt(n))
    return HyperParams(nu=cfg["algo.nu"], eta=cfg["algo.eta"], alpha=cfg["algo.alpha"],
                       tau=cfg["algo.tau"], q=q, beta=cfg["algo.beta"], T=cfg["algo.T"])


def record_stride(T: int) -> int:
    return 1 if T <= 10_000 else math.ceil(T / 10_000)


def initial_point(cfg: ExperimentConfig, problem: MinMaxProblem):
    x0, y0 = problem.initial_point()
    if cfg.get("init.x0") is not None:
        x0 = np.full(problem.dim_x, cfg["init.x0"])
    if cfg.get("init.y0") is not None:
        y0 = np.full(problem.dim_y, cfg["init.y0"])
    return x0, y0


def execute(cfg: ExperimentConfig, seed: int | None = None) -> RunResult:
    """Build everything from ``cfg`` and run the selected algorithm."""
    seed = cfg["run.seed"] if seed is None else seed
    problem = build_problem(cfg)
    g = generate_erdos_renyi(problem.m, cfg["network.p_c"], cfg["network.seed"])
    if cfg["network.dump"]:
        write_edge_list(g, cfg["network.dump"])
    M = laplacian_consensus_matrix(g)
    hp = hyperparams(cfg, problem.n)
    batch = cfg.get("algo.batch") or hp.q
    stride = cfg.get("run.stride") or record_stride(hp.T)
    recorder = Recorder(stride=stride)
    x0, y0 = initial_point(cfg, problem)
    algo = cfg["algo.name"]
    logger.info("running %s on %s (m=%d, n=%d, lambda=%.4f)", algo, problem.name,
                problem.m, problem.n, M.lam)
    if algo in ("precision", "precision_plus"):
        adaptive = None
        if algo == "precision_plus":
            sigma2 = cfg.get("adaptive.sigma2")
            if sigma2 is None:
                sigma2 = estimate_sigma2(problem, x0, y0)
            c_gamma = cfg.get("adaptive.c_gamma") or min_c_gamma(hp, problem.mu, problem.m)
            adaptive = AdaptiveBatchConfig(c_gamma, cfg["adaptive.c_epsilon"], sigma2,
                                           cfg["adaptive.epsilon"])
        return run_precision(problem, M, hp, mode=Mode(algo), adaptive=adaptive, seed=seed,
                             recorder=recorder, x0=x0, y0=y0,
                             minibatch=cfg.get("algo.batch"))
    if algo == "prox_gt_sgda":
        return run_prox_gt_sgda(problem, M, hp, batch, seed=seed, recorder=recorder, x0=x0, y0=y0)
    return run_prox_dsgda(problem, M, hp.nu, hp.eta, batch, hp.T, seed=seed,
                          recorder=recorder, x0=x0, y0=y0)


def format_csv(result: RunResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in result.records:
        w.writerow([repr(v) if isinstance(v, float) else v
                    for v in (getattr(r, c) for c in CSV_COLUMNS)])
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run ``run.repeats`` seeds and write one CSV per seed. Returns an exit code."""
    out = Path(cfg["run.out"])
    repeats = cfg["run.repeats"]
    for k in range(repeats):
        seed = cfg["run.seed"] + k
        path = out if repeats == 1 else out.with_name(f"{out.stem}_seed{seed}{out.suffix}")
        try:
            result = execute(cfg, seed=seed)
        except DivergenceError as exc:
            logger.error("%s (seed %d)", exc, seed)
            return 2
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_csv(result))
        if result.records:
            last = result.records[-1]
            logger.info("seed %d: %d iterations, metric %.3e, IFO %d, rounds %d -> %s",
                        seed, cfg["algo.T"], last.metric_paper, result.counters.ifo_calls,
                        result.counters.comm_rounds, path)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="precision-minmax",
                                     description="Decentralized constrained min-max simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--algo", help=f"one of {', '.join(ALGORITHMS)}")
    run.add_argument("--T", type=int)
    run.add_argument("--repeats", type=int)
    run.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(**{
            "run.seed": args.seed, "run.out": args.out, "algo.name": args.algo,
            "algo.T": args.T, "run.repeats": args.repeats,
        })
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())
