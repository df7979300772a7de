"""Run orchestration: build problem and ansatz from a config, train, evaluate, write artifacts.

Artifacts of one run (all numbers are deterministic given the config except
``timing.csv``)::

    config.json      normalised configuration
    metrics.csv      per-iteration losses, learning rate and gradient statistics
    timing.csv       per-iteration wall-clock milliseconds
    checkpoint.json  final parameters (plus checkpoints/ when requested)
    summary.json     final losses, hardness parameters and error metrics
"""

from __future__ import annotations

import csv
import importlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ansatz as an
from . import geometry as geo
from .config import ConfigError, RunConfig
from .problems import ProblemSpec, builtin, evaluate_metrics, load_reference
from .problems.metrics import compute_metrics
from .training import GradStats, Schedule, TrainingRun, make_points, movvar_ratio

log = logging.getLogger(__name__)


class RunError(RuntimeError):
    """A valid configuration failed while running."""


# ---------------------------------------------------------------------------
# building blocks


def build_problem(cfg: RunConfig) -> ProblemSpec:
    pc = cfg.problem
    try:
        if pc.name is not None:
            problem = builtin(pc.name, **pc.params)
        else:
            mod, _, fn = pc.factory.partition(":")
            problem = getattr(importlib.import_module(mod), fn)(**pc.params)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"problem.factory: cannot load {pc.factory!r} ({exc})") from None
    except TypeError as exc:
        raise ConfigError(f"problem.params: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from None
    if not isinstance(problem, ProblemSpec):
        raise ConfigError("problem.factory must return a ProblemSpec")
    problem.domain.distance_mode = cfg.distance.mode
    problem.domain.beta = cfg.distance.beta
    return problem


def build_ansatz(cfg: RunConfig, problem: ProblemSpec, mode: str | None = None, jet_ok: bool = False):
    mode = cfg.mode if mode is None else mode
    net = cfg.network
    if mode == "hard":
        try:
            return an.assemble(
                problem,
                beta_s=cfg.hardness.beta_s,
                beta_t=cfg.hardness.beta_t,
                seed=cfg.seed,
                main_hidden=net.main_hidden,
                sub_hidden=net.sub_hidden,
                n_probe=cfg.hardness.n_probe,
            )
        except an.AnsatzError as exc:
            raise ConfigError(f"mode 'hard': {exc}") from None
    if problem.time_horizon is not None and cfg.points.n_i is None:
        raise ConfigError(f"mode {mode!r} on a time-dependent problem needs points.n_i")
    if mode == "soft" and any(problem.layout.extra):
        if not jet_ok:
            raise ConfigError(
                f"mode 'soft' on {problem.name!r} needs second input derivatives; "
                "use 'soft_extra_fields' (or the ablate command)"
            )
        try:
            return an.soft_ansatz(problem, extra_fields=False, seed=cfg.seed, hidden=net.main_hidden)
        except an.AnsatzError as exc:
            raise ConfigError(str(exc)) from None
    return an.soft_ansatz(problem, extra_fields=True, seed=cfg.seed, hidden=net.main_hidden)


def make_schedule(cfg: RunConfig, constant_lr: bool = False, lbfgs: bool = True) -> Schedule:
    a = cfg.adam
    return Schedule(
        adam_iters=a.iters,
        lr=a.lr,
        lbfgs_iters=cfg.lbfgs.max_iters if lbfgs else 0,
        lbfgs_memory=cfg.lbfgs.memory,
        factor=a.factor,
        patience=a.patience,
        threshold=a.threshold,
        min_lr=a.min_lr,
        scheduler=a.scheduler and not constant_lr,
        checkpoint_every=cfg.checkpoint_every,
        stats_window=cfg.ablation.window,
    )


def _value_columns(ansatz):
    return ansatz.layout.u_index


def evaluate(cfg: RunConfig, problem: ProblemSpec, ansatz, flat):
    """Error metrics against the reference table or the analytic solution (None if neither)."""
    cols = _value_columns(ansatz)

    def predict(X, t):
        return ansatz.predict(X, t, flat=flat)[:, cols]

    if cfg.test.reference is not None:
        return _reference_metrics(cfg.test.reference, problem, predict)
    if not problem.has_solution:
        return None
    X = geo.sample_interior(problem.domain, cfg.test.n_points, cfg.test.seed)
    return evaluate_metrics(predict, problem.solution, X, problem.fields, problem.time_horizon)


def _reference_metrics(path, problem, predict):
    try:
        table = load_reference(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"test.reference: {exc}") from None
    missing = [f for f in table.field_names if f not in problem.fields]
    if missing:
        raise ConfigError(f"test.reference: no field named {missing[0]!r} in problem {problem.name!r}")
    if table.dim != problem.dim or table.has_time != (problem.time_horizon is not None):
        raise ConfigError("test.reference: coordinate columns do not match the problem")
    idx = [problem.fields.index(f) for f in table.field_names]
    X = table.coords[:, : table.dim]
    t = table.coords[:, table.dim] if table.has_time else None
    pred = predict(X, t)[:, idx]
    out = {"all": compute_metrics(pred, table.values, table.field_names)}
    if t is not None:
        for s in (0.0, 0.5, 1.0):
            sel = t == s * problem.time_horizon
            if np.any(sel):
                out[f"t={s:g}"] = compute_metrics(pred[sel], table.values[sel], table.field_names)
    return out


def boundary_report(cfg: RunConfig, problem: ProblemSpec, ansatz, flat, n=512):
    """Max boundary residual per region and the pointwise bound ``exp(-beta_s) M(x) + 1e-6``.

    For time-dependent problems the spatial part (before the initial-condition
    blend) is measured, since the blend itself is not boundary-consistent near
    ``t = 0``.
    """
    if not isinstance(ansatz, an.HardConstraintAnsatz):
        return None
    seeds = np.random.SeedSequence(cfg.test.seed).spawn(len(problem.domain.region_names) + 1)
    trng = np.random.default_rng(seeds[-1])
    out = {}
    for r, ss in zip(problem.domain.region_names, seeds):
        if not any(s.region == r for s in ansatz.slots):
            continue
        X, _ = geo.sample_boundary(problem.domain.regions[r], n, int(ss.generate_state(1)[0]))
        t = None if problem.time_horizon is None else trng.uniform(0.0, problem.time_horizon, n)
        res = ansatz.boundary_residuals(X, t, flat=flat, region=r, blend=False)
        worst = np.max(np.stack(list(res.values())), axis=0)
        bound = np.exp(-ansatz.beta_s) * ansatz.residual_bound(X, t, flat=flat, region=r) + 1e-6
        out[r] = {
            "max_residual": float(worst.max()),
            "max_bound": float(bound.max()),
            "within_bound": bool(np.all(worst <= bound)),
        }
    return out


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _meta(cfg, problem, mode):
    return {"problem": problem.name, "mode": mode, "seed": cfg.seed}


# ---------------------------------------------------------------------------
# commands


@dataclass
class RunOutcome:
    summary: dict
    out_dir: Path
    flat: np.ndarray
    ansatz: object
    problem: ProblemSpec


def run(cfg: RunConfig, out_dir=None) -> RunOutcome:
    out = Path(out_dir) if out_dir is not None else cfg.resolved_output_dir()
    problem = build_problem(cfg)
    ansatz = build_ansatz(cfg, problem)
    points = make_points(ansatz, cfg.points.n_f, cfg.points.n_b, cfg.points.n_i, cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    log.info("run %s (%s), %d parameters -> %s", problem.name, cfg.mode, ansatz.params.size, out)
    trainer = TrainingRun(ansatz, points, make_schedule(cfg), out, _meta(cfg, problem, cfg.mode))
    result = _train(trainer)
    summary = {
        "problem": problem.name,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "n_params": int(ansatz.params.size),
        "adam_iters": cfg.adam.iters,
        "final_lr": result.final_lr,
        "final_loss": result.final.groups,
        "final_total": result.final.total,
        "lbfgs": None
        if result.lbfgs is None
        else {"iterations": result.lbfgs.n_iter, "reason": result.lbfgs.reason, "loss": result.lbfgs.f},
        "grad_cv": None if result.stats is None else result.stats.cv,
        "metrics": evaluate(cfg, problem, ansatz, result.flat),
    }
    if isinstance(ansatz, an.HardConstraintAnsatz):
        summary["hardness"] = {
            "beta_s": ansatz.beta_s,
            "beta_t": ansatz.beta_t,
            "alphas": ansatz.alphas,
            "offregion_min": {k: (None if np.isinf(v) else v) for k, v in ansatz.offregion_min.items()},
            "offregion_estimator": f"boundary sampling, n_probe={cfg.hardness.n_probe}",
        }
        summary["boundary"] = boundary_report(cfg, problem, ansatz, result.flat)
    _write_json(out / "summary.json", summary)
    return RunOutcome(summary, out, result.flat, ansatz, problem)


def _train(trainer):
    try:
        return trainer.run()
    except (FloatingPointError, ArithmeticError, geo.SamplingError) as exc:
        raise RunError(str(exc)) from exc


@dataclass
class AblationOutcome:
    ratio: np.ndarray
    summary: dict
    out_dir: Path
    stats: dict


def ablate(cfg: RunConfig, out_dir=None) -> AblationOutcome:
    """Train the two soft arms with identical seeds and compare gradient oscillation."""
    out = Path(out_dir) if out_dir is not None else cfg.resolved_output_dir()
    if cfg.points.n_b is None:
        raise ConfigError("ablate trains soft models; set points.n_b (and points.n_i for time-dependent problems)")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    arms = {"plain": cfg.ablation.plain_mode, "extra": cfg.ablation.extra_mode}
    stats = {}
    finals = {}
    for arm, mode in arms.items():
        problem = build_problem(cfg)
        ansatz = build_ansatz(cfg, problem, mode=mode, jet_ok=True)
        points = make_points(ansatz, cfg.points.n_f, cfg.points.n_b, cfg.points.n_i, cfg.seed)
        sched = make_schedule(cfg, constant_lr=cfg.ablation.constant_lr, lbfgs=False)
        log.info("ablation arm %s (%s), %d parameters", arm, mode, ansatz.params.size)
        res = _train(TrainingRun(ansatz, points, sched, out / arm, _meta(cfg, problem, mode)))
        stats[arm] = res.stats
        finals[arm] = {
            "mode": mode,
            "final_loss": res.final.groups,
            "grad_cv": res.stats.cv,
            "metrics": evaluate(cfg, problem, ansatz, res.flat),
        }
    ratio = movvar_ratio(stats["plain"], stats["extra"])
    warm = stats["plain"].warmup
    with open(out / "ratio.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iteration", "movvar_plain", "movvar_extra", "ratio"])
        a, b = stats["plain"].series(), stats["extra"].series()
        for i, (x, y, r) in enumerate(zip(a, b, ratio)):
            w.writerow([warm + 1 + i, repr(float(x)), repr(float(y)), "" if np.isnan(r) else repr(float(r))])
    ok = ratio[~np.isnan(ratio)]
    summary = {
        "problem": cfg.problem.name or cfg.problem.factory,
        "iterations": cfg.adam.iters,
        "warmup": warm,
        "n_samples": int(len(ratio)),
        "n_undefined": int(np.isnan(ratio).sum()),
        "fraction_above_one": float(np.mean(ok > 1)) if len(ok) else None,
        "median_ratio": float(np.median(ok)) if len(ok) else None,
        "arms": finals,
    }
    _write_json(out / "ablation.json", summary)
    return AblationOutcome(ratio, summary, out, stats)


def _slice_metrics(metrics):
    if not metrics:
        return {}
    key = "average" if "average" in metrics else "all"
    return metrics[key]


def sweep(cfg: RunConfig, beta_s, beta_t, out_dir=None) -> list[dict]:
    """One run per (beta_s, beta_t) cell with the same seed; writes ``sweep.csv``."""
    beta_s, beta_t = list(beta_s), list(beta_t)
    if not beta_s or not beta_t:
        raise ConfigError("sweep needs at least one beta_s and one beta_t value")
    if cfg.mode != "hard":
        raise ConfigError("sweep varies the hardness parameters; it needs mode 'hard'")
    out = Path(out_dir) if out_dir is not None else cfg.resolved_output_dir()
    rows = []
    for bs in beta_s:
        for bt in beta_t:
            cell = cfg.with_overrides(hardness={"beta_s": float(bs), "beta_t": float(bt)})
            res = run(cell, out / f"bs{bs:g}_bt{bt:g}")
            row = {"beta_s": float(bs), "beta_t": float(bt), "final_total": res.summary["final_total"]}
            for field, m in _slice_metrics(res.summary["metrics"]).items():
                for k, v in m.items():
                    row[f"{field}_{k}"] = v
            boundary = res.summary.get("boundary") or {}
            row["max_bc_residual"] = max((b["max_residual"] for b in boundary.values()), default=0.0)
            rows.append(row)
    cols = list(rows[0])
    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(float(r[c])) for c in cols])
    return rows
