"""Adam then L-BFGS training with per-iteration metrics and checkpoints."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import network as nw
from .gradstats import GradStats
from .losses import LossBreakdown, PointSets, loss
from .optim import Adam, LbfgsResult, PlateauScheduler, check_finite, lbfgs

log = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "iteration",
    "phase",
    "lr",
    "total",
    "pde",
    "equilibrium",
    "bc",
    "ic",
    "mean_abs_grad",
    "mean_abs_pde_grad",
    "movvar",
]


@dataclass
class Schedule:
    adam_iters: int = 5000
    lr: float = 1e-3
    lbfgs_iters: int = 0
    lbfgs_memory: int = 50
    factor: float = 0.5
    patience: int = 100
    threshold: float = 1e-4
    min_lr: float = 1e-6
    scheduler: bool = True
    checkpoint_every: int = 0
    record_stats: bool = True
    stats_window: int = 500


@dataclass
class TrainResult:
    flat: np.ndarray
    final: LossBreakdown
    stats: GradStats | None
    lbfgs: LbfgsResult | None = None
    final_lr: float = 0.0
    losses: list = field(default_factory=list)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class TrainingRun:
    """Full-batch training of one ansatz on fixed point sets.

    When ``out_dir`` is given, ``metrics.csv`` (deterministic numbers only),
    ``timing.csv`` (wall-clock per iteration) and checkpoints are written there.
    """

    def __init__(self, ansatz, points: PointSets, schedule: Schedule, out_dir=None, meta=None):
        self.ansatz = ansatz
        self.points = points
        self.schedule = schedule
        self.out_dir = None if out_dir is None else Path(out_dir)
        self.meta = dict(meta or {})
        self._metrics = self._timing = None

    # -- output ------------------------------------------------------------
    def _open(self):
        if self.out_dir is None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._mf = open(self.out_dir / "metrics.csv", "w", newline="")
        self._tf = open(self.out_dir / "timing.csv", "w", newline="")
        self._metrics = csv.writer(self._mf, lineterminator="\n")
        self._timing = csv.writer(self._tf, lineterminator="\n")
        self._metrics.writerow(METRIC_COLUMNS)
        self._timing.writerow(["iteration", "phase", "wall_ms"])

    def _close(self):
        if self._metrics is not None:
            self._mf.close()
            self._tf.close()
            self._metrics = self._timing = None

    def _row(self, it, phase, lr, br: LossBreakdown, mag, mapg, mv, ms):
        if self._metrics is None:
            return
        self._metrics.writerow(
            [_fmt(v) for v in (it, phase, lr, br.total, br.pde_residual_sq, br.equilibrium_sq, br.bc_sq, br.ic_sq, mag, mapg, mv)]
        )
        self._timing.writerow([it, phase, f"{ms:.3f}"])

    def checkpoint(self, flat, name):
        if self.out_dir is None:
            return None
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        nw.save_checkpoint(path, self.ansatz.params.networks(flat), extra=self.meta)
        return path

    # -- phases ------------------------------------------------------------
    def run(self) -> TrainResult:
        sc = self.schedule
        flat = self.ansatz.params.flat.copy()
        stats = GradStats(sc.stats_window, sc.stats_window) if sc.record_stats else None
        adam = Adam(flat.size, sc.lr)
        sched = PlateauScheduler(sc.lr, sc.factor, sc.patience, sc.threshold, sc.min_lr)
        losses = []
        self._open()
        try:
            for it in range(1, sc.adam_iters + 1):
                t0 = time.perf_counter()
                res = loss(self.ansatz, self.points, flat, pde_gradient=sc.record_stats)
                check_finite(res.total, res.grad, f" at Adam iteration {it}")
                mag = float(np.mean(np.abs(res.grad)))
                mapg = mv = None
                if stats is not None:
                    mapg = float(np.mean(np.abs(res.pde_grad)))
                    mv, _ = stats.record(mapg)
                lr = adam.lr
                flat = adam.step(flat, res.grad)
                if sc.scheduler:
                    adam.lr = sched.update(res.total)
                losses.append(res.total)
                self._row(it, "adam", lr, res.breakdown, mag, mapg, mv, 1e3 * (time.perf_counter() - t0))
                if sc.checkpoint_every and it % sc.checkpoint_every == 0:
                    self.checkpoint(flat, f"checkpoints/iter_{it:06d}.json")
            result = None
            if sc.lbfgs_iters > 0:
                result = self._lbfgs(flat, sc.adam_iters, losses)
                flat = result.x
            final = loss(self.ansatz, self.points, flat, gradient=False).breakdown
        finally:
            self._close()
        self.checkpoint(flat, "checkpoint.json")
        return TrainResult(flat, final, stats, result, adam.lr, losses)

    def _lbfgs(self, flat, offset, losses):
        sc = self.schedule
        last = {}

        def fun_grad(x):
            r = loss(self.ansatz, self.points, x)
            last["res"] = r
            return r.total, r.grad

        def fun(x):
            v = loss(self.ansatz, self.points, x, gradient=False).total
            return v if np.isfinite(v) else np.inf

        clock = [time.perf_counter()]

        def callback(k, x, f, g):
            r = last["res"]
            now = time.perf_counter()
            self._row(offset + k, "lbfgs", "", r.breakdown, float(np.mean(np.abs(g))), None, None, 1e3 * (now - clock[0]))
            clock[0] = now
            losses.append(f)
            if sc.checkpoint_every and (offset + k) % sc.checkpoint_every == 0:
                self.checkpoint(x, f"checkpoints/iter_{offset + k:06d}.json")

        res = lbfgs(fun_grad, flat, max_iters=sc.lbfgs_iters, memory=sc.lbfgs_memory, fun=fun, callback=callback)
        log.info("L-BFGS stopped after %d iterations (%s)", res.n_iter, res.reason)
        return res
