"""Adam with a plateau scheduler, and L-BFGS with Armijo backtracking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when a loss or gradient stops being finite."""


def check_finite(loss, grad, where=""):
    if not np.isfinite(loss):
        raise NonFiniteError(f"non-finite loss {loss!r}{where}")
    bad = ~np.isfinite(grad)
    if np.any(bad):
        raise NonFiniteError(f"non-finite gradient in {int(bad.sum())} of {grad.size} entries{where}")


class Adam:
    def __init__(self, n: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, theta, grad):
        """Bias-corrected update; returns the new parameter vector."""
        if grad.shape != self.m.shape:
            raise ValueError(f"gradient has shape {grad.shape}, expected {self.m.shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError("non-finite gradient passed to Adam")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m = b1 * self.m + (1 - b1) * grad
        self.v = b2 * self.v + (1 - b2) * grad * grad
        mhat = self.m / (1 - b1**self.t)
        vhat = self.v / (1 - b2**self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` steps without improvement.

    A loss counts as an improvement when it is below ``best * (1 - threshold)``.
    After a reduction the counter restarts; the rate never drops below ``min_lr``.
    """

    def __init__(self, lr, factor=0.5, patience=100, threshold=1e-4, min_lr=1e-6):
        if not 0 < factor < 1:
            raise ValueError("factor must lie in (0, 1)")
        self.lr = lr
        self.factor, self.patience, self.threshold, self.min_lr = factor, patience, threshold, min_lr
        self.best = np.inf
        self.bad = 0
        self.reductions = 0

    def update(self, loss) -> float:
        if loss < self.best * (1 - self.threshold) or self.best == np.inf:
            self.best = loss
            self.bad = 0
        else:
            self.bad += 1
            if self.bad >= self.patience:
                new = max(self.lr * self.factor, self.min_lr)
                if new < self.lr:
                    self.reductions += 1
                self.lr = new
                self.bad = 0
        return self.lr


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    n_iter: int
    n_evals: int
    reason: str
    history: list = field(default_factory=list)


def _two_loop(g, S, Y, rho):
    q = g.copy()
    alpha = []
    for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
        a = r * (s @ q)
        alpha.append(a)
        q -= a * y
    if S:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for (s, y, r), a in zip(zip(S, Y, rho), reversed(alpha)):
        b = r * (y @ q)
        q += (a - b) * s
    return q


def lbfgs(
    fun_grad,
    x0,
    max_iters: int = 500,
    memory: int = 50,
    grad_tol: float = 1e-9,
    rel_tol: float = 1e-12,
    c1: float = 1e-4,
    max_backtracks: int = 40,
    fun=None,
    callback=None,
) -> LbfgsResult:
    """Minimise with L-BFGS (two-loop recursion, backtracking Armijo line search).

    ``fun_grad(x)`` returns ``(f, g)``; the optional ``fun(x)`` returns ``f``
    alone and is used for trial points of the line search. ``callback(k, x,
    f, g)`` runs after every accepted step. Stops when ``|g| < grad_tol``,
    when the relative loss change drops below ``rel_tol``, when no step
    satisfies the Armijo condition, or after ``max_iters`` iterations.
    """
    fun = fun or (lambda z: fun_grad(z)[0])
    x = np.array(x0, dtype=np.float64)
    f, g = fun_grad(x)
    check_finite(f, g, " at the L-BFGS start")
    n_evals = 1
    S, Y, rho = [], [], []
    history = [f]
    reason = "max_iters"
    k = 0
    while k < max_iters:
        if np.linalg.norm(g) < grad_tol:
            reason = "grad_tol"
            break
        d = -_two_loop(g, S, Y, rho)
        slope = g @ d
        if not slope < 0:
            S, Y, rho = [], [], []
            d = -g
            slope = g @ d
        step = 1.0 if S else min(1.0, 1.0 / max(np.abs(g).sum(), 1e-300))
        accepted = False
        for _ in range(max_backtracks):
            xn = x + step * d
            fn = fun(xn)
            n_evals += 1
            if np.isfinite(fn) and fn <= f + c1 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            reason = "line_search"
            break
        fn, gn = fun_grad(xn)
        n_evals += 1
        check_finite(fn, gn, f" at L-BFGS iteration {k + 1}")
        s, y = xn - x, gn - g
        sy = s @ y
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
            rho.append(1.0 / sy)
            if len(S) > memory:
                S.pop(0)
                Y.pop(0)
                rho.pop(0)
        change = abs(f - fn) / max(abs(f), abs(fn), 1e-300)
        x, f, g = xn, fn, gn
        k += 1
        history.append(f)
        if callback is not None:
            callback(k, x, f, g)
        if change < rel_tol:
            reason = "rel_tol"
            break
    return LbfgsResult(x, f, g, k, n_evals, reason, history)
