"""Error metrics against analytic or tabulated truth."""

from __future__ import annotations

import numpy as np

DEFAULT_SLICES = (0.0, 0.5, 1.0)


class MetricsError(ValueError):
    pass


def field_metrics(pred, truth) -> dict:
    """MAE, MAPE (over non-zero truth values) and WMAPE for one field."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise MetricsError(f"prediction shape {pred.shape} differs from truth {truth.shape}")
    err = np.abs(pred - truth)
    nz = truth != 0
    mape = float(np.mean(err[nz] / np.abs(truth[nz]))) if np.any(nz) else float("nan")
    denom = np.sum(np.abs(truth))
    wmape = float(np.sum(err) / denom) if denom > 0 else float("nan")
    return {"mae": float(np.mean(err)), "mape": mape, "wmape": wmape}


def compute_metrics(pred, truth, names) -> dict:
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if pred.shape[1] != len(names) or truth.shape[1] != len(names):
        raise MetricsError("column count does not match the field names")
    return {nm: field_metrics(pred[:, i], truth[:, i]) for i, nm in enumerate(names)}


def evaluate_metrics(predict, truth, X, names, time_horizon=None, slices=DEFAULT_SLICES, n_average=11):
    """Metrics per field; time-dependent problems get one entry per slice.

    ``predict(X, t)`` and ``truth(X, t)`` return (N, n_fields) arrays.
    Slices are fractions of the time horizon; ``"average"`` pools a uniform
    grid of ``n_average`` times over the horizon.
    """
    X = np.asarray(X, dtype=np.float64)
    if time_horizon is None:
        return {"all": compute_metrics(predict(X, None), truth(X, None), names)}
    out = {}
    for s in slices:
        t = np.full(len(X), s * time_horizon)
        out[_slice_key(s)] = compute_metrics(predict(X, t), truth(X, t), names)
    preds, truths = [], []
    for t0 in np.linspace(0.0, time_horizon, n_average):
        t = np.full(len(X), t0)
        preds.append(predict(X, t))
        truths.append(truth(X, t))
    out["average"] = compute_metrics(np.concatenate(preds), np.concatenate(truths), names)
    return out


def _slice_key(s):
    return f"t={s:g}"
