"""Gradient-oscillation statistics: moving variance, smoothing and the ratio series."""

from __future__ import annotations

from collections import deque

import numpy as np

WINDOW = 500


class StatsError(ValueError):
    pass


class GradStats:
    """Streams of mean |gradient| with a moving variance and its moving average.

    The moving variance (population variance over the last ``window``
    samples) is defined once ``window`` samples have arrived; the smoothed
    series is the mean of the last ``smooth`` moving variances. Undefined
    entries are NaN. Variances are recomputed from the buffer each step so
    they equal the brute-force value exactly.
    """

    def __init__(self, window: int = WINDOW, smooth: int = WINDOW):
        if window < 1 or smooth < 1:
            raise StatsError("windows must be positive")
        self.window, self.smooth = window, smooth
        self._buf = deque(maxlen=window)
        self._mv = deque(maxlen=smooth)
        self.raw: list[float] = []
        self.movvar: list[float] = []
        self.filtered: list[float] = []
        self._n = 0
        self._mean = 0.0
        self._m2 = 0.0

    @property
    def warmup(self):
        return self.window + self.smooth - 2

    def record(self, mean_abs_grad: float):
        x = float(mean_abs_grad)
        self.raw.append(x)
        self._n += 1
        delta = x - self._mean
        self._mean += delta / self._n
        self._m2 += delta * (x - self._mean)
        self._buf.append(x)
        mv = float(np.var(np.fromiter(self._buf, float))) if len(self._buf) == self.window else float("nan")
        self.movvar.append(mv)
        if not np.isnan(mv):
            self._mv.append(mv)
        f = float(np.mean(np.fromiter(self._mv, float))) if len(self._mv) == self.smooth else float("nan")
        self.filtered.append(f)
        return mv, f

    @property
    def cv(self):
        """Coefficient of variation (std / mean) over the whole stream."""
        if self._n == 0 or self._mean == 0:
            return float("nan")
        return float(np.sqrt(self._m2 / self._n) / abs(self._mean))

    def series(self):
        """Smoothed moving variance after warm-up (length ``n - warmup``)."""
        return np.asarray(self.filtered[self.warmup :])


def moving_variance(x, window: int = WINDOW):
    """Variance of every full window, length ``len(x) - window + 1``."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) < window:
        return np.zeros(0)
    return np.lib.stride_tricks.sliding_window_view(x, window).var(axis=1)


def movvar_ratio(stats_orig: GradStats, stats_extra: GradStats):
    """Ratio of smoothed moving variances, original over extra-field run.

    Samples where either variance is zero or undefined are NaN (sentinel).
    """
    a, b = stats_orig.series(), stats_extra.series()
    if len(stats_orig.raw) != len(stats_extra.raw):
        raise StatsError(f"runs differ in length ({len(stats_orig.raw)} vs {len(stats_extra.raw)})")
    if (stats_orig.window, stats_orig.smooth) != (stats_extra.window, stats_extra.smooth):
        raise StatsError("runs use different windows")
    out = np.full(len(a), np.nan)
    ok = (a > 0) & (b > 0)
    out[ok] = a[ok] / b[ok]
    return out
