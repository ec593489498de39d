"""Boundary-trace history with delayed lookups.

The delayed feedback needs trace velocities at t - tau_i(t), and the
delay-integral part of the energy needs the whole rescaled profile
z_i(rho, t) = trace_i(t - tau_i(t)*rho) on rho in [0, 1].  Both are served
by one time-stamped sample buffer per channel, interpolated with cubic
Hermite polynomials (slopes come from the recorded trace accelerations) or
linearly as a test fallback.  Because tau' <= d < 1, the delayed argument
is increasing, so samples older than the retention horizon can be evicted.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "LookupBeforeHistory",
    "TraceHistory",
    "init_history",
    "push",
    "eval_delayed",
    "z_profile",
    "dump_history_csv",
]


class LookupBeforeHistory(RuntimeError):
    """A delayed lookup reached past the retained samples: a scheme bug."""


class TraceHistory:
    """Ordered (t, value, slope) samples of one boundary trace.

    ``extension`` permits first-order Taylor continuation past the newest
    sample by at most that much; the integrator records samples at step
    midpoints (which filters out the undamped grid-frequency modes) and
    sets extension to half a step so endpoint lookups stay exact.
    """

    def __init__(self, channel, retention, interp="hermite", extension=0.0):
        if interp not in ("hermite", "linear"):
            raise ValueError(f"unknown interpolation mode {interp!r}")
        self.channel = channel
        self.retention = retention
        self.interp = interp
        self.extension = extension
        cap = 1024
        self._t = np.empty(cap)
        self._y = np.empty(cap)
        self._m = np.empty(cap)
        self._start = 0
        self._n = 0
        self._last_primary_theta = -np.inf

    def __len__(self):
        return self._n - self._start

    @property
    def times(self):
        return self._t[self._start : self._n]

    @property
    def values(self):
        return self._y[self._start : self._n]

    @property
    def slopes(self):
        return self._m[self._start : self._n]

    @property
    def last_time(self):
        return self._t[self._n - 1]

    @property
    def last_value(self):
        return self._y[self._n - 1]

    def _grow(self):
        if self._start > self._t.size // 2:
            # compact before reallocating: eviction only moved the start pointer
            live = self._n - self._start
            for arr in (self._t, self._y, self._m):
                arr[:live] = arr[self._start : self._n]
            self._n = live
            self._start = 0
        if self._n == self._t.size:
            for name in ("_t", "_y", "_m"):
                old = getattr(self, name)
                new = np.empty(old.size * 2)
                new[: self._n] = old[: self._n]
                setattr(self, name, new)

    def _append(self, t, value, slope):
        self._grow()
        self._t[self._n] = t
        self._y[self._n] = value
        self._m[self._n] = slope
        self._n += 1

    def interpolate(self, thetas):
        """Evaluate the trace at (an array of) past times."""
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        ts = self.times
        ys = self.values
        ms = self.slopes
        if thetas.min() < ts[0] - 1e-12:
            raise LookupBeforeHistory(
                f"channel {self.channel}: lookup at t={thetas.min():.6g} "
                f"before earliest retained sample t={ts[0]:.6g}"
            )
        if thetas.max() > ts[-1] + self.extension + 1e-12:
            raise LookupBeforeHistory(
                f"channel {self.channel}: lookup at t={thetas.max():.6g} "
                f"beyond newest sample t={ts[-1]:.6g} (+extension {self.extension:.3g})"
            )
        k = np.searchsorted(ts, thetas, side="right") - 1
        k = np.clip(k, 0, len(ts) - 2)
        h = ts[k + 1] - ts[k]
        s = np.clip((thetas - ts[k]) / h, 0.0, 1.0)
        y0, y1 = ys[k], ys[k + 1]
        if self.interp == "linear":
            out = y0 + s * (y1 - y0)
        else:
            m0, m1 = ms[k], ms[k + 1]
            s2 = s * s
            s3 = s2 * s
            out = (
                (2.0 * s3 - 3.0 * s2 + 1.0) * y0
                + (s3 - 2.0 * s2 + s) * h * m0
                + (-2.0 * s3 + 3.0 * s2) * y1
                + (s3 - s2) * h * m1
            )
        # exact passthrough at the newest sample; lookups inside the extension
        # window clamp to it (keeps the delay line on the recorded stream)
        tail = thetas >= ts[-1]
        if np.any(tail):
            out[tail] = ys[-1]
        return out


def init_history(channel, initial_fn, tau0, retention=None, n_samples=64, interp="hermite"):
    """Sample the initial trace function on [-tau0, 0] at uniform points.

    Slopes are recovered by second-order finite differences of the samples,
    good enough for the Hermite mode since the initial segment is only ever
    read, never extrapolated.
    """
    if not tau0 > 0.0:
        raise ValueError(f"initial delay must be positive, got {tau0!r}")
    hist = TraceHistory(channel, retention=tau0 if retention is None else retention, interp=interp)
    ts = np.linspace(-tau0, 0.0, n_samples)
    ys = np.array([float(initial_fn(t)) for t in ts])
    ms = np.gradient(ys, ts)
    for t, y, m in zip(ts, ys, ms):
        hist._append(t, y, m)
    return hist


def push(history, t, value, slope=None):
    """Append one sample; time must advance strictly; evict unreachable past."""
    if history._n - history._start > 0:
        last = history.last_time
        if not t > last:
            raise ValueError(f"non-monotone push: t={t!r} after t={last!r}")
        dt = t - last
    else:
        dt = 0.0
    if slope is None:
        if history.interp == "hermite":
            raise ValueError("hermite-mode history needs a slope with every push")
        slope = 0.0
    history._append(t, value, slope)
    if np.isfinite(history.retention):
        horizon = t - history.retention - 2.0 * dt
        ts = history._t
        while history._start < history._n - 1 and ts[history._start + 1] <= horizon:
            history._start += 1


def eval_delayed(history, channel, t, delays):
    """Trace value at the delayed argument theta = t - tau_i(t).

    Asserts that theta increases from call to call (guaranteed when the
    delay spec obeys tau' <= d < 1 and simulation time moves forward).
    """
    theta = t - delays.tau(channel, t)
    if theta < history._last_primary_theta - 1e-12:
        raise AssertionError(
            f"channel {channel}: delayed argument not increasing "
            f"({theta} after {history._last_primary_theta})"
        )
    history._last_primary_theta = theta
    return float(history.interpolate(theta)[0])


def z_profile(history, channel, t, delays, n_panels):
    """Rescaled delay profile z(rho_k, t) at rho_k = k/n_panels, k = 0..n_panels."""
    if t < 0.0:
        raise ValueError("profile requested before the run start")
    rho = np.linspace(0.0, 1.0, n_panels + 1)
    thetas = t - delays.tau(channel, t) * rho
    return history.interpolate(thetas)


def dump_history_csv(history, path):
    """Post-mortem dump: one (t, value, slope) row per retained sample."""
    with open(path, "w", newline="\n") as fh:
        fh.write("t,value,slope\n")
        for t, y, m in zip(history.times, history.values, history.slopes):
            fh.write(f"{t!r},{y!r},{m!r}\n")
    return path
