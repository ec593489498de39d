"""Implicit second-order time stepping for both semi-discrete variants.

The scheme is average-acceleration Newmark written in midpoint form: with
v_mid = (v_n + v_{n+1})/2 and q_mid = (q_n + q_{n+1})/2,

    M a = -K q_mid - C(t_mid) v_mid + F(t_mid),   v_{n+1} = v_n + dt*a.

For the undamped unforced system this conserves p'Mp + q'Kq exactly (up to
solver roundoff), and the damped energy balance

    E_{n+1} - E_n = dt * (-v_mid' C v_mid + v_mid' F)

holds as an algebraic identity, which is what the dissipation ledger
records.  Delayed boundary terms are evaluated at known past times (the
step rule dt <= min tau0 keeps them behind the current step), so every
step is one symmetric positive definite solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .delayline import eval_delayed, push, z_profile
from .discretize import (
    VARIANT_CONTROLLED,
    VARIANT_STABILIZED,
    DiscreteState,
    delay_energy_from_profiles,
)

__all__ = [
    "SchemeConfig",
    "SimOutput",
    "IntegrationError",
    "step_damped_delayed",
    "step_conservative_controlled",
    "simulate",
]

N_RHO_PANELS = 32


class IntegrationError(RuntimeError):
    """Linear-solve failure or non-finite state, with the offending step index."""


@dataclass(frozen=True)
class SchemeConfig:
    """Newmark average-acceleration settings (beta=1/4, gamma=1/2 fixed)."""

    dt: float
    T: float
    stride: int = 1
    solve_tol: float = 1e-12
    enforce_delay_safety: bool = True
    scheme: str = "newmark_average_acceleration"

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.T < 0.0:
            raise ValueError("T must be nonnegative")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def n_steps(self):
        return int(round(self.T / self.dt)) if self.T > 0.0 else 0


@dataclass
class SimOutput:
    """Trajectory record: per-step series, decimated states, dissipation ledger."""

    variant: str
    dt: float
    times: np.ndarray
    energy: np.ndarray
    trace_velocities: np.ndarray
    field_energy: np.ndarray = None
    displacement_traces: np.ndarray = None
    delayed_traces: np.ndarray = None
    sample_times: np.ndarray = None
    states_q: np.ndarray = None
    states_p: np.ndarray = None
    delay_profiles: np.ndarray = None
    ledger: dict = None

    @property
    def n_steps(self):
        return len(self.times) - 1

    def max_energy_increase(self):
        """Largest per-step energy increase (0 for a monotone run)."""
        if len(self.energy) < 2:
            return 0.0
        return float(max(0.0, np.max(np.diff(self.energy))))

    def relative_drift(self):
        """max |E(t) - E(0)| / E(0); the conservation figure of merit."""
        e0 = self.energy[0]
        if e0 == 0.0:
            return float(np.max(np.abs(self.energy)))
        return float(np.max(np.abs(self.energy - e0)) / e0)


class _ZeroGains:
    alphas = (0.0, 0.0, 0.0)
    betas = (0.0, 0.0, 0.0)
    any_delayed = False


def _control_midpoints(controls, n_steps, dt):
    """Sample controls at step midpoints; arrays are averaged endpoint pairs."""
    if controls is None:
        return np.zeros((n_steps, 3))
    if callable(controls):
        return np.array(
            [np.asarray(controls((n + 0.5) * dt), dtype=float) for n in range(n_steps)]
        )
    arr = np.asarray(controls, dtype=float)
    if arr.shape != (n_steps + 1, 3):
        raise ValueError(f"controls must have shape ({n_steps + 1}, 3), got {arr.shape}")
    return 0.5 * (arr[:-1] + arr[1:])


class _Stepper:
    """One factorization of the effective matrix, reused while C(t) is steady."""

    def __init__(self, sys_, dt, gains=None, damping=None):
        self.sys = sys_
        self.dt = dt
        self.gains = gains if gains is not None else _ZeroGains()
        self.damping = damping
        n = sys_.ndof
        self.feedback_diag = np.zeros(n)
        if sys_.variant == VARIANT_STABILIZED:
            cs = sys_.params.boundary_stiffness
            for c, a, t in zip(cs, self.gains.alphas, sys_.trace_vectors):
                self.feedback_diag += c * a * t * t
        self._factored_a = None
        self._factor = None

    def _damping_values(self, t):
        if self.damping is None:
            return (0.0, 0.0, 0.0)
        return tuple(self.damping.a(i, t) for i in range(3))

    def total_damping_diag(self, a_values):
        diag = self.feedback_diag.copy()
        if any(a != 0.0 for a in a_values):
            diag += self.sys.damping_diagonal(a_values)
        return diag

    def _factor_for(self, a_values):
        if self._factored_a is not None:
            prev = self._factored_a
            same = all(
                abs(a - b) <= 1e-14 * max(abs(a), abs(b), 1e-300)
                for a, b in zip(a_values, prev)
            )
            if same:
                return self._factor
        sys_, dt = self.sys, self.dt
        A = (0.25 * dt * dt) * sys_.K
        diag = sys_.M + 0.5 * dt * self.total_damping_diag(a_values)
        A[np.diag_indices_from(A)] += diag
        try:
            self._factor = cho_factor(A, lower=True)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - SPD by construction
            raise IntegrationError(f"effective matrix factorization failed: {exc}")
        self._factored_a = a_values
        return self._factor

    def advance(self, q0, v0, t, force_mid):
        """One midpoint step from t to t + dt; returns (q1, v1, a_mid, damping diag)."""
        dt = self.dt
        a_values = self._damping_values(t + 0.5 * dt)
        factor = self._factor_for(a_values)
        cdiag = self.total_damping_diag(a_values)
        rhs = force_mid - cdiag * v0 - self.sys.K @ (q0 + 0.5 * dt * v0)
        try:
            a = cho_solve(factor, rhs)
        except ValueError as exc:
            raise IntegrationError(f"linear solve rejected the state: {exc}")
        v1 = v0 + dt * a
        q1 = q0 + dt * v0 + 0.5 * dt * dt * a
        return q1, v1, a, a_values


def _delayed_force(sys_, gains, delays, histories, t):
    """-sum_i c_i * beta_i * z_i(1, t) * t_i, and the z values used."""
    n = sys_.ndof
    f = np.zeros(n)
    zs = np.zeros(3)
    cs = sys_.params.boundary_stiffness
    for i in range(3):
        b = gains.betas[i]
        if b == 0.0 or histories is None:
            continue
        zs[i] = eval_delayed(histories[i], i, t, delays)
        f -= cs[i] * b * zs[i] * sys_.trace_vectors[i]
    return f, zs


def _push_midpoint_traces(sys_, histories, t_mid, v_mid, dt):
    """Record midpoint trace samples into the delay lines.

    Midpoint sampling keeps the delayed feedback loop stable: the undamped
    grid-frequency modes of the conservative scheme average out at step
    midpoints, so they never re-enter through the history.  Slopes are
    backward differences of the recorded values themselves (the raw
    accelerations carry the unfiltered ringing and would reopen the loop
    through the Hermite terms).
    """
    vals = sys_.trace_velocities(v_mid)
    for i in range(3):
        hist = histories[i]
        hist.extension = 0.5 * dt * (1.0 + 1e-9)
        slope = (vals[i] - hist.last_value) / (t_mid - hist.last_time)
        push(hist, t_mid, vals[i], slope)


def step_damped_delayed(state, sys_, histories, t, cfg, gains, delays, damping=None):
    """One step of the stabilized delayed system; pushes new traces into histories."""
    if sys_.variant != VARIANT_STABILIZED:
        raise ValueError("step_damped_delayed needs a stabilized_delayed system")
    stepper = _Stepper(sys_, cfg.dt, gains=gains, damping=damping)
    force, _ = (
        _delayed_force(sys_, gains, delays, histories, t + 0.5 * cfg.dt)
        if gains.any_delayed
        else (np.zeros(sys_.ndof), np.zeros(3))
    )
    q1, v1, _, _ = stepper.advance(state.q, state.p, t, force)
    _check_finite(q1, v1, 0)
    if histories is not None:
        _push_midpoint_traces(sys_, histories, t + 0.5 * cfg.dt, 0.5 * (state.p + v1), cfg.dt)
    return DiscreteState(q=q1, p=v1, t=t + cfg.dt)


def step_conservative_controlled(state, sys_, t, cfg, controls=None):
    """One step of the controlled conservative system with controls f(t)."""
    if sys_.variant != VARIANT_CONTROLLED:
        raise ValueError("step_conservative_controlled needs a controlled_conservative system")
    stepper = _Stepper(sys_, cfg.dt)
    if controls is None:
        force = np.zeros(sys_.ndof)
    else:
        f_mid = np.asarray(controls(t + 0.5 * cfg.dt), dtype=float)
        force = sys_.control_columns @ f_mid
    q1, v1, _, _ = stepper.advance(state.q, state.p, t, force)
    _check_finite(q1, v1, 0)
    return DiscreteState(q=q1, p=v1, t=t + cfg.dt)


def _check_finite(q, v, step):
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
        raise IntegrationError(f"non-finite state at step {step}")


def simulate(initial, sys_, cfg, gains=None, delays=None, damping=None, histories=None, controls=None):
    """Advance the system over [0, T] and record the full trajectory ledger."""
    _check_finite(initial.q, initial.p, 0)
    if sys_.variant == VARIANT_STABILIZED:
        return _simulate_stabilized(initial, sys_, cfg, gains, delays, damping, histories)
    return _simulate_controlled(initial, sys_, cfg, controls)


def _sample_slots(n_steps, stride):
    slots = list(range(0, n_steps + 1, stride))
    if slots[-1] != n_steps:
        slots.append(n_steps)
    return slots


def _simulate_controlled(initial, sys_, cfg, controls):
    n_steps = cfg.n_steps
    dt = cfg.T / n_steps if n_steps else cfg.dt
    stepper = _Stepper(sys_, dt)
    f_mid = _control_midpoints(controls, n_steps, dt) if n_steps else np.zeros((0, 3))

    q = np.array(initial.q, dtype=float)
    v = np.array(initial.p, dtype=float)
    times = dt * np.arange(n_steps + 1)
    energy = np.empty(n_steps + 1)
    tr_vel = np.empty((n_steps + 1, 3))
    tr_disp = np.empty((n_steps + 1, 3))
    slots = _sample_slots(n_steps, cfg.stride)
    states_q = np.empty((len(slots), sys_.ndof))
    states_p = np.empty((len(slots), sys_.ndof))
    sample_at = {s: k for k, s in enumerate(slots)}

    def record(n):
        energy[n] = 0.5 * (np.dot(v, sys_.M * v) + q @ (sys_.K @ q))
        tr_vel[n] = sys_.trace_velocities(v)
        tr_disp[n] = sys_.displacement_traces(q)
        if n in sample_at:
            states_q[sample_at[n]] = q
            states_p[sample_at[n]] = v

    field_energy = energy

    record(0)
    zero_force = np.zeros(sys_.ndof)
    for n in range(n_steps):
        force = sys_.control_columns @ f_mid[n] if controls is not None else zero_force
        q, v, _, _ = stepper.advance(q, v, times[n], force)
        _check_finite(q, v, n + 1)
        record(n + 1)

    return SimOutput(
        variant=sys_.variant,
        dt=dt,
        times=times,
        energy=energy,
        field_energy=field_energy,
        trace_velocities=tr_vel,
        displacement_traces=tr_disp,
        sample_times=times[slots],
        states_q=states_q,
        states_p=states_p,
    )


def _simulate_stabilized(initial, sys_, cfg, gains, delays, damping, histories):
    gains = gains if gains is not None else _ZeroGains()
    if gains.any_delayed:
        if histories is None or delays is None:
            raise ValueError("delayed gains need trace histories and a delay spec")
        if any(delays.slope_bound(i) >= 1.0 for i in range(3)):
            raise ValueError("delay slope bound >= 1: delayed argument would not advance")
        if cfg.enforce_delay_safety and cfg.dt > delays.min_floor + 1e-15:
            raise ValueError(
                f"dt = {cfg.dt} exceeds the smallest delay floor {delays.min_floor}; "
                "delayed lookups would need current-step unknowns"
            )
    n_steps = cfg.n_steps
    dt = cfg.T / n_steps if n_steps else cfg.dt
    stepper = _Stepper(sys_, dt, gains=gains, damping=damping)

    q = np.array(initial.q, dtype=float)
    v = np.array(initial.p, dtype=float)
    times = dt * np.arange(n_steps + 1)
    energy = np.empty(n_steps + 1)
    field_energy = np.empty(n_steps + 1)
    tr_vel = np.empty((n_steps + 1, 3))
    z_series = np.zeros((n_steps + 1, 3))
    slots = _sample_slots(n_steps, cfg.stride)
    sample_at = {s: k for k, s in enumerate(slots)}
    states_q = np.empty((len(slots), sys_.ndof))
    states_p = np.empty((len(slots), sys_.ndof))
    profiles = np.zeros((len(slots), 3, N_RHO_PANELS + 1))
    ledger = {
        "t_mid": np.empty(n_steps),
        "a_mid": np.zeros((n_steps, 3)),
        "vel_norms_mid": np.zeros((n_steps, 3)),
        "trace_mid": np.zeros((n_steps, 3)),
        "z_mid": np.zeros((n_steps, 3)),
        "dtau_mid": np.zeros((n_steps, 3)),
    }
    betas = gains.betas

    def current_profiles(t):
        prof = np.zeros((3, N_RHO_PANELS + 1))
        if histories is not None and delays is not None:
            for i in range(3):
                if betas[i] != 0.0:
                    prof[i] = z_profile(histories[i], i, t, delays, N_RHO_PANELS)
        return prof

    def record(n, t):
        prof = current_profiles(t)
        taus = [delays.tau(i, t) for i in range(3)] if delays is not None else [0.0] * 3
        field_energy[n] = 0.5 * (np.dot(v, sys_.M * v) + q @ (sys_.K @ q))
        energy[n] = field_energy[n] + delay_energy_from_profiles(prof, taus, betas)
        tr_vel[n] = sys_.trace_velocities(v)
        z_series[n] = prof[:, -1]
        if n in sample_at:
            k = sample_at[n]
            states_q[k] = q
            states_p[k] = v
            profiles[k] = prof

    record(0, 0.0)
    for n in range(n_steps):
        t = times[n]
        t_mid = t + 0.5 * dt
        if gains.any_delayed:
            force, zs = _delayed_force(sys_, gains, delays, histories, t_mid)
        else:
            force, zs = np.zeros(sys_.ndof), np.zeros(3)
        q1, v1, _, a_values = stepper.advance(q, v, t, force)
        _check_finite(q1, v1, n + 1)
        v_mid = 0.5 * (v + v1)
        ledger["t_mid"][n] = t_mid
        ledger["a_mid"][n] = a_values
        ledger["vel_norms_mid"][n] = sys_.velocity_norms_sq(v_mid)
        ledger["trace_mid"][n] = sys_.trace_velocities(v_mid)
        ledger["z_mid"][n] = zs
        if delays is not None:
            ledger["dtau_mid"][n] = [delays.dtau(i, t_mid) for i in range(3)]
        if histories is not None:
            _push_midpoint_traces(sys_, histories, t_mid, v_mid, dt)
        q, v = q1, v1
        record(n + 1, times[n + 1])

    return SimOutput(
        variant=sys_.variant,
        dt=dt,
        times=times,
        energy=energy,
        field_energy=field_energy,
        trace_velocities=tr_vel,
        delayed_traces=z_series,
        sample_times=times[slots],
        states_q=states_q,
        states_p=states_p,
        delay_profiles=profiles,
        ledger=ledger,
    )
