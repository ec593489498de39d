"""Decay verification: dissipation identity, Lyapunov equivalence, rate fits.

Everything here is pure post-processing over a recorded trajectory.  The
dissipation check compares the per-step energy increments against the
boundary quadratic forms evaluated at the step midpoints, exactly where
the integrator sampled them, so the residual isolates the delay-integral
discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretize import VARIANT_STABILIZED

__all__ = [
    "DecayReport",
    "check_dissipation_identity",
    "lyapunov_trace",
    "fit_decay_rate",
    "check_theoretical_bound",
    "check_trace_estimates",
]


@dataclass(frozen=True)
class DecayReport:
    fitted_rate: float
    intercept: float
    r_squared: float
    theoretical_rate: float
    zeta: float
    violations: int
    max_dissipation_residual: float
    window: tuple

    def as_dict(self):
        return {
            "fitted_rate": self.fitted_rate,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "theoretical_rate": self.theoretical_rate,
            "zeta": self.zeta,
            "violations": self.violations,
            "max_dissipation_residual": self.max_dissipation_residual,
            "window": list(self.window),
        }


def _phi_value(c, alpha, beta, d, trace, delayed):
    # boundary form with the *actual* delay slope d (may be negative)
    m11 = -2.0 * c * alpha + abs(beta)
    m12 = -c * beta
    m22 = abs(beta) * (d - 1.0)
    return m11 * trace * trace + 2.0 * m12 * trace * delayed + m22 * delayed * delayed


def check_dissipation_identity(out, params, gains, delays=None, damping=None):
    """|dE/dt - (interior damping power + boundary forms)| per step."""
    if out.variant != VARIANT_STABILIZED or out.ledger is None:
        raise ValueError("dissipation check needs a stabilized run with a ledger")
    led = out.ledger
    n = len(led["t_mid"])
    cs = params.boundary_stiffness
    resid = np.empty(n)
    for k in range(n):
        rhs = -float(np.dot(led["a_mid"][k], led["vel_norms_mid"][k]))
        for i in range(3):
            rhs += 0.5 * _phi_value(
                cs[i],
                gains.alphas[i],
                gains.betas[i],
                led["dtau_mid"][k][i],
                led["trace_mid"][k][i],
                led["z_mid"][k][i],
            )
        lhs = (out.energy[k + 1] - out.energy[k]) / out.dt
        resid[k] = abs(lhs - rhs)
    return resid


def lyapunov_trace(out, sys_, rates, delays, gains):
    """L(t) = E + mu0 * sum rho<field, field_t> + sum mu_i delay tilts, at samples."""
    if out.variant != VARIANT_STABILIZED:
        raise ValueError("lyapunov trace is defined for the stabilized variant")
    idx = np.searchsorted(out.times, out.sample_times)
    energies = out.energy[idx]
    masses = sys_.params.mass_coefficients
    mus = (rates.mu1, rates.mu2, rates.mu3)
    rho = np.linspace(0.0, 1.0, out.delay_profiles.shape[-1])
    values = np.empty(len(idx))
    for k, (t, e) in enumerate(zip(out.sample_times, energies)):
        q = out.states_q[k]
        p = out.states_p[k]
        cross = 0.0
        for m, name in zip(masses, ("u", "v", "w")):
            blk = sys_.block(name)
            cross += m * float(np.dot(sys_.block_weights[name], q[blk] * p[blk]))
        tilt = 0.0
        for i in range(3):
            b = gains.betas[i]
            if b == 0.0:
                continue
            z = out.delay_profiles[k, i]
            tilt += (
                mus[i]
                * 0.5
                * abs(b)
                * delays.tau(i, t)
                * float(np.trapezoid((1.0 - rho) * z * z, rho))
            )
        values[k] = e + rates.mu0 * cross + tilt
    return values


def fit_decay_rate(times, energies, window, floor_ratio=1e-14):
    """Least-squares slope of ln E over the window; returns (omega, intercept, R^2).

    Samples below floor_ratio * E(0) are excluded (roundoff plateau); any
    nonpositive energy inside the window is an error.
    """
    times = np.asarray(times, dtype=float)
    energies = np.asarray(energies, dtype=float)
    t0, t1 = window
    mask = (times >= t0) & (times <= t1)
    if not np.any(mask):
        raise ValueError("empty fit window")
    e = energies[mask]
    t = times[mask]
    if np.any(e <= 0.0):
        raise ValueError("nonpositive energy inside the fit window")
    keep = e >= floor_ratio * energies[0]
    t, e = t[keep], e[keep]
    if len(t) < 2:
        raise ValueError("fewer than two usable samples in the fit window")
    y = np.log(e)
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, intercept), res, _, _ = np.linalg.lstsq(A, y, rcond=None)
    ybar = np.mean(y)
    ss_tot = float(np.sum((y - ybar) ** 2))
    ss_res = float(res[0]) if len(res) else float(np.sum((y - A @ [slope, intercept]) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return -slope, intercept, r2


def check_theoretical_bound(out, rates, window=None, slack=1.05, dissipation_residual=None):
    """Count samples violating E(t) <= slack * zeta * exp(-rate t) * E(0)."""
    e0 = out.energy[0]
    bound = slack * rates.zeta * np.exp(-rates.rate * out.times) * e0
    violations = int(np.sum(out.energy > bound))
    if window is None:
        t_end = out.times[-1]
        window = (0.2 * t_end, 0.9 * t_end)
    omega, intercept, r2 = fit_decay_rate(out.times, out.energy, window)
    return DecayReport(
        fitted_rate=omega,
        intercept=intercept,
        r_squared=r2,
        theoretical_rate=rates.rate,
        zeta=rates.zeta,
        violations=violations,
        max_dissipation_residual=(
            float(np.max(dissipation_residual)) if dissipation_residual is not None else float("nan")
        ),
        window=window,
    )


def check_trace_estimates(out, sys_, gains, damping=None):
    """Boundary-trace and initial-data estimates; returns sides and slack.

    ``trace_bound``: time-integrated trace energy (boundary velocities plus
    delayed endpoint values) against twice the initial energy.
    ``initial_bound``: initial state norm against the trajectory average,
    interior damping and weighted trace integrals.
    """
    if out.variant != VARIANT_STABILIZED:
        raise ValueError("trace estimates are defined for the stabilized variant")
    t = out.times
    T = t[-1]
    tr2 = out.trace_velocities ** 2
    z2 = out.delayed_traces ** 2 if out.delayed_traces is not None else np.zeros_like(tr2)
    trace_integrals = np.array([np.trapezoid(tr2[:, i], t) for i in range(3)])
    z_integrals = np.array([np.trapezoid(z2[:, i], t) for i in range(3)])

    lhs_trace = float(np.sum(trace_integrals) + np.sum(z_integrals))
    rhs_trace = 2.0 * float(out.energy[0])

    if out.field_energy is None:
        raise ValueError("run is missing the field-energy series")
    u0_norm_sq = 2.0 * float(out.field_energy[0])
    mean_term = float(np.trapezoid(2.0 * out.field_energy, t)) / T
    damping_term = 0.0
    if damping is not None and out.ledger is not None:
        sup_a = sum(damping.a(i, 0.0) for i in range(3))
        vel_integral = float(np.sum(out.ledger["vel_norms_mid"]) * out.dt)
        damping_term = 2.0 * sup_a * vel_integral
    cs = sys_.params.boundary_stiffness
    weighted_traces = sum(
        cs[i] * (2.0 * gains.alphas[i] + abs(gains.betas[i])) * trace_integrals[i]
        for i in range(3)
    )
    z_term = sum(abs(gains.betas[i]) * z_integrals[i] for i in range(3))
    rhs_initial = mean_term + damping_term + weighted_traces + z_term

    return {
        "trace_bound": {
            "lhs": lhs_trace,
            "rhs": rhs_trace,
            "slack": rhs_trace - lhs_trace,
            "holds": lhs_trace <= rhs_trace,
        },
        "initial_bound": {
            "lhs": u0_norm_sq,
            "rhs": rhs_initial,
            "slack": rhs_initial - u0_norm_sq,
            "holds": u0_norm_sq <= rhs_initial,
        },
    }
