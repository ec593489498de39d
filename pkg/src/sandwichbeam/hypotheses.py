"""Feedback-gain hypotheses and theoretical decay constants.

The stabilized system dissipates energy through three boundary channels.
Channel i couples the instantaneous trace velocity and its delayed value
through a symmetric 2x2 quadratic form; the gain conditions below are
exactly the requirement that this form is negative definite for every
admissible delay slope d in [0, d_i].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

__all__ = [
    "BoundaryQuadForm",
    "HypothesisCheck",
    "HypothesisReport",
    "TheoreticalRates",
    "InfeasibleRates",
    "phi_matrix",
    "is_negative_definite",
    "gain_threshold",
    "validate_gains",
    "young_trace_constants",
    "compute_mu4",
    "compute_zeta",
    "lambda_bound",
    "perturbed_form",
    "select_mus",
    "decay_bound",
]


@dataclass(frozen=True)
class BoundaryQuadForm:
    """Symmetric 2x2 form acting on (trace velocity, delayed trace velocity)."""

    m11: float
    m12: float
    m22: float
    channel: int

    @property
    def det(self):
        return self.m11 * self.m22 - self.m12 * self.m12

    def value(self, trace, delayed):
        return (
            self.m11 * trace * trace
            + 2.0 * self.m12 * trace * delayed
            + self.m22 * delayed * delayed
        )


def phi_matrix(i, d, params, gains):
    """Boundary dissipation form of channel i for delay slope d in [0, 1).

    Entries: [[-2*C_i*alpha_i + |beta_i|, -C_i*beta_i],
              [-C_i*beta_i,               |beta_i|*(d - 1)]]
    with C_1 = E1h1, C_2 = E3h3, C_3 = EI.
    """
    if i not in (1, 2, 3):
        raise ValueError(f"channel must be 1, 2 or 3, got {i!r}")
    if not 0.0 <= d < 1.0:
        raise ValueError(f"delay slope d must lie in [0, 1), got {d!r}")
    c = params.boundary_stiffness[i - 1]
    a = gains.alphas[i - 1]
    b = gains.betas[i - 1]
    return BoundaryQuadForm(
        m11=-2.0 * c * a + abs(b),
        m12=-c * b,
        m22=abs(b) * (d - 1.0),
        channel=i,
    )


def is_negative_definite(form):
    """Sylvester criterion for a symmetric 2x2 form."""
    return form.m11 < 0.0 and form.det > 0.0


def gain_threshold(i, d, params, gains):
    """Minimal alpha_i making the channel-i form negative definite at slope d."""
    c = params.boundary_stiffness[i - 1]
    b = gains.betas[i - 1]
    return (abs(b) / (2.0 * c)) * ((c * c + 1.0 - d) / (1.0 - d))


@dataclass(frozen=True)
class HypothesisCheck:
    condition_id: str
    lhs: float
    rhs: float
    margin: float
    passed: bool

    def as_dict(self):
        return {
            "condition_id": self.condition_id,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "pass": self.passed,
        }


@dataclass(frozen=True)
class HypothesisReport:
    conditions: tuple

    @property
    def all_passed(self):
        return all(c.passed for c in self.conditions)

    def failing(self):
        return [c for c in self.conditions if not c.passed]

    def to_json(self, indent=None):
        return json.dumps({"conditions": [c.as_dict() for c in self.conditions]}, indent=indent)


def validate_gains(params, gains, delays):
    """Check the three strict gain conditions alpha_i > threshold(d_i).

    Equality counts as failure.  Raises ValueError when any declared delay
    slope bound d_i reaches 1 (the delayed argument would stop increasing
    and the whole framework breaks down).
    """
    checks = []
    for i in (1, 2, 3):
        d = delays.slope_bound(i - 1)
        if d >= 1.0:
            raise ValueError(f"channel {i}: delay slope bound d = {d} >= 1")
        lhs = gains.alphas[i - 1]
        rhs = gain_threshold(i, d, params, gains)
        checks.append(
            HypothesisCheck(
                condition_id=f"gain_channel_{i}",
                lhs=lhs,
                rhs=rhs,
                margin=lhs - rhs,
                passed=lhs > rhs,
            )
        )
    return HypothesisReport(conditions=tuple(checks))


def young_trace_constants(params, eps=0.5):
    """Constants C_i in |C_i-weighted trace product| <= eps*||.||^2 + C*trace^2.

    The boundary displacement obeys |u(L)| <= sqrt(L)*||u_x|| (vanishing at
    x = 0), so the product split a*b <= eps*a^2 + b^2/(4 eps) yields
    C_i = stiffness_i * L / (4 eps).
    """
    return tuple(c * params.L / (4.0 * eps) for c in params.boundary_stiffness)


def compute_mu4(params, mu0, mu1, mu2, mu3):
    """Equivalence constant of the energy-comparable Lyapunov functional.

    Uses the sharp one-sided Poincare constant (2L/pi)^2 for fields pinned
    only at x = 0 and the bending constant L^4/pi^4 (valid for the
    clamped-pinned transverse field).
    """
    L = params.L
    pi2 = math.pi * math.pi
    return max(
        mu0,
        4.0 * mu0 * params.rho1h1 * L * L / (params.E1h1 * pi2),
        4.0 * mu0 * params.rho3h3 * L * L / (params.E3h3 * pi2),
        mu0 * params.rhoh * L ** 4 / (params.EI * pi2 * pi2),
        mu1,
        mu2,
        mu3,
    )


def compute_zeta(mu4):
    """Prefactor (1 + mu4)/(1 - mu4) of the decay bound; requires mu4 < 1."""
    if not mu4 < 1.0:
        raise ValueError(f"mu4 = {mu4} must be < 1")
    return (1.0 + mu4) / (1.0 - mu4)


def lambda_bound(params, damping, mu0):
    """min{mu0, 2(a0_i/mass_i - mu0)} over the three field equations."""
    floors = damping.floors
    masses = params.mass_coefficients
    return min([mu0] + [2.0 * (a0 / m - mu0) for a0, m in zip(floors, masses)])


def perturbed_form(i, params, gains, delays, mu0, mu_i, eps=0.5):
    """Channel-i boundary form after absorbing the Lyapunov cross terms.

    Adds mu0*C_eps*[[a^2, a b], [a b, b^2]] (Young split of the boundary
    product) and mu_i*|b|*[[1, 0], [0, 0]] (delay-line derivative) on top of
    the worst-slope dissipation form.
    """
    d = delays.slope_bound(i - 1)
    phi = phi_matrix(i, d, params, gains)
    ceps = young_trace_constants(params, eps)[i - 1]
    a = gains.alphas[i - 1]
    b = gains.betas[i - 1]
    return BoundaryQuadForm(
        m11=phi.m11 + mu0 * ceps * a * a + mu_i * abs(b),
        m12=phi.m12 + mu0 * ceps * a * b,
        m22=phi.m22 + mu0 * ceps * b * b,
        channel=i,
    )


@dataclass(frozen=True)
class TheoreticalRates:
    """Certified decay data: E(t) <= zeta * exp(-lam*t/(1+mu4)) * E(0)."""

    mu0: float
    mu1: float
    mu2: float
    mu3: float
    mu4: float
    lam: float
    zeta: float

    @property
    def rate(self):
        return self.lam / (1.0 + self.mu4)

    @property
    def mus(self):
        return (self.mu0, self.mu1, self.mu2, self.mu3)


class InfeasibleRates(RuntimeError):
    """No admissible Lyapunov weights were found; carries the binding constraint."""


def _feasible(params, gains, delays, damping, mu0):
    """Return (mu1..mu3, mu4) if mu0 admits a valid weight set, else (None, reason)."""
    mus = tuple(
        2.0 * mu0 * delays.cap(i) / (1.0 - delays.slope_bound(i)) for i in range(3)
    )
    mu4 = compute_mu4(params, mu0, *mus)
    if not mu4 < 1.0:
        return None, f"mu4 = {mu4:.6g} >= 1 at mu0 = {mu0:.6g}"
    if lambda_bound(params, damping, mu0) <= 0.0:
        return None, f"lambda <= 0 at mu0 = {mu0:.6g}"
    for i in (1, 2, 3):
        pi_form = perturbed_form(i, params, gains, delays, mu0, mus[i - 1])
        if gains.betas[i - 1] == 0.0:
            ok = pi_form.m11 < 0.0
        else:
            ok = is_negative_definite(pi_form)
        if not ok:
            return None, f"perturbed boundary form of channel {i} not negative definite"
    return (mus, mu4), ""


def select_mus(params, delays, damping, gains, max_halvings=60):
    """Search admissible Lyapunov weights by halving mu0 from min{a0/mass}/2.

    The candidate mu0 starts at half the smallest damping-to-mass ratio and
    is halved until every constraint holds: mu4 < 1, all perturbed boundary
    forms negative definite (first diagonal entry only when beta_i = 0), and
    mu_i = 2*mu0*M_i/(1 - d_i).  Raises InfeasibleRates after 60 halvings.
    """
    report = validate_gains(params, gains, delays)
    if not report.all_passed:
        bad = ", ".join(c.condition_id for c in report.failing())
        raise InfeasibleRates(f"gain hypotheses fail: {bad}")
    ratios = [a0 / m for a0, m in zip(damping.floors, params.mass_coefficients)]
    mu0 = min(ratios) / 2.0
    reason = ""
    for _ in range(max_halvings):
        found, reason = _feasible(params, gains, delays, damping, mu0)
        if found is not None:
            mus, mu4 = found
            lam = lambda_bound(params, damping, mu0)
            return TheoreticalRates(
                mu0=mu0,
                mu1=mus[0],
                mu2=mus[1],
                mu3=mus[2],
                mu4=mu4,
                lam=lam,
                zeta=compute_zeta(mu4),
            )
        mu0 /= 2.0
    raise InfeasibleRates(f"no admissible mu0 after {max_halvings} halvings; last: {reason}")


def decay_bound(t, E0, rates):
    """Certified envelope zeta * exp(-lam*t/(1+mu4)) * E0."""
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    if E0 < 0.0:
        raise ValueError("E0 must be nonnegative")
    return rates.zeta * math.exp(-rates.rate * t) * E0
