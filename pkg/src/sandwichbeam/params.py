"""Physical coefficients, gains, delay laws and damping weights.

The model couples two longitudinal wave fields u, v (outer layers) to one
transverse bending field w through the shear strain -u + v + alpha*w_x.
Everything here is a plain immutable value object; all hypothesis checking
lives in :mod:`sandwichbeam.hypotheses`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "PhysicalParams",
    "ConstantDelay",
    "SinusoidalDelay",
    "DelaySpec",
    "ConstantDamping",
    "ExponentialDamping",
    "DampingSpec",
    "GainConfig",
]

_REL_TOL = 1e-12


@dataclass(frozen=True)
class PhysicalParams:
    """Composite beam coefficients (unit-free internally).

    rho1h1, E1h1   mass / stiffness coefficient of the first wave layer
    rho3h3, E3h3   same for the third layer
    rhoh, EI       mass / bending stiffness of the transverse field
    k              shear modulus of the core
    alpha          shear coupling length h2 + (h1 + h3)/2
    L              beam length
    """

    rho1h1: float
    E1h1: float
    rho3h3: float
    E3h3: float
    rhoh: float
    EI: float
    k: float
    alpha: float
    L: float

    def __post_init__(self):
        for name in ("rho1h1", "E1h1", "rho3h3", "E3h3", "rhoh", "EI", "k", "alpha", "L"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")

    @classmethod
    def from_layers(cls, rho, h, E, I, k, L):
        """Build composites from per-layer data.

        rho, h, E are length-3 sequences (layers 1, 2, 3); I is indexed the
        same way but only layers 1 and 3 contribute stiffness.  Enforces
        rhoh = sum(rho_i h_i), EI = E1*I1 + E3*I3, alpha = h2 + (h1+h3)/2.
        """
        rho1, rho2, rho3 = rho
        h1, h2, h3 = h
        E1, _, E3 = E
        I1, _, I3 = I
        return cls(
            rho1h1=rho1 * h1,
            E1h1=E1 * h1,
            rho3h3=rho3 * h3,
            E3h3=E3 * h3,
            rhoh=rho1 * h1 + rho2 * h2 + rho3 * h3,
            EI=E1 * I1 + E3 * I3,
            k=k,
            alpha=h2 + 0.5 * (h1 + h3),
            L=L,
        )

    def check_layer_consistency(self, rho, h, E, I):
        """Verify that given layer data reproduces the stored composites.

        Returns a list of (name, stored, recomputed) mismatches; empty if
        everything agrees to relative tolerance 1e-12.
        """
        rho1, rho2, rho3 = rho
        h1, h2, h3 = h
        E1, _, E3 = E
        I1, _, I3 = I
        expected = {
            "rho1h1": rho1 * h1,
            "E1h1": E1 * h1,
            "rho3h3": rho3 * h3,
            "E3h3": E3 * h3,
            "rhoh": rho1 * h1 + rho2 * h2 + rho3 * h3,
            "EI": E1 * I1 + E3 * I3,
            "alpha": h2 + 0.5 * (h1 + h3),
        }
        bad = []
        for name, value in expected.items():
            stored = getattr(self, name)
            if abs(stored - value) > _REL_TOL * max(abs(stored), abs(value)):
                bad.append((name, stored, value))
        return bad

    @property
    def mass_coefficients(self):
        """(rho1h1, rho3h3, rhoh) in channel order."""
        return (self.rho1h1, self.rho3h3, self.rhoh)

    @property
    def boundary_stiffness(self):
        """(E1h1, E3h3, EI): the trace weights of the three feedback channels."""
        return (self.E1h1, self.E3h3, self.EI)


@dataclass(frozen=True)
class ConstantDelay:
    """Time-independent delay tau(t) = value."""

    value: float

    def __post_init__(self):
        if not self.value > 0.0:
            raise ValueError(f"delay must be positive, got {self.value!r}")

    def tau(self, t):
        return self.value

    def dtau(self, t):
        return 0.0 * t if hasattr(t, "shape") else 0.0

    @property
    def floor(self):
        return self.value

    @property
    def cap(self):
        return self.value

    @property
    def slope_bound(self):
        return 0.0


@dataclass(frozen=True)
class SinusoidalDelay:
    """tau(t) = base + amplitude*sin(frequency*t); twice differentiable.

    The analytic slope bound is |amplitude*frequency|, which must stay
    below 1 for the delayed argument t - tau(t) to be increasing.
    """

    base: float
    amplitude: float
    frequency: float

    def __post_init__(self):
        if not self.base - abs(self.amplitude) > 0.0:
            raise ValueError("delay floor base - |amplitude| must be positive")
        # a slope bound >= 1 is representable so the validator can report it
        # as a failed hypothesis; the integrator refuses to run with it

    def tau(self, t):
        return self.base + self.amplitude * math.sin(self.frequency * t)

    def dtau(self, t):
        return self.amplitude * self.frequency * math.cos(self.frequency * t)

    @property
    def floor(self):
        return self.base - abs(self.amplitude)

    @property
    def cap(self):
        return self.base + abs(self.amplitude)

    @property
    def slope_bound(self):
        return abs(self.amplitude * self.frequency)


@dataclass(frozen=True)
class DelaySpec:
    """One delay law per feedback channel (u, v, w_x traces at x = L)."""

    channels: tuple

    def __post_init__(self):
        if len(self.channels) != 3:
            raise ValueError("DelaySpec needs exactly three channels")

    def tau(self, i, t):
        return self.channels[i].tau(t)

    def dtau(self, i, t):
        return self.channels[i].dtau(t)

    def floor(self, i):
        return self.channels[i].floor

    def cap(self, i):
        return self.channels[i].cap

    def slope_bound(self, i):
        return self.channels[i].slope_bound

    @property
    def min_floor(self):
        return min(c.floor for c in self.channels)

    def check_sampled(self, horizon, n=257):
        """Assert the declared bounds hold on a sample grid of [0, horizon]."""
        for i, c in enumerate(self.channels):
            for j in range(n):
                t = horizon * j / (n - 1)
                tau = c.tau(t)
                if not (c.floor - 1e-12 <= tau <= c.cap + 1e-12):
                    raise AssertionError(f"channel {i+1}: tau({t}) = {tau} outside bounds")
                if not c.dtau(t) <= c.slope_bound + 1e-12:
                    raise AssertionError(f"channel {i+1}: dtau({t}) above declared bound")

    @classmethod
    def constant(cls, tau1, tau2=None, tau3=None):
        tau2 = tau1 if tau2 is None else tau2
        tau3 = tau1 if tau3 is None else tau3
        return cls((ConstantDelay(tau1), ConstantDelay(tau2), ConstantDelay(tau3)))


@dataclass(frozen=True)
class ConstantDamping:
    """a(t) = value > 0."""

    value: float

    def __post_init__(self):
        if not self.value > 0.0:
            raise ValueError("damping weight must be positive")

    def a(self, t):
        return self.value

    @property
    def floor(self):
        return self.value


@dataclass(frozen=True)
class ExponentialDamping:
    """a(t) = floor + (initial - floor) * exp(-rate*t), non-increasing to a floor."""

    floor_value: float
    initial: float
    rate: float

    def __post_init__(self):
        if not self.floor_value > 0.0:
            raise ValueError("damping floor must be positive")
        if self.initial < self.floor_value:
            raise ValueError("initial damping below floor would be increasing")
        if self.rate < 0.0:
            raise ValueError("decay rate must be nonnegative")

    def a(self, t):
        return self.floor_value + (self.initial - self.floor_value) * math.exp(-self.rate * t)

    @property
    def floor(self):
        return self.floor_value


@dataclass(frozen=True)
class DampingSpec:
    """Interior damping weights a_i(t), one per field equation."""

    channels: tuple

    def __post_init__(self):
        if len(self.channels) != 3:
            raise ValueError("DampingSpec needs exactly three channels")

    def a(self, i, t):
        return self.channels[i].a(t)

    def floor(self, i):
        return self.channels[i].floor

    @property
    def floors(self):
        return tuple(c.floor for c in self.channels)

    @classmethod
    def constant(cls, a1, a2=None, a3=None):
        a2 = a1 if a2 is None else a2
        a3 = a1 if a3 is None else a3
        return cls((ConstantDamping(a1), ConstantDamping(a2), ConstantDamping(a3)))


@dataclass(frozen=True)
class GainConfig:
    """Boundary feedback gains: instantaneous alpha_i and delayed beta_i."""

    alpha1: float
    beta1: float
    alpha2: float
    beta2: float
    alpha3: float
    beta3: float

    @property
    def alphas(self):
        return (self.alpha1, self.alpha2, self.alpha3)

    @property
    def betas(self):
        return (self.beta1, self.beta2, self.beta3)

    @property
    def any_delayed(self):
        return any(b != 0.0 for b in self.betas)
