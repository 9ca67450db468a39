"""Reference test functions with analytic derivatives and certified integrals.

Compact C-infinity bumps and Gaussian profiles for the integral identities,
plus separable space-time test functions phi(t, x) = eta(t) psi(x) with a
smooth cutoff eta vanishing identically near the final time (compact
support in [0, T)). Reference integrals are frozen at construction from
adaptive quadrature, which keeps them independent of the grid sums they
are compared against.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc


def _sphere_area(d):
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _radial_integral(profile, d, upper):
    val, _ = quad(lambda s: profile(s) * s ** (d - 1), 0.0, upper, limit=200)
    return _sphere_area(d) * val


# ---------------------------------------------------------------------------
# spatial test functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialTestFunction:
    """Radial scalar test function with gradient and reference integral."""

    d: int
    support_radius: float        # inf for Gaussian profiles
    reference_integral: float
    _profile: Callable           # f(r)
    _dprofile: Callable          # f'(r) / r  (finite at r = 0)
    _tail: Callable              # mass outside a radius
    label: str = ""

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return self._profile(r)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return self._dprofile(r) * x

    def mass_outside(self, radius):
        return self._tail(radius)


def bump(d, radius=1.0, amplitude=1.0):
    """C-infinity bump amplitude * exp(1 - 1/(1 - (|x|/a)^2)) on |x| < a."""
    a = float(radius)
    amp = float(amplitude)

    def profile(r):
        r = np.asarray(r, dtype=float)
        s2 = (r / a) ** 2
        out = np.zeros(r.shape)
        inside = s2 < 1.0
        out[inside] = amp * np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
        return out

    def dprofile_over_r(r):
        # d/dr profile / r, smooth through r = 0
        r = np.asarray(r, dtype=float)
        s2 = (r / a) ** 2
        out = np.zeros(r.shape)
        inside = s2 < 1.0 - 1e-14
        denom = (1.0 - s2[inside]) ** 2
        out[inside] = profile(r[inside].ravel()).reshape(r[inside].shape) \
            * (-2.0 / (a * a)) / denom
        return out

    ref = _radial_integral(lambda s: float(profile(np.array([s]))[0]), d, a)

    def tail(radius_):
        if radius_ >= a:
            return 0.0
        val, _ = quad(lambda s: float(profile(np.array([s]))[0]) * s ** (d - 1),
                      radius_, a, limit=200)
        return _sphere_area(d) * val

    return RadialTestFunction(d=d, support_radius=a, reference_integral=ref,
                              _profile=profile, _dprofile=dprofile_over_r,
                              _tail=tail, label=f"bump(a={a:g})")


def gaussian(d, sigma=0.3, amplitude=1.0):
    """amplitude * exp(-|x|^2 / (2 sigma^2)); analytic integral and tails."""
    sig = float(sigma)
    amp = float(amplitude)

    def profile(r):
        r = np.asarray(r, dtype=float)
        return amp * np.exp(-0.5 * (r / sig) ** 2)

    def dprofile_over_r(r):
        r = np.asarray(r, dtype=float)
        return profile(r) * (-1.0 / (sig * sig))

    ref = amp * (sig * math.sqrt(2.0 * math.pi)) ** d

    def tail(radius_):
        if d == 1:
            return amp * sig * math.sqrt(2.0 * math.pi) * erfc(radius_ / (sig * math.sqrt(2.0)))
        val, _ = quad(lambda s: float(profile(np.array([s]))[0]) * s ** (d - 1),
                      radius_, np.inf, limit=200)
        return _sphere_area(d) * val

    return RadialTestFunction(d=d, support_radius=float("inf"),
                              reference_integral=ref, _profile=profile,
                              _dprofile=dprofile_over_r, _tail=tail,
                              label=f"gaussian(sigma={sig:g})")


# ---------------------------------------------------------------------------
# smooth time cutoff and space-time tests
# ---------------------------------------------------------------------------

def _smooth_step(s):
    """C-infinity transition: 1 for s <= 0, 0 for s >= 1."""
    s = np.asarray(s, dtype=float)
    out = np.empty(s.shape)
    lo = s <= 0.0
    hi = s >= 1.0
    mid = ~(lo | hi)
    out[lo] = 1.0
    out[hi] = 0.0
    if np.any(mid):
        sm = s[mid]
        f1 = np.exp(-1.0 / (1.0 - sm))
        f0 = np.exp(-1.0 / sm)
        out[mid] = f1 / (f0 + f1)
    return out


def _smooth_step_prime(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape)
    mid = (s > 0.0) & (s < 1.0)
    if np.any(mid):
        sm = s[mid]
        f0 = np.exp(-1.0 / sm)
        f1 = np.exp(-1.0 / (1.0 - sm))
        df0 = f0 / sm**2
        df1 = -f1 / (1.0 - sm) ** 2
        denom = f0 + f1
        out[mid] = (df1 * denom - f1 * (df0 + df1)) / denom**2
    return out


@dataclass(frozen=True)
class TimeWindow:
    """eta(t): identically 1 on [0, t_on], 0 on [t_off, T], smooth between."""

    t_on: float
    t_off: float

    def __call__(self, t):
        return _smooth_step((np.asarray(t, dtype=float) - self.t_on)
                            / (self.t_off - self.t_on))

    def prime(self, t):
        return _smooth_step_prime((np.asarray(t, dtype=float) - self.t_on)
                                  / (self.t_off - self.t_on)) / (self.t_off - self.t_on)

    def integral(self, T):
        val, _ = quad(lambda s: float(self(np.array([s]))[0]), 0.0, min(self.t_off, T),
                      limit=200)
        return val


@dataclass(frozen=True)
class SpaceTimeTestFunction:
    """phi(t, x) = eta(t) psi(x) with analytic time and space derivatives."""

    window: TimeWindow
    space: RadialTestFunction

    @property
    def support_radius(self):
        return self.space.support_radius

    def __call__(self, t, x):
        return self.window(t) * self.space(x)

    def dt(self, t, x):
        return self.window.prime(t) * self.space(x)

    def grad(self, t, x):
        w = np.asarray(self.window(t), dtype=float)
        return w[..., None] * self.space.grad(x) if np.ndim(w) else w * self.space.grad(x)

    def total_integral(self, T):
        """Space-time integral of phi over [0, T] x R^d."""
        return self.window.integral(T) * self.space.reference_integral


def compact_space_time(d, T, space_radius=1.0, amplitude=1.0,
                       on_fraction=0.55, off_fraction=0.95):
    """Standard separable test function, supported in [0, off*T) x B_a."""
    window = TimeWindow(t_on=on_fraction * T, t_off=off_fraction * T)
    return SpaceTimeTestFunction(window=window, space=bump(d, space_radius, amplitude))
