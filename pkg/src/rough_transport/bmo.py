"""Mean-oscillation norms, John-Nirenberg decay, and the BMO uniqueness bound.

The family norm is a certified lower bound for the true BMO seminorm: the
sup over all balls is replaced by a dyadic-radius family on a coarse grid
of centers, used consistently by every check. The abstract John-Nirenberg
constants are replaced per exemplar by the fitted pair from the measured
superlevel decay.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (BadSplitError, DegenerateFitError, EmptyBallError,
                     LambdaTooSmallError, NegativeInputError)
from .fields import DampingFieldSpec, GrowthSplit, VelocityFieldSpec
from .numerics import trapz
from .representation import DensityRepresentation
from .weakform import GammaTrace, SpaceTimeQuadrature, gamma_trace


def ball_volume(d, r):
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * r ** d


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BMOProfile:
    """A compactly supported sample field with its ball-family statistics."""

    points: np.ndarray        # (N, d) cell centers covering the box of B_2M
    values: np.ndarray        # (N,)
    cell_volume: float
    M: float
    ball_family: tuple        # ((center tuple, radius), ...)
    averages: np.ndarray      # per ball
    oscillations: np.ndarray  # per ball
    norm_star: float

    @property
    def d(self):
        return self.points.shape[-1]

    def ball_mask(self, center, radius):
        c = np.asarray(center, dtype=float)
        return np.linalg.norm(self.points - c, axis=-1) < radius

    def ball_average(self, center, radius):
        mask = self.ball_mask(center, radius)
        if not np.any(mask):
            raise EmptyBallError(f"ball at {center} radius {radius:g} holds no cell")
        return float(np.mean(self.values[mask]))


def default_ball_family(M, d, n_centers_per_axis=5, n_radii=7):
    """Dyadic radii M 2^-k on a coarse center grid inside B_M."""
    axis = np.linspace(-0.5 * M, 0.5 * M, n_centers_per_axis)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=-1)
    radii = [M * 2.0 ** (-k) for k in range(n_radii)]
    return tuple((tuple(c), r) for c in centers for r in radii)


def bmo_norm(values, M, ball_family, points, cell_volume) -> BMOProfile:
    """Per-ball averages and mean oscillations; norm_star is the family max.

    ``values`` may be a callable on points or a sample array. The samples
    must vanish outside B_M (compact support hypothesis of the decay
    lemma).
    """
    points = np.asarray(points, dtype=float)
    if callable(values):
        values = np.asarray(values(points), dtype=float)
    else:
        values = np.asarray(values, dtype=float)
    if not ball_family:
        raise ValueError("ball_family must be nonempty")

    outside = np.linalg.norm(points, axis=-1) > M
    if np.any(values[outside] != 0.0):
        raise ValueError("profile must vanish outside B_M")

    averages = np.empty(len(ball_family))
    oscillations = np.empty(len(ball_family))
    for i, (center, radius) in enumerate(ball_family):
        mask = np.linalg.norm(points - np.asarray(center), axis=-1) < radius
        if not np.any(mask):
            raise EmptyBallError(f"ball at {center} radius {radius:g} holds no cell")
        sel = values[mask]
        avg = float(np.mean(sel))
        averages[i] = avg
        oscillations[i] = float(np.mean(np.abs(sel - avg)))
    return BMOProfile(points=points, values=values, cell_volume=float(cell_volume),
                      M=float(M), ball_family=tuple(ball_family),
                      averages=averages, oscillations=oscillations,
                      norm_star=float(np.max(oscillations)))


# ---------------------------------------------------------------------------
# John-Nirenberg decay fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JNFit:
    C_fit: float
    c_fit: float
    etas: tuple
    measures: tuple
    trivial: bool = False
    r_squared: Optional[float] = None


def jn_decay_check(profile: BMOProfile, eta_grid) -> JNFit:
    """Fit measure{|f - (f)_{B_M}| > eta} to C Leb(B_M) exp(-c eta / ||f||*).

    All-empty superlevels report trivial decay; fewer than three nonempty
    levels cannot be fitted.
    """
    if profile.norm_star <= 0.0:
        raise ValueError("decay fit needs a nonconstant profile")
    mask = profile.ball_mask(np.zeros(profile.d), profile.M)
    avg = float(np.mean(profile.values[mask]))
    dev = np.abs(profile.values[mask] - avg)

    etas = [float(e) for e in eta_grid]
    measures = [float(np.sum(dev > e)) * profile.cell_volume for e in etas]
    nonzero = [(e, m) for e, m in zip(etas, measures) if m > 0.0]
    if not nonzero:
        return JNFit(C_fit=0.0, c_fit=float("inf"), etas=tuple(etas),
                     measures=tuple(measures), trivial=True)
    if len(nonzero) < 3:
        raise DegenerateFitError(
            f"only {len(nonzero)} nonempty superlevels; need at least 3 for the fit"
        )
    xs = np.array([e for e, _ in nonzero])
    ys = np.log([m for _, m in nonzero])
    slope, intercept = np.polyfit(xs, ys, 1)
    fitted = slope * xs + intercept
    ss_res = float(np.sum((ys - fitted) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    sigma = profile.norm_star
    return JNFit(C_fit=float(np.exp(intercept)) / ball_volume(profile.d, profile.M),
                 c_fit=float(-slope * sigma), etas=tuple(etas),
                 measures=tuple(measures), r_squared=r2)


# ---------------------------------------------------------------------------
# superlevel tail integrals (decay lemma)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SuperlevelReport:
    average: float
    average_bound: float          # 2^(d+1) norm_star
    average_ok: bool
    lambdas: tuple
    tails: tuple                  # T(lambda) = integral (f - lambda norm_star)_+
    nonincreasing: bool
    convex: bool
    log_slope: Optional[float]
    r_squared: Optional[float]


def lemma52_checks(profile: BMOProfile, lambda_list) -> SuperlevelReport:
    """Average bound and exponential tail decay for nonnegative profiles."""
    if np.any(profile.values < 0.0):
        raise NegativeInputError("superlevel checks need a nonnegative profile")
    lambdas = [float(l) for l in lambda_list]
    sigma = profile.norm_star

    mask = profile.ball_mask(np.zeros(profile.d), profile.M)
    average = float(np.mean(profile.values[mask]))
    bound = 2.0 ** (profile.d + 1) * sigma

    tails = []
    for lam in lambdas:
        excess = profile.values - lam * sigma
        tails.append(float(np.sum(excess[excess > 0.0])) * profile.cell_volume)

    noninc = all(b <= a + 1e-12 for a, b in zip(tails[:-1], tails[1:]))
    convex = True
    for (l1, t1), (l2, t2), (l3, t3) in zip(
            zip(lambdas, tails), zip(lambdas[1:], tails[1:]), zip(lambdas[2:], tails[2:])):
        s12 = (t2 - t1) / (l2 - l1)
        s23 = (t3 - t2) / (l3 - l2)
        if s23 < s12 - 1e-12 * max(1.0, abs(t1)):
            convex = False

    positive = [(l, t) for l, t in zip(lambdas, tails) if t > 0.0]
    slope = r2 = None
    if len(positive) >= 2:
        xs = np.array([l for l, _ in positive])
        ys = np.log([t for _, t in positive])
        slope, intercept = np.polyfit(xs, ys, 1)
        fitted = slope * xs + intercept
        ss_res = float(np.sum((ys - fitted) ** 2))
        ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
        slope = float(slope)

    return SuperlevelReport(average=average, average_bound=bound,
                            average_ok=average <= bound + 1e-12,
                            lambdas=tuple(lambdas), tails=tuple(tails),
                            nonincreasing=noninc, convex=convex,
                            log_slope=slope, r_squared=r2)


# ---------------------------------------------------------------------------
# BMO-divergence Gronwall diagnostic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BMODivergenceSplit:
    """|div b| <= d1(t,x) + d2(t,x): bounded part plus compact BMO part."""

    d1_sup: Callable                      # t -> ||d1(t,.)||_inf
    d2_profile: Optional[BMOProfile]      # None when d2 = 0
    d2_norm_star: Callable                # t -> ||d2(t,.)||_*
    jn: Optional["JNFit"] = None          # fitted decay constants for d2


@dataclass(frozen=True)
class Tau0Policy:
    """Pick tau0 with int_0^tau0 ||d2||_* inside [lo, hi] * c_fit."""

    lo: float = 0.4
    hi: float = 0.5

    def choose(self, norm_star_of_t, c_fit, horizon, tol=1e-10):
        total = _integral_to(norm_star_of_t, horizon)
        if total <= self.hi * c_fit:
            return horizon
        lo_t, hi_t = 0.0, horizon
        target = 0.5 * (self.lo + self.hi) * c_fit
        while hi_t - lo_t > tol * horizon:
            mid = 0.5 * (lo_t + hi_t)
            if _integral_to(norm_star_of_t, mid) < target:
                lo_t = mid
            else:
                hi_t = mid
        return 0.5 * (lo_t + hi_t)


def _integral_to(profile, t, n=256):
    ts = np.linspace(0.0, t, n + 1)
    vals = np.array([float(profile(float(s))) for s in ts])
    return trapz(vals, ts)


def bmo_gronwall_diagnostic(u: DensityRepresentation, delta, R, lam,
                            tau0_policy: Tau0Policy, field: VelocityFieldSpec,
                            split: BMODivergenceSplit, growth: GrowthSplit,
                            damping: DampingFieldSpec, quad: SpaceTimeQuadrature,
                            slack=0.1) -> GammaTrace:
    """Gamma_{delta,R} on [0, tau0] against the lambda-family Gronwall bound.

    The abstract decay constants are replaced by the fitted (C, c) of the
    oscillating divergence part; tau0 is chosen so the accumulated
    oscillation norm stays below half the fitted decay rate, which is what
    makes exp(A_lambda) D_lambda decay in lambda. With d2 = 0 the bound
    reduces to the plain logarithmic Gronwall bound.
    """
    from .renormalization import make_beta_log, make_phi_R

    d = quad.d
    if lam <= 2.0 ** (d + 2):
        raise LambdaTooSmallError(f"lambda={lam:g} must exceed 2^(d+2)={2.0**(d+2):g}")
    if split.d2_profile is not None:
        prof = split.d2_profile
        outside = np.linalg.norm(prof.points, axis=-1) > prof.M
        if np.any(prof.values[outside] != 0.0):
            raise BadSplitError("d2 is not compactly supported in B_M")

    if split.d2_profile is None:
        c_fit = float("inf")
        C_fit = 0.0
        tau0 = float(quad.times[-1])
    else:
        if split.jn is None:
            raise ValueError("split needs the fitted decay constants (jn)")
        c_fit = split.jn.c_fit
        C_fit = split.jn.C_fit
        tau0 = tau0_policy.choose(split.d2_norm_star, c_fit, float(quad.times[-1]))

    keep = quad.times <= tau0 + 1e-12
    times = quad.times[keep]

    beta = make_beta_log(delta)
    phi_R = make_phi_R(R, d)
    trace = gamma_trace(u, beta, phi_R, field, damping, quad)
    gamma_vals = trace.values[keep]

    d1 = np.array([float(split.d1_sup(float(t))) for t in times])
    sig = np.array([float(split.d2_norm_star(float(t))) for t in times])
    b2 = np.array([float(growth.b2(float(t))) for t in times])
    if damping.l1_spatial is not None:
        cl1 = np.array([float(damping.l1_spatial(float(t))) for t in times])
    else:
        cl1 = np.zeros_like(times)
    decay = C_fit * math.exp(-c_fit * lam) if np.isfinite(c_fit) else 0.0

    a_lam = d1 + lam * sig + (d + 1) * b2
    b_lam = cl1 + (d1 + lam * sig) * phi_R.l1_norm + decay * sig
    c_R = (d + 1) * np.array([float(growth.b1_tail_l1(float(t), R)) for t in times])
    d_lam = decay * sig

    A = trapz(a_lam, times)
    B = trapz(b_lam, times)
    CR = trapz(c_R, times)
    DL = trapz(d_lam, times)
    bound = math.exp(A) * (B + math.log1p(math.pi ** 2 / (4.0 * delta)) * (CR + DL))
    passed = bool(np.all(gamma_vals <= bound * (1.0 + slack) + 1e-300))

    return GammaTrace(times=times.copy(), values=gamma_vals, rhs=None,
                      bound=bound, passed=passed,
                      extras={"A_lambda": A, "B_lambda_R": B, "C_R": CR,
                              "D_lambda": DL, "tau0": tau0, "lambda": float(lam),
                              "delta": float(delta),
                              "expA_D": math.exp(A) * DL})
