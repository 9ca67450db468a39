"""Scenario registry: named fields, dampings, initial data, and diagnostics.

Each scenario bundles a closed-form transport problem with the diagnostics
it is meant to exercise, from plain flow accuracy up to the logarithmic
Gronwall bounds and the BMO-divergence machinery. ``run_scenario`` executes
a resolved configuration and returns a RunReport whose pass/fail values are
all mirrored into CSV artifacts.
"""

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import __version__
from .bmo import (BMODivergenceSplit, Tau0Policy, bmo_gronwall_diagnostic,
                  bmo_norm, default_ball_family, jn_decay_check, lemma52_checks)
from .errors import PipelineError, RoughTransportError
from .fields import (DampingFieldSpec, PointSingularity, VelocityFieldSpec,
                     check_divergence_consistency, growth_split, make_mollifier,
                     mollify)
from .flow import (change_of_variables_residual, compressibility_estimate,
                   flow_convergence_study, forward_backward_mismatch, integrate_flow,
                   jacobian, jacobian_ode_residual, make_seed_grid,
                   seeds_from_points, superlevel_escape)
from .renormalization import make_beta_arctan, make_phi_R
from .report import Artifact, DiagnosticResult, RunReport
from .representation import (damping_integral, integrability_probe,
                             pointwise_solution)
from .testfunctions import bump, compact_space_time, gaussian
from .weakform import (gronwall_constants, gronwall_log_diagnostic,
                       l2_energy_diagnostic, make_quadrature, uniqueness_probe,
                       weak_residual, weak_residual_study)


# ---------------------------------------------------------------------------
# velocity field catalog
# ---------------------------------------------------------------------------

def _zeros_like_scalar(x):
    return np.zeros(np.asarray(x).shape[:-1])


def _field_zero(d, T):
    return VelocityFieldSpec(
        dimension=d,
        eval_b=lambda t, x: np.zeros_like(np.asarray(x, dtype=float)),
        eval_div_b=lambda t, x: _zeros_like_scalar(x),
        regularity_tag="smooth", div_sup=lambda t: 0.0, horizon=T,
        growth_b1=lambda t, x: _zeros_like_scalar(x),
        growth_b2=lambda t: 0.0, label="zero")


def _field_linear(d, T, sign):
    return VelocityFieldSpec(
        dimension=d,
        eval_b=lambda t, x: sign * np.asarray(x, dtype=float),
        eval_div_b=lambda t, x: np.full(np.asarray(x).shape[:-1], sign * d),
        regularity_tag="smooth", div_sup=lambda t: float(abs(sign) * d), horizon=T,
        growth_b1=lambda t, x: _zeros_like_scalar(x),
        growth_b2=lambda t: 1.0,
        label="linear_expand" if sign > 0 else "linear_contract")


def _field_rotation(T):
    def eval_b(t, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        out[..., 0] = -x[..., 1]
        out[..., 1] = x[..., 0]
        return out

    return VelocityFieldSpec(
        dimension=2, eval_b=eval_b,
        eval_div_b=lambda t, x: _zeros_like_scalar(x),
        regularity_tag="smooth", div_sup=lambda t: 0.0, horizon=T,
        growth_b1=lambda t, x: _zeros_like_scalar(x),
        growth_b2=lambda t: 1.0, label="rotation")


def _field_shear(T):
    # sign(0) = 0 by convention; the jump line y = 0 is measure zero
    def eval_b(t, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = np.sign(x[..., 1])
        return out

    return VelocityFieldSpec(
        dimension=2, eval_b=eval_b,
        eval_div_b=lambda t, x: _zeros_like_scalar(x),
        regularity_tag="bv_nonsmooth", div_sup=lambda t: 0.0, horizon=T,
        growth_b1=lambda t, x: _zeros_like_scalar(x),
        growth_b2=lambda t: 1.0, label="shear")


_COMPACT_DIV_SUP = 96.0 / (25.0 * math.sqrt(5.0))   # max |6x(1-x^2)^2| on [-1, 1]


def _field_compact_bump(T):
    def eval_b(t, x):
        x = np.asarray(x, dtype=float)
        s = x[..., 0]
        out = np.zeros_like(x)
        inside = np.abs(s) < 1.0
        out[..., 0] = np.where(inside, (1.0 - s**2) ** 3, 0.0)
        return out

    def eval_div_b(t, x):
        s = np.asarray(x, dtype=float)[..., 0]
        return np.where(np.abs(s) < 1.0, -6.0 * s * (1.0 - s**2) ** 2, 0.0)

    def b1(t, x):
        s = np.asarray(x, dtype=float)[..., 0]
        return (np.abs(s) <= 1.0).astype(float)     # ||b||_inf = 1 on B_1

    def b1_tail(t, R):
        return 2.0 * max(0.0, 1.0 - R)

    return VelocityFieldSpec(
        dimension=1, eval_b=eval_b, eval_div_b=eval_div_b,
        regularity_tag="smooth", div_sup=lambda t: _COMPACT_DIV_SUP, horizon=T,
        growth_b1=b1, growth_b2=lambda t: 0.0, growth_b1_tail=b1_tail,
        label="compact_support_b")


def _field_log_drift(T):
    """d = 1 drift whose divergence is the BMO exemplar log(1/|x|) on B_1.

    b(x) = x (1 - log|x|) for 0 < |x| <= 1 and sign(x) outside, so
    b' = log(1/|x|) inside and 0 outside; |b| <= 1 everywhere. The
    divergence is unbounded near 0, which is the point of the BMO regime.
    """
    def eval_b(t, x):
        x = np.asarray(x, dtype=float)
        s = x[..., 0]
        r = np.abs(s)
        out = np.zeros_like(x)
        with np.errstate(divide="ignore"):
            inner = s * (1.0 - np.log(np.where(r > 0.0, r, 1.0)))
        out[..., 0] = np.where(r > 1.0, np.sign(s), np.where(r > 0.0, inner, 0.0))
        return out

    def eval_div_b(t, x):
        s = np.asarray(x, dtype=float)[..., 0]
        r = np.abs(s)
        with np.errstate(divide="ignore"):
            vals = np.where(r > 0.0, -np.log(np.where(r > 0.0, r, 1.0)), np.inf)
        return np.where(r <= 1.0, vals, 0.0)

    return VelocityFieldSpec(
        dimension=1, eval_b=eval_b, eval_div_b=eval_div_b,
        regularity_tag="bv_nonsmooth", div_sup=lambda t: float("inf"), horizon=T,
        growth_b1=lambda t, x: _zeros_like_scalar(x),
        growth_b2=lambda t: 1.0, label="log_drift")


FIELD_CATALOG = {
    "zero": lambda d, T: _field_zero(d, T),
    "linear_expand": lambda d, T: _field_linear(d, T, +1.0),
    "linear_contract": lambda d, T: _field_linear(d, T, -1.0),
    "rotation": lambda d, T: _field_rotation(T),
    "shear": lambda d, T: _field_shear(T),
    "compact_bump": lambda d, T: _field_compact_bump(T),
    "log_drift": lambda d, T: _field_log_drift(T),
}


# ---------------------------------------------------------------------------
# damping catalog
# ---------------------------------------------------------------------------

def _damping_zero(d):
    return DampingFieldSpec(eval_c=lambda t, x: _zeros_like_scalar(x),
                            sup_c=lambda t: 0.0, l1_spatial=lambda t: 0.0,
                            label="zero")


def _damping_constant(d):
    return DampingFieldSpec(eval_c=lambda t, x: np.ones(np.asarray(x).shape[:-1]),
                            sup_c=lambda t: 1.0, label="constant_one")


def _damping_box(d):
    vol = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)   # Leb(B_1)

    def eval_c(t, x):
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return (r <= 1.0).astype(float)

    return DampingFieldSpec(eval_c=eval_c, sup_c=lambda t: 1.0,
                            l1_spatial=lambda t: vol, label="box_indicator")


def _damping_inv_sqrt(d):
    # |x|^(-1/2) on 0 < |x| <= 1 (d = 1); space-time L1 mass is 4T
    def eval_c(t, x):
        r = np.abs(np.asarray(x, dtype=float)[..., 0])
        out = np.zeros(r.shape)
        inside = (r > 0.0) & (r <= 1.0)
        out[inside] = 1.0 / np.sqrt(r[inside])
        return out

    return DampingFieldSpec(eval_c=eval_c,
                            singular_set=(PointSingularity((0.0,)),),
                            l1_norm_hint=4.0, l1_spatial=lambda t: 4.0,
                            label="inv_sqrt")


DAMPING_CATALOG = {
    "zero": _damping_zero,
    "constant_one": _damping_constant,
    "box_indicator": _damping_box,
    "inv_sqrt": _damping_inv_sqrt,
}


# ---------------------------------------------------------------------------
# initial data catalog
# ---------------------------------------------------------------------------

def _u0_bump(d):
    profile = bump(d, radius=0.8)
    return lambda x: profile(x)


def _u0_indicator_unit(d):
    def u0(x):
        s = np.asarray(x, dtype=float)[..., 0]
        return ((s > 0.0) & (s < 1.0)).astype(float)
    return u0


U0_CATALOG = {
    "bump": _u0_bump,
    "indicator_unit": _u0_indicator_unit,
}


# ---------------------------------------------------------------------------
# run context
# ---------------------------------------------------------------------------

@dataclass
class RunContext:
    """Resolved configuration plus lazily shared pipeline objects."""

    cfg: "object"                      # config.ScenarioConfig
    field: VelocityFieldSpec
    damping: DampingFieldSpec
    u0: Optional[Callable]
    rng: np.random.Generator
    _cache: dict = None

    def __post_init__(self):
        self._cache = {}

    @property
    def d(self):
        return self.field.dimension

    def seed_grid(self):
        if "seeds" not in self._cache:
            self._cache["seeds"] = make_seed_grid(self.cfg.box_radius,
                                                  self.cfg.seeds_per_axis, self.d)
        return self._cache["seeds"]

    def forward_flow(self, allow_nonsmooth=False):
        if "flow" not in self._cache:
            self._cache["flow"] = integrate_flow(self.field, self.seed_grid(),
                                                 self.cfg.steps, "forward",
                                                 allow_nonsmooth=allow_nonsmooth)
        return self._cache["flow"]

    def jacobian_track(self):
        if "track" not in self._cache:
            self._cache["track"] = jacobian(self.field, self.forward_flow())
        return self._cache["track"]


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _result(name, passed, values, thresholds, seconds, note="", artifacts=()):
    return DiagnosticResult(name=name, passed=bool(passed), values=values,
                            thresholds=thresholds, seconds=seconds, note=note,
                            artifacts=tuple(artifacts))


# ---------------------------------------------------------------------------
# shared diagnostic runners
# ---------------------------------------------------------------------------

def _run_flow_identity(ctx):
    def work():
        fl = ctx.forward_flow()
        return float(np.max(np.abs(fl.trajectories - fl.seed_grid.points[:, None, :])))
    dev, secs = _timed(work)
    return _result("flow_identity", dev <= 1e-12, {"max_deviation": dev},
                   {"max_deviation": 1e-12}, secs)


def _run_jacobian_unit(ctx):
    def work():
        track = ctx.jacobian_track()
        res = jacobian_ode_residual(ctx.field, ctx.forward_flow(), track)
        return float(np.max(np.abs(track.jx - 1.0))), res.worst
    (dev, res), secs = _timed(work)
    return _result("jacobian_unit", dev <= 1e-13 and res <= 1e-12,
                   {"max_jx_deviation": dev, "ode_residual": res},
                   {"max_jx_deviation": 1e-13, "ode_residual": 1e-12}, secs)


def _run_superlevel(ctx, r, R, tol=0.0):
    def work():
        fl = ctx.forward_flow()
        esc = superlevel_escape(fl, r, R)
        ladder = [(float(rr), superlevel_escape(fl, r, rr))
                  for rr in np.linspace(R, 2.0 * R, 5)]
        return esc, ladder
    (esc, ladder), secs = _timed(work)
    mono = all(b[1] <= a[1] for a, b in zip(ladder, ladder[1:]))
    art = Artifact("superlevel_escape.csv", ("R", "escaped_measure"),
                   tuple(ladder))
    return _result("superlevel", esc <= tol and mono,
                   {"escaped_measure": esc, "monotone_in_R": mono},
                   {"escaped_measure": tol, "monotone_in_R": True},
                   secs, artifacts=(art,))


def _run_compressibility(ctx, expected, rel_tol=0.1):
    def work():
        fl = ctx.forward_flow()
        track = ctx.jacobian_track()
        c_emp = compressibility_estimate(fl)
        ceiling = math.exp(track.L) * 1.1
        return c_emp, ceiling
    (c_emp, ceiling), secs = _timed(work)
    rel = abs(c_emp - expected) / expected
    return _result("compressibility", rel <= rel_tol and c_emp <= ceiling,
                   {"C_empirical": c_emp, "relative_error": rel,
                    "admissible_ceiling": ceiling},
                   {"relative_error": rel_tol, "admissible_ceiling": ceiling},
                   secs)


def _run_change_of_variables(ctx, phi, tol, domain_radius=None):
    def work():
        fl = ctx.forward_flow()
        track = ctx.jacobian_track()
        radius = domain_radius if domain_radius is not None else ctx.cfg.box_radius
        return change_of_variables_residual(fl, track, phi, radius)
    res, secs = _timed(work)
    return _result("change_of_variables", res <= tol, {"residual": res},
                   {"residual": tol}, secs)


def _quad_for(ctx, n_space, n_time, radius=None):
    return make_quadrature(ctx.d, radius if radius is not None else ctx.cfg.box_radius,
                           n_space, ctx.field.horizon, n_time)


def _run_weak_residual(ctx, n_space, n_time, tol, beta_M=1.0,
                       phi_radius=None, allow_nonsmooth=False):
    def work():
        quad = _quad_for(ctx, n_space, n_time)
        grid = seeds_from_points(quad.points, quad.cell_volume)
        u = pointwise_solution(ctx.field, ctx.damping, ctx.u0, grid, quad.times,
                               ctx.cfg.steps, eta=ctx.cfg.eta,
                               allow_nonsmooth=allow_nonsmooth)
        phi = compact_space_time(ctx.d, ctx.field.horizon,
                                 space_radius=phi_radius or 0.75 * ctx.cfg.box_radius)
        rep = weak_residual(u, make_beta_arctan(beta_M), phi, ctx.field,
                            ctx.damping, ctx.u0, quad, eta=ctx.cfg.eta)
        return rep
    rep, secs = _timed(work)
    art = Artifact("weak_residual.csv", ("h", "tau", "residual"), rep.history)
    return _result("weak_residual", rep.residual <= tol,
                   {"residual": rep.residual}, {"residual": tol}, secs,
                   artifacts=(art,))


def _run_l2_energy(ctx, n_space, n_time, allow_nonsmooth=False):
    def work():
        quad = _quad_for(ctx, n_space, n_time)
        grid = seeds_from_points(quad.points, quad.cell_volume)
        u = pointwise_solution(ctx.field, ctx.damping, ctx.u0, grid, quad.times,
                               ctx.cfg.steps, eta=ctx.cfg.eta,
                               allow_nonsmooth=allow_nonsmooth)
        return l2_energy_diagnostic(u, ctx.field, ctx.damping, quad)
    (times, curve, envelope, ok), secs = _timed(work)
    worst = float(np.max(curve / np.maximum(envelope, 1e-300)))
    art = Artifact("l2_energy.csv", ("t", "energy", "envelope"),
                   tuple(zip(times, curve, envelope)))
    return _result("l2_energy", ok, {"worst_ratio": worst},
                   {"worst_ratio": 1.05}, secs, artifacts=(art,))


# ---------------------------------------------------------------------------
# scenario-specific runners
# ---------------------------------------------------------------------------

def _run_flow_endpoint(ctx, seed, t_eval, expected, tol=1e-8):
    def work():
        grid = seeds_from_points([seed])
        fl = integrate_flow(ctx.field, grid, ctx.cfg.steps, "forward",
                            anchor_time=t_eval)
        return float(np.linalg.norm(fl.positions_at(-1)[0] - np.asarray(expected)))
    err, secs = _timed(work)
    return _result("flow_endpoint", err <= tol and secs < 1.0,
                   {"position_error": err}, {"position_error": tol}, secs,
                   note="runtime budget 1 s")


def _run_jacobian_profile(ctx, rate, tol=1e-10):
    """max_t |JX(t) - exp(rate * t)| over the seed grid."""
    def work():
        track = ctx.jacobian_track()
        expected = np.exp(rate * ctx.forward_flow().time_grid)
        return float(np.max(np.abs(track.jx - expected[None, :])))
    dev, secs = _timed(work)
    return _result("jacobian_profile", dev <= tol, {"max_deviation": dev},
                   {"max_deviation": tol}, secs)


def _run_jacobian_ode(ctx, tol=1e-3, halving=0.55):
    def work():
        fl1 = ctx.forward_flow()
        r1 = jacobian_ode_residual(ctx.field, fl1, jacobian(ctx.field, fl1)).worst
        fl2 = integrate_flow(ctx.field, ctx.seed_grid(), 2 * ctx.cfg.steps, "forward")
        r2 = jacobian_ode_residual(ctx.field, fl2, jacobian(ctx.field, fl2)).worst
        return r1, r2
    (r1, r2), secs = _timed(work)
    halved = r2 <= max(halving * r1, 1e-12)
    return _result("jacobian_ode", r1 <= tol and halved,
                   {"residual": r1, "residual_refined": r2},
                   {"residual": tol, "residual_refined": halving * r1 + 1e-12}, secs)


def _run_forward_backward(ctx, tol=1e-10, allow_nonsmooth=False):
    def work():
        return forward_backward_mismatch(ctx.field, ctx.forward_flow(),
                                         allow_nonsmooth=allow_nonsmooth)
    dev, secs = _timed(work)
    return _result("forward_backward", dev <= tol, {"max_mismatch": dev},
                   {"max_mismatch": tol}, secs)


def _run_growth_split(ctx):
    def work():
        growth_split(ctx.field, rng=ctx.rng)   # raises on violation
        fd = check_divergence_consistency(ctx.field, rng=ctx.rng,
                                          sample_radius=ctx.cfg.box_radius)
        return fd
    fd, secs = _timed(work)
    return _result("growth_split", fd <= 1e-5,
                   {"fd_divergence_error": fd}, {"fd_divergence_error": 1e-5}, secs)


def _run_mollify_checks(ctx):
    def work():
        moll = make_mollifier(ctx.cfg.eps_list[0], ctx.d)
        ti, si = moll.kernel_integrals()
        smooth = mollify(ctx.field, moll)
        origin = np.zeros((1, ctx.d))
        b0 = float(np.max(np.abs(smooth.eval_b(0.0, origin))))
        div0 = float(np.max(np.abs(smooth.eval_div_b(0.5, ctx.seed_grid().points))))
        return abs(ti - 1.0), abs(si - 1.0), b0, div0
    (ti, si, b0, div0), secs = _timed(work)
    ok = ti <= 1e-10 and si <= 1e-10 and b0 <= 1e-12 and div0 <= 1e-12
    return _result("mollify_checks", ok,
                   {"time_kernel_defect": ti, "space_kernel_defect": si,
                    "field_at_interface": b0, "divergence_sup": div0},
                   {"time_kernel_defect": 1e-10, "space_kernel_defect": 1e-10,
                    "field_at_interface": 1e-12, "divergence_sup": 1e-12}, secs)


def _run_flow_convergence(ctx, jac_tol=1e-10):
    def work():
        return flow_convergence_study(ctx.field, ctx.cfg.eps_list,
                                      ctx.seed_grid(), ctx.cfg.steps)
    rows, secs = _timed(work)
    flow_discs = [r[1] for r in rows]
    jac_discs = [r[2] for r in rows]
    decreasing = all(b < a for a, b in zip(flow_discs, flow_discs[1:]))
    jac_ok = max(jac_discs) <= jac_tol
    art = Artifact("flow_convergence.csv", ("eps", "flow_discrepancy",
                                            "jacobian_discrepancy"), tuple(rows))
    return _result("flow_convergence", decreasing and jac_ok and secs < 30.0,
                   {"strictly_decreasing": decreasing,
                    "max_jacobian_discrepancy": max(jac_discs)},
                   {"strictly_decreasing": True,
                    "max_jacobian_discrepancy": jac_tol},
                   secs, note="runtime budget 30 s", artifacts=(art,))


def _run_representation_exact(ctx, n_space=256, n_time=64, tol=1e-12):
    """b = 0 scenarios: pointwise representation equals u0 e^{t c} on seeds."""
    def work():
        quad = _quad_for(ctx, n_space, n_time)
        grid = seeds_from_points(quad.points, quad.cell_volume)
        u = pointwise_solution(ctx.field, ctx.damping, ctx.u0, grid, quad.times,
                               ctx.cfg.steps, eta=ctx.cfg.eta)
        cvals = np.asarray(ctx.damping.eval_c(0.0, quad.points), dtype=float)
        exact = (np.asarray(ctx.u0(quad.points), dtype=float)[None, :]
                 * np.exp(quad.times[:, None] * cvals[None, :]))
        dev = float(np.max(np.abs(u.values - exact)))
        rows = [(float(quad.times[-1]),) + tuple(p) + (float(v),)
                for p, v in zip(quad.points[::16], u.values[-1, ::16])]
        return dev, rows
    (dev, rows), secs = _timed(work)
    art = Artifact("density_final.csv",
                   ("t",) + tuple(f"x{i+1}" for i in range(ctx.d)) + ("u",),
                   tuple(rows))
    return _result("representation_exact", dev <= tol, {"max_deviation": dev},
                   {"max_deviation": tol}, secs, artifacts=(art,))


def _run_weak_refinement(ctx, ladder, order_min=2.0, order_slack=0.1,
                         beta_M=1.0, phi_radius=None):
    def work():
        quads = [_quad_for(ctx, ns, nt) for ns, nt in ladder]
        phi = compact_space_time(ctx.d, ctx.field.horizon,
                                 space_radius=phi_radius or 0.75 * ctx.cfg.box_radius)

        def u_builder(quad):
            grid = seeds_from_points(quad.points, quad.cell_volume)
            return pointwise_solution(ctx.field, ctx.damping, ctx.u0, grid,
                                      quad.times, ctx.cfg.steps, eta=ctx.cfg.eta)

        return weak_residual_study(u_builder, make_beta_arctan(beta_M), phi,
                                   ctx.field, ctx.damping, ctx.u0, quads,
                                   eta=ctx.cfg.eta)
    rep, secs = _timed(work)
    ok = rep.order is not None and rep.order >= order_min - order_slack
    art = Artifact("weak_residual_refinement.csv", ("h", "tau", "residual"),
                   rep.history)
    return _result("weak_residual_refinement", ok,
                   {"estimated_order": rep.order or float("nan"),
                    "final_residual": rep.residual},
                   {"estimated_order": order_min - order_slack,
                    "final_residual": float("inf")}, secs, artifacts=(art,))


def _run_integrability(ctx, etas, expected_verdict, min_growth=None):
    def work():
        return integrability_probe(ctx.u0, ctx.damping, ctx.field.horizon, etas)
    rep, secs = _timed(work)
    ok = rep.verdict == expected_verdict and secs < 1.0
    if min_growth is not None and rep.verdict == "divergent":
        ok = ok and all(r >= min_growth or not np.isfinite(r)
                        for r in rep.growth_ratios)
    art = Artifact("integrability_probe.csv", ("eta", "truncated_integral"),
                   tuple(zip(rep.etas, rep.integrals)))
    return _result("integrability_probe", ok,
                   {"verdict_is_" + expected_verdict: rep.verdict == expected_verdict},
                   {"verdict_is_" + expected_verdict: True},
                   secs, note=f"verdict: {rep.verdict}; runtime budget 1 s",
                   artifacts=(art,))


def _run_damping_l1(ctx, tol_rel=0.02):
    def work():
        grid = make_seed_grid(1.0, 1024, 1)
        fl = integrate_flow(ctx.field, grid, 16, "forward")
        acc = damping_integral(ctx.damping, fl, eta=0.0)
        bound = 1.0 * ctx.damping.l1_norm_hint * 1.2   # C(X) = 1 for b = 0
        return acc.total_l1, bound
    (total, bound), secs = _timed(work)
    rel = abs(total - ctx.damping.l1_norm_hint) / ctx.damping.l1_norm_hint
    return _result("damping_l1", rel <= tol_rel and total <= bound,
                   {"discrete_l1": total, "relative_error": rel,
                    "compressibility_bound": bound},
                   {"relative_error": tol_rel, "compressibility_bound": bound}, secs)


def _skip_weak_form(ctx):
    note = ("weak-form diagnostics skipped by design: with integrable unbounded "
            "damping the pointwise product u(t,.) need not be locally integrable, "
            "so the representation is not a distributional solution and the "
            "quadrature of the weak form has no limit to verify")
    return _result("weak_form", True, {}, {}, 0.0, note=note)


# --- twin-difference helpers -------------------------------------------------

def _twin_difference(ctx, quad, steps_coarse, steps_fine, allow_nonsmooth=False):
    """Zero-datum density: same scenario at two integrator resolutions."""
    grid = seeds_from_points(quad.points, quad.cell_volume)
    coarse = pointwise_solution(ctx.field, ctx.damping, ctx.u0, grid, quad.times,
                                steps_coarse, eta=ctx.cfg.eta,
                                allow_nonsmooth=allow_nonsmooth)
    fine = pointwise_solution(ctx.field, ctx.damping, ctx.u0, grid, quad.times,
                              steps_fine, eta=ctx.cfg.eta,
                              allow_nonsmooth=allow_nonsmooth)
    from .representation import DensityRepresentation
    return DensityRepresentation(mode="pointwise", times=quad.times.copy(),
                                 points=quad.points, values=coarse.values - fine.values,
                                 cell_volume=quad.cell_volume,
                                 u0=lambda x: np.zeros(np.asarray(x).shape[:-1]))


def _run_gronwall_matrix(ctx, quad_shape, quad_radius, slack=0.1,
                         check_delta_independent=False):
    def work():
        quad = make_quadrature(ctx.d, quad_radius, quad_shape[0],
                               ctx.field.horizon, quad_shape[1])
        u = _twin_difference(ctx, quad, ctx.cfg.steps, 2 * ctx.cfg.steps)
        growth = growth_split(ctx.field, rng=ctx.rng)
        rows = []
        trace_rows = []
        all_ok = True
        bounds_by_R = {}
        for delta in ctx.cfg.delta_list:
            for R in ctx.cfg.r_list:
                trace = gronwall_log_diagnostic(u, delta, R, ctx.field,
                                                ctx.damping, growth, quad,
                                                eta=ctx.cfg.eta, slack=slack)
                rows.append((delta, R, float(np.max(trace.values)), trace.bound))
                all_ok = all_ok and trace.passed
                bounds_by_R.setdefault(R, []).append(trace.bound)
                if not trace_rows:
                    trace_rows = [(float(t), float(g), float(r), trace.bound)
                                  for t, g, r in zip(trace.times, trace.values,
                                                     trace.rhs)]
        return rows, trace_rows, all_ok, bounds_by_R
    (rows, trace_rows, all_ok, bounds_by_R), secs = _timed(work)
    delta_indep = True
    if check_delta_independent:
        for R, bounds in bounds_by_R.items():
            span = max(bounds) - min(bounds)
            delta_indep = delta_indep and span <= 1e-9 * max(bounds)
    worst = max(g / b for _, _, g, b in rows) if rows else 0.0
    art = Artifact("gronwall_log.csv", ("delta", "R", "gamma_max", "bound"),
                   tuple(rows))
    art_trace = Artifact("gamma_trace.csv", ("t", "gamma", "rhs", "bound"),
                         tuple(trace_rows))
    values = {"worst_gamma_over_bound": worst, "all_bounds_hold": all_ok}
    thresholds = {"worst_gamma_over_bound": 1.0 + slack, "all_bounds_hold": True}
    if check_delta_independent:
        values["bound_delta_independent"] = delta_indep
        thresholds["bound_delta_independent"] = True
    ok = all_ok and secs < 60.0 and (delta_indep if check_delta_independent else True)
    return _result("gronwall_log", ok, values, thresholds, secs,
                   note="runtime budget 60 s", artifacts=(art, art_trace))


def _run_uniqueness_probe(ctx, quad_shape, quad_radius, gamma_level=1e-8,
                          probe_R0=None):
    def work():
        quad = make_quadrature(ctx.d, quad_radius, quad_shape[0],
                               ctx.field.horizon, quad_shape[1])
        u = _twin_difference(ctx, quad, ctx.cfg.steps, 2 * ctx.cfg.steps)
        growth = growth_split(ctx.field, rng=ctx.rng)
        phi_R = make_phi_R(max(ctx.cfg.r_list), ctx.d)
        data = gronwall_constants(ctx.field, ctx.damping, growth, phi_R, quad.times)
        deltas = [10.0 ** (-k) for k in range(2, 13, 2)]
        R0 = probe_R0 if probe_R0 is not None else 0.9 * quad_radius
        return uniqueness_probe(u, gamma_level, R0, deltas, data, quad)
    rep, secs = _timed(work)
    ok = rep.verdict == "forces u=0" and all(h for _, _, h in rep.delta_table)
    art = Artifact("uniqueness_probe.csv", ("delta", "rhs_bound", "holds"),
                   rep.delta_table)
    return _result("uniqueness_probe", ok,
                   {"m": rep.m, "limit_bound": rep.limit_bound,
                    "verdict_forces_zero": rep.verdict == "forces u=0"},
                   {"m": float("inf"), "limit_bound": rep.m,
                    "verdict_forces_zero": True},
                   secs, note=f"verdict: {rep.verdict}", artifacts=(art,))


# --- BMO scenario helpers ----------------------------------------------------

_BMO_GRID_CELLS = 1 << 22     # resolves exp(-lambda sigma) superlevels at lambda = 16


def _bmo_profile(ctx):
    """Sampled log(1/|x|) on B_1 over a fine grid covering B_2 (cached)."""
    if "bmo_profile" not in ctx._cache:
        M = 1.0
        n = _BMO_GRID_CELLS
        h = 4.0 * M / n
        xs = -2.0 * M + h * (np.arange(n) + 0.5)
        r = np.abs(xs)
        with np.errstate(divide="ignore"):
            vals = np.where(r < M, np.log(np.where(r > 0.0, 1.0 / r, 1.0)), 0.0)
        ctx._cache["bmo_profile"] = bmo_norm(vals, M, default_ball_family(M, 1),
                                             xs[:, None], h)
    return ctx._cache["bmo_profile"]


def _run_bmo_norm(ctx):
    def work():
        profile = _bmo_profile(ctx)
        avg = profile.ball_average(np.zeros(1), profile.M)
        return profile, avg
    (profile, avg), secs = _timed(work)
    avg_bound = 2.0 ** (profile.d + 1) * profile.norm_star
    avg_err = abs(avg - 1.0)
    return _result("bmo_norm", avg_err <= 0.02 and avg <= avg_bound,
                   {"average_B1": avg, "average_abs_error": avg_err,
                    "norm_star": profile.norm_star, "average_bound": avg_bound},
                   {"average_abs_error": 0.02, "average_bound": avg_bound}, secs)


def _run_jn_decay(ctx):
    def work():
        profile = _bmo_profile(ctx)
        etas = [1.0 + 0.5 * k for k in range(7)]
        return jn_decay_check(profile, etas)
    fit, secs = _timed(work)
    ok = fit.c_fit > 0.0 and (fit.r_squared or 0.0) >= 0.95
    art = Artifact("jn_decay.csv", ("eta", "superlevel_measure"),
                   tuple(zip(fit.etas, fit.measures)))
    return _result("jn_decay", ok,
                   {"c_fit": fit.c_fit, "C_fit": fit.C_fit,
                    "r_squared": fit.r_squared or float("nan")},
                   {"c_fit": 0.0, "r_squared": 0.95}, secs, artifacts=(art,))


def _run_superlevel_tails(ctx):
    def work():
        profile = _bmo_profile(ctx)
        etas = [1.0 + 0.5 * k for k in range(7)]
        fit = jn_decay_check(profile, etas)
        return lemma52_checks(profile, ctx.cfg.lambda_list), profile, fit
    (rep, profile, fit), secs = _timed(work)
    strict = all(b < a for a, b in zip(rep.tails, rep.tails[1:]))
    # decay-lemma bound with the fitted constants standing in for C, c
    sigma = profile.norm_star
    ball = 2.0 * profile.M if profile.d == 1 else math.pi * profile.M ** 2
    bounds = [fit.C_fit * ball * sigma / fit.c_fit * math.exp(-0.5 * fit.c_fit * lam)
              for lam in rep.lambdas]
    tails_bounded = all(t <= b for t, b in zip(rep.tails, bounds))
    ok = (rep.average_ok and rep.nonincreasing and strict and rep.convex
          and tails_bounded
          and (rep.log_slope or 0.0) < 0.0 and (rep.r_squared or 0.0) >= 0.95)
    art = Artifact("superlevel_tails.csv", ("lambda", "tail_integral", "bound"),
                   tuple(zip(rep.lambdas, rep.tails, bounds)))
    return _result("superlevel_tails", ok,
                   {"average": rep.average, "average_bound": rep.average_bound,
                    "log_slope": rep.log_slope or float("nan"),
                    "r_squared": rep.r_squared or float("nan")},
                   {"average": rep.average_bound, "log_slope": 0.0,
                    "r_squared": 0.95}, secs, artifacts=(art,))


def _run_bmo_gronwall(ctx, quad_shape=(96, 32), quad_radius=2.0, slack=0.1):
    def work():
        profile = _bmo_profile(ctx)
        etas = [1.0 + 0.5 * k for k in range(7)]
        fit = jn_decay_check(profile, etas)
        split = BMODivergenceSplit(d1_sup=lambda t: 0.0, d2_profile=profile,
                                   d2_norm_star=lambda t: profile.norm_star,
                                   jn=fit)
        quad = make_quadrature(ctx.d, quad_radius, quad_shape[0],
                               ctx.field.horizon, quad_shape[1])
        u = _twin_difference(ctx, quad, ctx.cfg.steps, 2 * ctx.cfg.steps,
                             allow_nonsmooth=True)
        growth = growth_split(ctx.field, rng=ctx.rng)
        rows = []
        all_ok = True
        expA_D = {}
        for lam in ctx.cfg.lambda_list:
            for delta in ctx.cfg.delta_list:
                trace = bmo_gronwall_diagnostic(u, delta, ctx.cfg.r_list[0], lam,
                                                Tau0Policy(), ctx.field, split,
                                                growth, ctx.damping, quad,
                                                slack=slack)
                rows.append((lam, delta, float(np.max(trace.values)), trace.bound,
                             trace.extras["expA_D"], trace.extras["tau0"]))
                all_ok = all_ok and trace.passed
                expA_D[lam] = trace.extras["expA_D"]
        lams = sorted(expA_D)
        decay = all(expA_D[b] < expA_D[a] for a, b in zip(lams, lams[1:]))
        return rows, all_ok, decay
    (rows, all_ok, decay), secs = _timed(work)
    art = Artifact("bmo_gronwall.csv",
                   ("lambda", "delta", "gamma_max", "bound", "expA_D", "tau0"),
                   tuple(rows))
    return _result("bmo_gronwall", all_ok and decay and secs < 60.0,
                   {"all_bounds_hold": all_ok, "expA_D_decreasing": decay},
                   {"all_bounds_hold": True, "expA_D_decreasing": True},
                   secs, note="runtime budget 60 s", artifacts=(art,))


# ---------------------------------------------------------------------------
# scenario registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    description: str
    dimension: int
    T: float
    field_id: str
    damping_id: str
    u0_id: Optional[str]
    defaults: dict
    diagnostics: tuple
    runners: dict


def _scenario_identity():
    return Scenario(
        scenario_id="identity", description="b = 0, c = 0: nothing moves",
        dimension=1, T=1.0, field_id="zero", damping_id="zero", u0_id="bump",
        defaults={"box_radius": 2.0},
        diagnostics=("flow_identity", "jacobian_unit", "change_of_variables",
                     "compressibility", "superlevel", "weak_residual",
                     "l2_energy"),
        runners={
            "flow_identity": _run_flow_identity,
            "jacobian_unit": _run_jacobian_unit,
            "change_of_variables": lambda ctx: _run_change_of_variables(
                ctx, gaussian(ctx.d, 0.3), 1e-6),
            "compressibility": lambda ctx: _run_compressibility(ctx, 1.0),
            "superlevel": lambda ctx: _run_superlevel(ctx, 1.0, 1.5),
            "weak_residual": lambda ctx: _run_weak_residual(
                ctx, n_space=256, n_time=256, tol=1e-6, phi_radius=1.5),
            "l2_energy": lambda ctx: _run_l2_energy(ctx, 128, 64),
        })


def _scenario_linear_expand():
    return Scenario(
        scenario_id="linear_expand", description="b(x) = x: exponential dilation",
        dimension=1, T=1.0, field_id="linear_expand", damping_id="zero",
        u0_id="bump",
        defaults={"box_radius": 1.0, "seeds_per_axis": 512, "steps": 1000},
        diagnostics=("flow_endpoint", "jacobian_profile", "jacobian_ode",
                     "change_of_variables", "superlevel", "forward_backward",
                     "l2_energy"),
        runners={
            "flow_endpoint": lambda ctx: _run_flow_endpoint(
                ctx, [1.0], 1.0, [math.e]),
            "jacobian_profile": lambda ctx: _run_jacobian_profile(ctx, 1.0),
            "jacobian_ode": _run_jacobian_ode,
            "change_of_variables": lambda ctx: _run_change_of_variables(
                ctx, bump(1, 1.0), 1e-5, domain_radius=1.0),
            "superlevel": lambda ctx: _run_superlevel(
                ctx, 0.5, 0.5 * math.e + 0.01),
            "forward_backward": _run_forward_backward,
            "l2_energy": lambda ctx: _run_l2_energy(ctx, 128, 48),
        })


def _scenario_linear_contract():
    return Scenario(
        scenario_id="linear_contract", description="b(x) = -x: contraction onto 0",
        dimension=1, T=1.0, field_id="linear_contract", damping_id="zero",
        u0_id="bump",
        defaults={"box_radius": 1.0, "seeds_per_axis": 10_000, "steps": 500},
        diagnostics=("compressibility", "jacobian_profile"),
        runners={
            "compressibility": lambda ctx: _run_compressibility(ctx, math.e),
            "jacobian_profile": lambda ctx: _run_jacobian_profile(ctx, -1.0),
        })


def _scenario_rotation():
    return Scenario(
        scenario_id="rotation", description="b = (-y, x): rigid rotation",
        dimension=2, T=math.pi / 2.0, field_id="rotation", damping_id="zero",
        u0_id="bump",
        defaults={"box_radius": 1.0, "seeds_per_axis": 100, "steps": 500},
        diagnostics=("flow_endpoint", "compressibility", "change_of_variables",
                     "superlevel"),
        runners={
            "flow_endpoint": lambda ctx: _run_flow_endpoint(
                ctx, [1.0, 0.0], math.pi / 2.0, [0.0, 1.0]),
            "compressibility": lambda ctx: _run_compressibility(ctx, 1.0),
            "change_of_variables": lambda ctx: _run_change_of_variables(
                ctx, bump(2, 0.8), 1e-6, domain_radius=1.0),
            "superlevel": lambda ctx: _run_superlevel(ctx, 0.9, 1.45),
        })


def _scenario_shear_bv():
    return Scenario(
        scenario_id="shear_bv", description="b = (sign(y), 0): BV shear layer",
        dimension=2, T=1.0, field_id="shear", damping_id="zero", u0_id="bump",
        defaults={"box_radius": 1.0, "seeds_per_axis": (2, 1024), "steps": 16,
                  "eps_list": [0.2, 0.1, 0.05, 0.025]},
        diagnostics=("mollify_checks", "flow_convergence"),
        runners={
            "mollify_checks": _run_mollify_checks,
            "flow_convergence": _run_flow_convergence,
        })


def _scenario_compact_support():
    return Scenario(
        scenario_id="compact_support_b",
        description="compactly supported smooth b: C_R vanishes for R past the support",
        dimension=1, T=1.0, field_id="compact_bump", damping_id="zero",
        u0_id="bump",
        defaults={"box_radius": 2.0, "steps": 96,
                  "delta_list": [1e-2, 1e-4, 1e-6], "r_list": [8.0]},
        diagnostics=("growth_split", "gronwall_log"),
        runners={
            "growth_split": _run_growth_split,
            "gronwall_log": lambda ctx: _run_gronwall_matrix(
                ctx, (96, 32), 2.0, check_delta_independent=True),
        })


def _scenario_damping_bounded():
    return Scenario(
        scenario_id="damping_bounded",
        description="b = 0, c = indicator of B_1: bounded DiPerna-Lions regime",
        dimension=1, T=1.0, field_id="zero", damping_id="box_indicator",
        u0_id="bump",
        defaults={"box_radius": 2.0, "steps": 128},
        diagnostics=("representation_exact", "weak_residual_refinement",
                     "l2_energy", "integrability_probe"),
        runners={
            "representation_exact": _run_representation_exact,
            "weak_residual_refinement": lambda ctx: _run_weak_refinement(
                ctx, [(64, 32), (128, 64), (256, 128)], phi_radius=1.5),
            "l2_energy": lambda ctx: _run_l2_energy(ctx, 128, 64),
            "integrability_probe": lambda ctx: _run_integrability(
                ctx, [10.0 ** (-k) for k in range(2, 11)], "convergent"),
        })


def _scenario_counterexample():
    return Scenario(
        scenario_id="counterexample_L1_damping",
        description="b = 0, c = |x|^(-1/2): integrable damping breaks local integrability",
        dimension=1, T=1.0, field_id="zero", damping_id="inv_sqrt",
        u0_id="indicator_unit",
        defaults={"box_radius": 1.0},
        diagnostics=("integrability_probe", "damping_l1", "weak_form"),
        runners={
            "integrability_probe": lambda ctx: _run_integrability(
                ctx, [1e-2, 1e-3, 1e-4], "divergent", min_growth=10.0),
            "damping_l1": _run_damping_l1,
            "weak_form": _skip_weak_form,
        })


def _scenario_twin_difference():
    return Scenario(
        scenario_id="twin_difference_gronwall",
        description="zero-datum twin difference under b = x with box damping",
        dimension=1, T=1.0, field_id="linear_expand", damping_id="box_indicator",
        u0_id="bump",
        defaults={"box_radius": 3.0, "steps": 96,
                  "delta_list": [1e-2, 1e-4, 1e-6], "r_list": [2.0, 4.0, 8.0]},
        diagnostics=("gronwall_log", "uniqueness_probe"),
        runners={
            "gronwall_log": lambda ctx: _run_gronwall_matrix(ctx, (96, 48), 3.0),
            "uniqueness_probe": lambda ctx: _run_uniqueness_probe(ctx, (96, 48), 3.0),
        })


def _scenario_bmo():
    return Scenario(
        scenario_id="bmo_divergence_log",
        description="div b = log(1/|x|) on B_1: BMO divergence uniqueness bound",
        dimension=1, T=1.0, field_id="log_drift", damping_id="zero", u0_id="bump",
        defaults={"box_radius": 2.0, "steps": 64,
                  "delta_list": [1e-2, 1e-4], "lambda_list": [9.0, 12.0, 16.0],
                  "r_list": [2.0]},
        diagnostics=("bmo_norm", "jn_decay", "superlevel_tails", "bmo_gronwall"),
        runners={
            "bmo_norm": _run_bmo_norm,
            "jn_decay": _run_jn_decay,
            "superlevel_tails": _run_superlevel_tails,
            "bmo_gronwall": _run_bmo_gronwall,
        })


REGISTRY = {
    s.scenario_id: s for s in (
        _scenario_identity(), _scenario_linear_expand(), _scenario_linear_contract(),
        _scenario_rotation(), _scenario_shear_bv(), _scenario_compact_support(),
        _scenario_damping_bounded(), _scenario_counterexample(),
        _scenario_twin_difference(), _scenario_bmo(),
    )
}


def list_scenarios(filter_text=None):
    """Rows (id, dimension, description), optionally substring-filtered."""
    rows = []
    for sid in REGISTRY:
        s = REGISTRY[sid]
        if filter_text and filter_text.lower() not in sid.lower():
            continue
        rows.append((sid, s.dimension, s.description))
    return rows


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def build_context(cfg) -> RunContext:
    scenario = REGISTRY[cfg.scenario_id]
    field = FIELD_CATALOG[cfg.field_id](scenario.dimension, cfg.T)
    damping = DAMPING_CATALOG[cfg.damping_id](scenario.dimension)
    u0 = U0_CATALOG[cfg.u0_id](scenario.dimension) if cfg.u0_id else None
    rng = np.random.default_rng(cfg.rng_seed)
    return RunContext(cfg=cfg, field=field, damping=damping, u0=u0, rng=rng)


def run_scenario(cfg) -> RunReport:
    """Execute the selected diagnostics of a resolved configuration.

    Module errors are re-raised as PipelineError tagged with the diagnostic
    stage. The report is returned; writing CSVs is the caller's move.
    """
    scenario = REGISTRY[cfg.scenario_id]
    ctx = build_context(cfg)
    report = RunReport(scenario_id=cfg.scenario_id, config=cfg.echo(),
                       version=__version__)
    for name in cfg.diagnostics:
        runner = scenario.runners[name]
        try:
            report.results.append(runner(ctx))
        except (RoughTransportError, ValueError) as exc:
            raise PipelineError(name, exc) from exc
    return report
