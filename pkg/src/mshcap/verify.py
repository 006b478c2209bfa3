"""One-command property suite over a battery of condensers.

Each check family realises one of the package's mathematical contracts
(definition benchmarks, normalization anchor, class nesting, comparison
principle, maximality, boundary limit, regularity, the capacity identity,
monotonicity, outer/inner equality, polar trends, sandwich bounds,
unweighted reduction).  `run_suite` executes every check over a seeded
battery, never aborts on individual failures, and returns a deterministic
report: two runs with the same seed produce identical JSON bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import capacity as capmod
from . import envelope as envmod
from . import hessian
from . import radial
from .grid import Ball, CondenserSpec, ScalarField, build_domain, integrate

#: check family -> contract description; the suite must cover every key
ANCHORS = {
    "measure-definition": "envelope and capacity match the radial reference solution",
    "normalization": "|z|^2 anchor: order-p density equals n! for every p",
    "class-nesting": "membership for class m implies membership for larger m",
    "comparison-principle": "Hessian mass dominance on sublevel sets {u < v}",
    "maximality": "envelope mass vanishes away from the compact set under refinement",
    "boundary-limit": "envelope attains the boundary value at first-order rate",
    "regularity": "envelope reaches the weight on regular compacts",
    "capacity-identity": "measure integral equals the admissible-family infimum",
    "monotonicity": "capacity monotone in compact set, weight and threshold",
    "outer-inner": "outer (shrinking-neighborhood) capacity agrees on compacts",
    "polar-trend": "capacities of shrinking balls follow the 1/log law to zero",
    "sandwich-bounds": "weighted capacity between scaled unweighted capacities",
    "unweighted-reduction": "psi=-1, delta=0 reduces to the unweighted capacity",
}


@dataclass
class SuiteConfig:
    seed: int = 7
    benchmark_h: float = 1.0 / 128
    battery_h: float = 1.0 / 64
    trend_hs: tuple = (1.0 / 32, 1.0 / 64, 1.0 / 128)
    triples: int = 10
    oracle_count: int = 20
    polar_eps: tuple = (1.0 / 4, 1.0 / 8, 1.0 / 16)
    include_n2_pointwise: bool = True   # solver-free n=2 checks, cheap
    icp_pairs: int = 10
    cap_value_tol: float = 0.03
    outer_agreement_tol: float = 0.05
    #: residuals below this are solver noise, exempt from slope fitting
    residual_floor: float = 1e-6
    #: families to run; None = all, () = empty battery
    families: tuple = None

    @classmethod
    def quick(cls, seed=7):
        """Small battery for smoke tests; protocol-accuracy thresholds are
        relaxed because coarse grids cannot meet the production tolerances."""
        return cls(
            seed=seed,
            benchmark_h=1.0 / 32,
            battery_h=1.0 / 32,
            trend_hs=(1.0 / 16, 1.0 / 32),
            triples=3,
            oracle_count=6,
            polar_eps=(1.0 / 4, 1.0 / 8),
            icp_pairs=4,
            cap_value_tol=0.08,
            outer_agreement_tol=0.35,
        )

    def describe(self):
        return {
            "seed": self.seed,
            "benchmark_h": self.benchmark_h,
            "battery_h": self.battery_h,
            "trend_hs": list(self.trend_hs),
            "triples": self.triples,
            "oracle_count": self.oracle_count,
            "polar_eps": list(self.polar_eps),
            "include_n2_pointwise": self.include_n2_pointwise,
            "icp_pairs": self.icp_pairs,
            "cap_value_tol": self.cap_value_tol,
            "outer_agreement_tol": self.outer_agreement_tol,
            "residual_floor": self.residual_floor,
            "families": None if self.families is None else list(self.families),
        }


@dataclass
class CheckResult:
    id: str
    family: str
    value: float
    threshold: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "id": self.id,
            "family": self.family,
            "value": float(self.value),
            "threshold": float(self.threshold),
            "passed": bool(self.passed),
            "details": self.details,
        }


@dataclass
class SuiteReport:
    results: list
    config: dict
    fingerprint: dict

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    @property
    def summary(self):
        n_pass = sum(1 for r in self.results if r.passed)
        return {"checks": len(self.results), "passed": n_pass, "failed": len(self.results) - n_pass}

    def to_dict(self):
        return {
            "results": [r.to_dict() for r in self.results],
            "summary": self.summary,
            "config": self.config,
            "fingerprint": self.fingerprint,
            "passed": self.passed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_table(self):
        lines = [f"{'check':38s} {'family':20s} {'value':>12s} {'threshold':>12s}  verdict"]
        for r in self.results:
            lines.append(
                f"{r.id:38s} {r.family:20s} {r.value:12.4e} {r.threshold:12.4e}  "
                + ("PASS" if r.passed else "FAIL")
            )
        s = self.summary
        lines.append(f"{s['passed']}/{s['checks']} checks passed")
        return "\n".join(lines)


class _Ctx:
    def __init__(self, cfg):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.cache = {}
        self.fingerprint = {"grids": {}, "sweeps": {}}

    def benchmark_spec(self, h=None):
        return CondenserSpec(
            n=1,
            m=1,
            domain_shape=Ball((0.0, 0.0), 1.0),
            compact_shape=Ball((0.0, 0.0), 0.5),
            psi=-1.0,
            delta=0.0,
            h=h or self.cfg.benchmark_h,
        )

    def capacity(self, spec, h, **kw):
        key = (json.dumps(spec.describe(), sort_keys=True), repr(h), repr(sorted(kw.items())))
        if key not in self.cache:
            rep = capmod.capacity_via_measure(spec, h, **kw)
            self.cache[key] = rep
            dom = rep.solution.domain
            tag = f"n{dom.n}_h{h:g}"
            self.fingerprint["grids"][tag] = list(dom.shape)
            self.fingerprint["sweeps"][f"{tag}_{len(self.fingerprint['sweeps'])}"] = (
                rep.solution.iterations
            )
        return self.cache[key]


# ---------------------------------------------------------------------------
# individual checks


def _check_measure_definition(ctx):
    cfg = ctx.cfg
    spec = ctx.benchmark_spec()
    rep = ctx.capacity(spec, cfg.benchmark_h)
    sol = rep.solution
    dom = sol.domain

    t, f = radial.envelope_profile(1, 1, 0.5, 1.0, -1.0, 0.0)
    ref_cap = radial.flux_capacity(1, 1, t, f)
    idx = dom.flat_indices("domain")
    rr = dom.coords(idx)
    tt = np.sqrt((rr**2).sum(axis=1))
    ref_vals = np.interp(tt, t, f, left=-1.0, right=0.0)
    sup_err = float(np.abs(sol.omega.values.ravel()[idx] - ref_vals).max())

    cap_err = abs(rep.value - ref_cap) / ref_cap
    return [
        CheckResult(
            id="measure-definition/envelope-profile",
            family="measure-definition",
            value=sup_err,
            threshold=3.0 * cfg.benchmark_h,
            passed=sup_err <= 3.0 * cfg.benchmark_h,
            details={"h": cfg.benchmark_h},
        ),
        CheckResult(
            id="measure-definition/capacity-value",
            family="measure-definition",
            value=cap_err,
            threshold=cfg.cap_value_tol,
            passed=cap_err <= cfg.cap_value_tol,
            details={"reference": ref_cap, "measured": rep.value},
        ),
    ]


def _check_normalization(ctx):
    out = []
    for n in (1, 2):
        h = 1.0 / 16 if n == 1 else 1.0 / 8
        dom = build_domain(Ball((0.0,) * 2 * n, 1.0), Ball((0.0,) * 2 * n, 0.3), h, n)
        u = ScalarField.from_function(dom, lambda e: e["r"] ** 2)
        worst = 0.0
        for p in range(1, n + 1):
            mf = hessian.hessian_density(u, p)
            dev = float(np.abs(mf.density.ravel()[mf.idx] - math.factorial(n)).max())
            worst = max(worst, dev)
        out.append(
            CheckResult(
                id=f"normalization/n{n}",
                family="normalization",
                value=worst,
                threshold=1e-8,
                passed=worst <= 1e-8,
            )
        )
    return out


def _quadratic_field(dom, h11, h22, a, b):
    def fn(e):
        return (
            h11 * e["r1"] ** 2
            + h22 * e["r2"] ** 2
            + 2.0 * a * (e["x1"] * e["x2"] + e["y1"] * e["y2"])
            + 2.0 * b * (e["y1"] * e["x2"] - e["x1"] * e["y2"])
        )

    return ScalarField.from_function(dom, fn)


def _check_class_nesting(ctx):
    if not ctx.cfg.include_n2_pointwise:
        return []
    dom = build_domain(Ball((0.0,) * 4, 1.0), Ball((0.0,) * 4, 0.3), 1.0 / 8, 2)
    violations = 0
    cases = 0
    witness = 0
    for _ in range(12):
        h11, h22 = ctx.rng.uniform(-1, 1, size=2)
        a, b = ctx.rng.uniform(-0.5, 0.5, size=2)
        u = _quadratic_field(dom, h11, h22, a, b)
        m1 = hessian.is_m_subharmonic(u, 1).member
        m2 = hessian.is_m_subharmonic(u, 2).member
        cases += 1
        if m1 and not m2:
            violations += 1
        if m2 and not m1:
            witness += 1
    u = _quadratic_field(dom, 1.0, -0.5, 0.0, 0.0)
    strict_ok = (
        hessian.is_m_subharmonic(u, 2).member and not hessian.is_m_subharmonic(u, 1).member
    )
    return [
        CheckResult(
            id="class-nesting/pointwise",
            family="class-nesting",
            value=float(violations + (0 if strict_ok else 1)),
            threshold=0.0,
            passed=violations == 0 and strict_ok,
            details={"cases": cases, "strict_witnesses": witness},
        )
    ]


def _floored_log_field(dom, scale, offset, floor_t):
    def fn(e):
        return scale * np.maximum(np.log(np.maximum(e["r"], 1e-300)), np.log(floor_t)) + offset

    return ScalarField.from_function(dom, fn)


def _check_comparison_principle(ctx):
    cfg = ctx.cfg
    h = cfg.battery_h
    dom = build_domain(Ball((0.0, 0.0), 1.0), Ball((0.0, 0.0), 0.5), h, 1)
    worst = -math.inf
    pairs = 0
    for _ in range(cfg.icp_pairs):
        a1 = (1.0 + 0.4 * ctx.rng.uniform()) / math.log(2.0)
        u = _floored_log_field(dom, a1, 0.0, 2.0 * h)
        lvl = -0.55 + 0.25 * ctx.rng.uniform()
        tilt = 0.08 * ctx.rng.uniform(-1, 1)
        v = ScalarField.from_function(dom, lambda e, l=lvl, t=tilt: l + t * e["x1"])
        fmask = (u.values < v.values) & dom.region_mask("domain")
        if not fmask.any() or bool((fmask & dom.region_mask("near_boundary")).any()):
            continue
        pairs += 1
        for k in range(1, dom.n + 1):  # k = 1..p with p = n - m + 1, m = 1
            mu = hessian.hessian_density(u, k).total(fmask)
            mv = hessian.hessian_density(v, k).total(fmask)
            worst = max(worst, mv - mu)
    if ctx.cfg.include_n2_pointwise:
        dom2 = build_domain(Ball((0.0,) * 4, 1.0), Ball((0.0,) * 4, 0.3), 1.0 / 8, 2)
        for lvl in (-0.5, -0.35):
            u = _floored_log_field(dom2, 1.0 / math.log(2.0), 0.0, 2.0 / 8)
            v = ScalarField.constant(dom2, lvl)
            fmask = (u.values < v.values) & dom2.region_mask("domain")
            if not fmask.any() or bool((fmask & dom2.region_mask("near_boundary")).any()):
                continue
            pairs += 1
            for k in (1, 2):
                mu = hessian.hessian_density(u, k).total(fmask)
                mv = hessian.hessian_density(v, k).total(fmask)
                worst = max(worst, mv - mu)
    thr = capmod.tau(h)
    return [
        CheckResult(
            id="comparison-principle/battery",
            family="comparison-principle",
            value=worst,
            threshold=thr,
            passed=pairs > 0 and worst <= thr,
            details={"pairs": pairs},
        )
    ]


def residual_trend_ok(hs, residuals, floor, min_slope=0.8):
    """Refinement-trend verdict with a solver-noise exemption.

    Returns (slope, ok): residuals entirely below the floor count as passed
    (the scheme drives the measured operator to solver tolerance, which is
    faster than any power of h and makes the log-log slope meaningless).
    """
    residuals = np.asarray(residuals, dtype=float)
    if residuals.max() <= floor:
        return math.inf, True
    slope = float(np.polyfit(np.log(np.asarray(hs)), np.log(np.maximum(residuals, 1e-300)), 1)[0])
    return slope, slope >= min_slope


def _check_maximality(ctx):
    cfg = ctx.cfg
    residuals = []
    for h in cfg.trend_hs:
        rep = ctx.capacity(ctx.benchmark_spec(h), h)
        residuals.append(rep.solution.maximality_residual)
    slope, ok = residual_trend_ok(cfg.trend_hs, residuals, cfg.residual_floor)
    below = bool(max(residuals) <= cfg.residual_floor)
    return [
        CheckResult(
            id="maximality/trend",
            family="maximality",
            value=float(max(residuals)) if below else slope,
            threshold=cfg.residual_floor if below else 0.8,
            passed=ok,
            details={
                "residuals": [float(r) for r in residuals],
                "below_noise_floor": below,
            },
        )
    ]


def _check_boundary_limit(ctx):
    cfg = ctx.cfg
    h = cfg.benchmark_h
    rep = ctx.capacity(ctx.benchmark_spec(h), h)
    res = rep.solution.boundary_residual
    # gradient of the reference profile at the outer radius is 1/log 2
    thr = 4.0 * h / math.log(2.0)
    spec_d = ctx.benchmark_spec(h).with_(psi=0.0)
    sol_d = envmod.solve_envelope(spec_d, h, allow_degenerate=True)
    return [
        CheckResult(
            id="boundary-limit/radial",
            family="boundary-limit",
            value=res,
            threshold=thr,
            passed=res <= thr,
        ),
        CheckResult(
            id="boundary-limit/degenerate",
            family="boundary-limit",
            value=sol_d.boundary_residual,
            threshold=0.0,
            passed=sol_d.boundary_residual == 0.0,
        ),
    ]


def _check_regularity(ctx):
    cfg = ctx.cfg
    rep = ctx.capacity(ctx.benchmark_spec(), cfg.benchmark_h)
    r = envmod.regularity_report(rep.solution)
    return [
        CheckResult(
            id="regularity/ball",
            family="regularity",
            value=r.max_gap,
            threshold=r.tol,
            passed=r.regular,
        )
    ]


def _check_capacity_identity(ctx):
    cfg = ctx.cfg
    spec = ctx.benchmark_spec()
    rep = ctx.capacity(spec, cfg.benchmark_h)
    dom = rep.solution.domain
    fields, mtol = capmod.radial_candidate_family(spec, dom, count=cfg.oracle_count - 1)
    family = [("envelope", rep.solution.omega)] + fields
    oracle = capmod.capacity_direct_oracle(
        spec, family, domain=dom, measure_report=rep, membership_tol=mtol
    )
    rel = abs(oracle.gap) / max(rep.value, 1e-300)
    return [
        CheckResult(
            id="capacity-identity/oracle-gap",
            family="capacity-identity",
            value=rel,
            threshold=0.02,
            passed=rel <= 0.02 and oracle.argmin == "envelope",
            details={"argmin": oracle.argmin, "family": len(family)},
        )
    ]


def _nested_ball_pair(rng, r_lo=0.18, r_hi=0.32):
    c1 = rng.uniform(-0.04, 0.04, size=2)
    r1 = rng.uniform(r_lo, r_hi)
    shift = rng.uniform(-0.03, 0.03, size=2)
    r2 = r1 + float(np.linalg.norm(shift)) + rng.uniform(0.05, 0.12)
    k1 = Ball(tuple(c1), r1)
    k2 = Ball(tuple(c1 + shift), r2)
    return k1, k2


def _check_monotonicity(ctx):
    cfg = ctx.cfg
    h = cfg.battery_h
    d_shape = Ball((0.0, 0.0), 1.0)
    out = []

    worst = -math.inf
    for _ in range(cfg.triples):
        k1, k2 = _nested_ball_pair(ctx.rng)
        s1 = CondenserSpec(1, 1, d_shape, k1, -1.0, 0.0, h)
        s2 = CondenserSpec(1, 1, d_shape, k2, -1.0, 0.0, h)
        v1 = ctx.capacity(s1, h).value
        v2 = ctx.capacity(s2, h).value
        worst = max(worst, v1 - v2)
    thr = capmod.tau(h)
    out.append(
        CheckResult(
            id="monotonicity/compact",
            family="monotonicity",
            value=worst,
            threshold=thr,
            passed=worst <= thr,
            details={"triples": cfg.triples},
        )
    )

    worst = -math.inf
    for _ in range(cfg.triples):
        k = Ball((0.0, 0.0), float(ctx.rng.uniform(0.3, 0.5)))
        c2 = float(ctx.rng.uniform(-1.1, -0.7))
        c1 = c2 - float(ctx.rng.uniform(0.1, 0.5))
        v1 = ctx.capacity(CondenserSpec(1, 1, d_shape, k, c1, 0.0, h), h).value
        v2 = ctx.capacity(CondenserSpec(1, 1, d_shape, k, c2, 0.0, h), h).value
        worst = max(worst, v2 - v1)  # lower weight must not decrease capacity
    out.append(
        CheckResult(
            id="monotonicity/weight",
            family="monotonicity",
            value=worst,
            threshold=thr,
            passed=worst <= thr,
            details={"triples": cfg.triples},
        )
    )

    worst = -math.inf
    for _ in range(cfg.triples):
        k = Ball((0.0, 0.0), float(ctx.rng.uniform(0.3, 0.5)))
        d1 = float(ctx.rng.uniform(-0.5, 0.0))
        d2 = d1 + float(ctx.rng.uniform(0.1, 0.5))
        v1 = ctx.capacity(CondenserSpec(1, 1, d_shape, k, -1.0, d1, h), h).value
        v2 = ctx.capacity(CondenserSpec(1, 1, d_shape, k, -1.0, d2, h), h).value
        worst = max(worst, v1 - v2)
    out.append(
        CheckResult(
            id="monotonicity/threshold",
            family="monotonicity",
            value=worst,
            threshold=thr,
            passed=worst <= thr,
            details={"triples": cfg.triples},
        )
    )
    return out


def _check_outer_inner(ctx):
    cfg = ctx.cfg
    h = cfg.benchmark_h
    # the largest fattening (16h) must stay separated from the boundary
    r = min(0.45, 1.0 - 16.0 * h - 6.0 * h)
    spec = CondenserSpec(1, 1, Ball((0.0, 0.0), 1.0), Ball((0.0, 0.0), r), -1.0, 0.0, h)
    inner = ctx.capacity(spec, h)
    outer = capmod.outer_capacity(spec, h=h)
    rel = abs(outer.extrapolated - inner.value) / max(inner.value, 1e-300)
    return [
        CheckResult(
            id="outer-inner/fat-ball",
            family="outer-inner",
            value=rel,
            threshold=cfg.outer_agreement_tol,
            passed=rel <= cfg.outer_agreement_tol,
            details={
                "inner": inner.value,
                "outer_extrapolated": outer.extrapolated,
                "outer_table": [[float(a), float(b)] for a, b in outer.refinement_table],
            },
        )
    ]


def _check_polar_trend(ctx):
    cfg = ctx.cfg
    h = cfg.benchmark_h
    values = []
    for eps in cfg.polar_eps:
        spec = CondenserSpec(1, 1, Ball((0.0, 0.0), 1.0), Ball((0.0, 0.0), eps), -1.0, 0.0, h)
        values.append(ctx.capacity(spec, h).value)
    eps = np.asarray(cfg.polar_eps)
    vals = np.asarray(values)
    basis = 1.0 / np.log(1.0 / eps)
    a = float((basis * vals).sum() / (basis * basis).sum())
    resid = float(np.abs(vals - a * basis).max() / vals.max())
    decreasing = bool(np.all(np.diff(vals) < 0))
    return [
        CheckResult(
            id="polar-trend/shrinking-balls",
            family="polar-trend",
            value=resid,
            threshold=0.10,
            passed=decreasing and resid <= 0.10,
            details={"values": [float(v) for v in vals], "fit_coefficient": a},
        )
    ]


def _check_sandwich(ctx):
    cfg = ctx.cfg
    h = cfg.battery_h
    from . import expr

    d_shape = Ball((0.0, 0.0), 1.0)
    k_shape = Ball((0.0, 0.0), 0.5)
    spec_nc = CondenserSpec(1, 1, d_shape, k_shape, expr.parse("-1 + 0.2*x1"), 0.0, h)
    pb = capmod.polar_bounds_check(spec_nc, h)
    viol = max(
        pb.lower_constant * pb.unweighted - pb.weighted,
        pb.weighted - pb.upper_constant * pb.unweighted,
    )

    spec_c = CondenserSpec(1, 1, d_shape, k_shape, -0.7, 0.3, h)
    wrep = ctx.capacity(spec_c, h)
    urep = ctx.capacity(spec_c.with_(psi=-1.0, delta=0.0), h)
    tie = abs(wrep.value - urep.value) / max(urep.value, 1e-300)
    return [
        CheckResult(
            id="sandwich-bounds/nonconstant",
            family="sandwich-bounds",
            value=viol,
            threshold=pb.slack,
            passed=pb.passed,
            details=pb.to_dict(),
        ),
        CheckResult(
            id="sandwich-bounds/constant-tie",
            family="sandwich-bounds",
            value=tie,
            threshold=0.02,
            passed=tie <= 0.02,
            details={"weighted": wrep.value, "unweighted": urep.value},
        ),
    ]


def _check_unweighted(ctx):
    cfg = ctx.cfg
    # the shrink protocol needs fattenings small next to the compact: use the
    # benchmark grid, not the battery grid
    h = cfg.benchmark_h
    spec = CondenserSpec(1, 1, Ball((0.0, 0.0), 1.0), Ball((0.0, 0.0), 0.4), -2.5, 1.0, h)
    rep = capmod.unweighted_capacity(spec, h)
    direct = ctx.capacity(spec.with_(psi=-1.0, delta=0.0), h)
    same = abs(rep.value - direct.value)
    rel_outer = rep.constants["outer_relative_difference"]
    return [
        CheckResult(
            id="unweighted-reduction/delegation",
            family="unweighted-reduction",
            value=same,
            threshold=1e-12,
            passed=same <= 1e-12,
        ),
        CheckResult(
            id="unweighted-reduction/outer-agreement",
            family="unweighted-reduction",
            value=rel_outer,
            threshold=cfg.outer_agreement_tol,
            passed=rel_outer <= cfg.outer_agreement_tol,
        ),
    ]


_CHECKS = (
    ("measure-definition", _check_measure_definition),
    ("normalization", _check_normalization),
    ("class-nesting", _check_class_nesting),
    ("comparison-principle", _check_comparison_principle),
    ("maximality", _check_maximality),
    ("boundary-limit", _check_boundary_limit),
    ("regularity", _check_regularity),
    ("capacity-identity", _check_capacity_identity),
    ("monotonicity", _check_monotonicity),
    ("outer-inner", _check_outer_inner),
    ("polar-trend", _check_polar_trend),
    ("sandwich-bounds", _check_sandwich),
    ("unweighted-reduction", _check_unweighted),
)


def covered_families():
    return tuple(sorted({family for family, _ in _CHECKS}))


def run_suite(cfg=None):
    """Run every configured check; individual failures are recorded, never raised."""
    cfg = cfg or SuiteConfig()
    ctx = _Ctx(cfg)
    results = []
    for family, fn in _CHECKS:
        if cfg.families is not None and family not in cfg.families:
            continue
        try:
            results.extend(fn(ctx))
        except Exception as exc:  # noqa: BLE001 - recorded as a failing check
            results.append(
                CheckResult(
                    id=f"{family}/error",
                    family=family,
                    value=math.inf,
                    threshold=0.0,
                    passed=False,
                    details={"error": f"{type(exc).__name__}: {exc}"},
                )
            )
    return SuiteReport(results=results, config=cfg.describe(), fingerprint=ctx.fingerprint)
