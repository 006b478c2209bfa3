"""Weighted m-subharmonic measure of a condenser as a discrete Perron envelope.

The envelope is the largest grid field that is m-subharmonic on D, at most
psi on the compact set K and equal to delta on the Dirichlet layer.  It is
computed by monotone nodal sweeping from above:

* p = 1 (Laplace branch): the nodal update is the discrete-harmonic average
  of the 4n axis neighbors (zero sigma_1), over-relaxed and projected onto
  the obstacle on K nodes (projected SOR);
* p = 2, n = 2 (Monge-Ampere branch): the update is the minimum over a fixed
  set of lattice complex lines of the 4-point average along the line.  Per
  orthogonal line pair this is the closed-form root of the product of
  positive parts of the two directional second differences, and it is the
  largest value keeping every directional difference nonnegative, so the
  fixed point is degenerate-admissible (sigma_p = 0 within the stencil class).

Sweeps use a red-black node coloring so that each half-sweep is a single
vectorised update; results are deterministic for the fixed color schedule.
Starting from u = delta (psi on K) the ordinary sweeps are monotone
decreasing, which gives a convergence certificate from above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import hessian
from .errors import ConvergenceError, InfeasibleError
from .grid import BOUNDARY, COMPACT_K, EXTERIOR, INTERIOR, ScalarField, dilate, erode

_EPS_DEFAULT = 1e-10
_MAX_SWEEPS = {1: 100_000, 2: 10_000}


# ---------------------------------------------------------------------------
# lattice complex lines for the Monge-Ampere branch


def _ggcd(a, b):
    """Gaussian-integer gcd; arguments and result as (re, im) int pairs."""
    while b != (0, 0):
        br, bi = b
        nb = br * br + bi * bi
        ar, ai = a
        # a * conj(b)
        pr, pi = ar * br + ai * bi, ai * br - ar * bi
        qr, qi = round(pr / nb), round(pi / nb)
        rr = ar - (qr * br - qi * bi)
        ri = ai - (qr * bi + qi * br)
        a, b = b, (rr, ri)
    return a


def _unit_mults(vec):
    """The four unit multiples i^k * vec of a pair of Gaussian integers."""
    out = []
    cur = vec
    for _ in range(4):
        out.append(cur)
        cur = tuple((-ci, cr) for (cr, ci) in cur)  # multiply by i
    return out


def complex_lines(max_norm2=5):
    """Primitive complex lattice lines in C^2 up to norm^2 max_norm2.

    Each line is a pair of Gaussian integers ((a1), (a2)) modulo units; the
    default norm bound keeps every stencil offset within max-norm radius 2.
    """
    seen = {}
    rng = range(-2, 3)
    for p in rng:
        for q in rng:
            for r in rng:
                for s in rng:
                    if p == q == r == s == 0:
                        continue
                    if p * p + q * q + r * r + s * s > max_norm2:
                        continue
                    g = _ggcd((p, q), (r, s))
                    if g[0] * g[0] + g[1] * g[1] != 1:
                        continue
                    canon = min(_unit_mults(((p, q), (r, s))))
                    seen[canon] = True
    return sorted(seen)


def orthogonal_line(a):
    """The orthogonal complement line of a = ((a1), (a2)): b = (-conj(a2), conj(a1))."""
    (p, q), (r, s) = a
    return ((-r, s), (p, -q))


def line_pairs(max_norm2=5):
    """Orthogonal line pairs (each unordered pair listed once)."""
    lines = complex_lines(max_norm2)
    canon = {min(_unit_mults(l)): l for l in lines}
    pairs = []
    done = set()
    for l in lines:
        o = min(_unit_mults(orthogonal_line(l)))
        key = tuple(sorted([l, o]))
        if key in done:
            continue
        done.add(key)
        pairs.append((l, canon.get(o, o)))
    return pairs


def _line_offsets(line, strides):
    """Flat-index offsets of the two real directions (a and i*a) of a line."""
    (p, q), (r, s) = line
    v = np.array([p, q, r, s], dtype=np.int64)
    w = np.array([-q, p, -s, r], dtype=np.int64)
    return int(v @ strides), int(w @ strides)


# ---------------------------------------------------------------------------
# sweep core


def _split_by_color(domain, region):
    par = domain.parity().ravel()
    idx = domain.flat_indices(region)
    return [idx[par[idx] == 0], idx[par[idx] == 1]]


def _contact_arm_setup(domain, theta_min=0.1):
    """Cut arms for free nodes bordering the compact set (p = 1 branch).

    The contact surface lies between lattice nodes; the discrete-harmonic
    update at a K-adjacent free node therefore uses the unequal-arm second
    difference, with the arm toward an adjacent K node shortened to the true
    surface crossing.  This pins the envelope's gradient kink at the actual
    compact boundary instead of the rasterised staircase (the dominant
    capacity bias otherwise).

    Returns (cidx, neighbor_idx (C, 2d), theta (C, 2d)) or None when no free
    node borders K.
    """
    mask = domain.mask
    free = (mask == INTERIOR) & dilate(mask == COMPACT_K, 1)
    cidx = np.flatnonzero(free.ravel())
    if cidx.size == 0:
        return None
    d = domain.dim
    h = domain.h
    shape_k = domain.compact_shape
    pts = domain.coords(cidx)
    nbs = np.empty((cidx.size, 2 * d), dtype=np.int64)
    theta = np.ones((cidx.size, 2 * d), dtype=float)
    flat_mask = mask.ravel()
    for a in range(d):
        for s, col in ((1, 2 * a), (-1, 2 * a + 1)):
            nb = cidx + s * int(domain.strides[a])
            nbs[:, col] = nb
            into_k = flat_mask[nb] == COMPACT_K
            if not into_k.any():
                continue
            base = pts[into_k]
            step = np.zeros(d)
            step[a] = s * h
            lo = np.zeros(into_k.sum())
            hi = np.ones(into_k.sum())
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                outside = shape_k.exterior_distance(base + mid[:, None] * step) > 0
                lo[outside] = mid[outside]
                hi[~outside] = mid[~outside]
            theta[into_k, col] = np.maximum(0.5 * (lo + hi), theta_min)
    return cidx, nbs, theta


def _make_cut_update(nbs, theta):
    d2 = theta.shape[1]
    axis_sum = [theta[:, 2 * a] + theta[:, 2 * a + 1] for a in range(d2 // 2)]
    wgt = np.empty_like(theta)
    den = 0.0
    for a in range(d2 // 2):
        wgt[:, 2 * a] = 1.0 / (theta[:, 2 * a] * axis_sum[a])
        wgt[:, 2 * a + 1] = 1.0 / (theta[:, 2 * a + 1] * axis_sum[a])
        den = den + 1.0 / (theta[:, 2 * a] * theta[:, 2 * a + 1])
    inv_den = 1.0 / den

    def update(u, idx):
        acc = wgt[:, 0] * u[nbs[:, 0]]
        for col in range(1, d2):
            acc = acc + wgt[:, col] * u[nbs[:, col]]
        return acc * inv_den

    return update


def _line_radius(line):
    return max(abs(c) for pair in line for c in pair)


def _make_update(domain, p, stencil, max_radius=2):
    """Nodal update closure; for p = 2 only lines of max-norm radius
    <= max_radius are used, so shallow nodes never read Dirichlet data far
    beyond the boundary (which would inflate the effective domain by O(h))."""
    s = domain.strides
    if p == 1:
        offs = []
        for a in range(domain.dim):
            offs.extend([int(s[a]), -int(s[a])])
        inv = 1.0 / len(offs)

        def update(u, idx):
            acc = u[idx + offs[0]]
            for o in offs[1:]:
                acc = acc + u[idx + o]
            return acc * inv

        return update

    max_norm2 = 5 if stencil == "wide" else 2
    lines = [l for l in complex_lines(max_norm2) if _line_radius(l) <= max_radius]
    loffs = [_line_offsets(l, s) for l in lines]

    def update(u, idx):
        best = None
        for (o1, o2) in loffs:
            acc = u[idx + o1] + u[idx - o1] + u[idx + o2] + u[idx - o2]
            best = acc if best is None else np.minimum(best, acc)
        return best * 0.25

    return update


#: damping of the ghost updates; keeps the extrapolation feedback loop stable
_GHOST_RELAX = 0.15
_GHOST_RATIO_CAP = 4.0


def _ghost_setup(domain, search_radius=3):
    """Pair each boundary-layer node with a nearby inside node and precompute
    the extrapolation ratio (outside surface distance / inside surface depth).

    The Dirichlet value is then imposed at the true domain surface: the layer
    node tracks delta + ratio * (delta - u(inside node)), the first-order
    extrapolation of the boundary condition through the staircase.  Partner
    nodes shallower than 0.6h are skipped when a deeper one is available, and
    the ratio is capped, so the feedback gain of the coupled iteration stays
    below one.
    """
    shape = domain.domain_shape
    bidx = domain.flat_indices("boundary")
    if bidx.size == 0:
        return None
    in_d = ((domain.mask == INTERIOR) | (domain.mask == COMPACT_K)).ravel()
    d = domain.dim
    offsets = []
    rng = range(-search_radius, search_radius + 1)
    for off in np.stack(np.meshgrid(*[list(rng)] * d, indexing="ij"), axis=-1).reshape(-1, d):
        if not np.any(off):
            continue
        offsets.append((float(np.linalg.norm(off)), tuple(int(v) for v in off)))
    offsets.sort()
    strides = domain.strides
    total = int(np.prod(domain.shape))

    def scan(require_depth):
        nb = np.full(bidx.shape, -1, dtype=np.int64)
        for _, off in offsets:
            missing = nb < 0
            if not missing.any():
                break
            cand = bidx[missing] + int(np.asarray(off, dtype=np.int64) @ strides)
            ok = (cand >= 0) & (cand < total)
            ok[ok] = in_d[cand[ok]]
            if require_depth and ok.any():
                deep = shape.interior_surface_distance(domain.coords(cand[ok]))
                sub = ok[ok].copy()
                sub[deep < 0.6 * domain.h] = False
                ok[ok.copy()] = sub
            tmp = nb[missing]
            tmp[ok] = cand[ok]
            nb[missing] = tmp
        return nb

    nb = scan(require_depth=True)
    fallback = nb < 0
    if fallback.any():
        nb2 = scan(require_depth=False)
        nb[fallback] = nb2[fallback]
    keep = nb >= 0
    bidx, nb = bidx[keep], nb[keep]
    over = shape.exterior_distance(domain.coords(bidx))
    depth = np.maximum(shape.interior_surface_distance(domain.coords(nb)), 0.25 * domain.h)
    ratio = np.minimum(over / depth, _GHOST_RATIO_CAP)
    return bidx, nb, ratio


def _sweep_once(u, groups, delta, omega, ghost):
    dmax = 0.0
    if ghost is not None:
        bidx, nbidx, ratio = ghost
        old = u[bidx]
        target = delta + ratio * np.maximum(delta - u[nbidx], 0.0)
        vals = old + _GHOST_RELAX * (target - old)
        u[bidx] = vals
        dmax = float(np.abs(vals - old).max())
    for idx, psi, update in groups:
        if idx.size == 0:
            continue
        old = u[idx]
        cand = update(u, idx)
        if omega != 1.0:
            cand = old + omega * (cand - old)
        np.minimum(cand, delta, out=cand)
        if psi is not None:
            np.minimum(cand, psi, out=cand)
        u[idx] = cand
        d = float(np.abs(cand - old).max())
        if d > dmax:
            dmax = d
    return dmax


def solve_on_masks(
    domain,
    u0,
    free_region,
    obstacle_idx,
    psi_values,
    p,
    delta,
    *,
    eps=_EPS_DEFAULT,
    max_sweeps=None,
    omega="auto",
    stencil="wide",
    boundary="extrapolate",
    obstacle="cut",
    raise_on_budget=True,
):
    """Sweep to the fixed point on arbitrary free/obstacle node sets.

    u0 is a full-grid array taken as initial state; nodes outside
    free_region/obstacle_idx are never written (they act as Dirichlet data),
    except that with boundary="extrapolate" the BOUNDARY layer tracks the
    first-order extrapolation of the Dirichlet value through the true domain
    surface.  Returns (u, sweeps, final_update, converged, stop_tol).
    """
    u = np.array(u0, dtype=float)
    par = domain.parity().ravel()
    if isinstance(free_region, np.ndarray) and free_region.dtype != bool:
        free = free_region.astype(np.int64)  # already flat indices
    else:
        free = domain.flat_indices(free_region)

    # near the boundary the wide stencil must not reach past the Dirichlet
    # ring; nodes of depth < 2 inside D use radius-1 lines only
    groups = []
    if p > 1:
        in_d = (domain.mask == INTERIOR) | (domain.mask == COMPACT_K)
        deep = erode(in_d, 2).ravel()
        updates = {
            "deep": _make_update(domain, p, stencil, max_radius=2),
            "shallow": _make_update(domain, p, stencil, max_radius=1),
        }
        node_sets = [
            ("deep", free[deep[free]], None),
            ("shallow", free[~deep[free]], None),
            ("deep", obstacle_idx[deep[obstacle_idx]], psi_values[deep[obstacle_idx]]),
            ("shallow", obstacle_idx[~deep[obstacle_idx]], psi_values[~deep[obstacle_idx]]),
        ]
        for color in (0, 1):
            for tag, idx, psi in node_sets:
                sel = par[idx] == color
                groups.append((idx[sel], None if psi is None else psi[sel], updates[tag]))
    else:
        std = _make_update(domain, p, stencil)
        contact = _contact_arm_setup(domain) if obstacle == "cut" else None
        if contact is not None:
            cidx, nbs, theta = contact
            keep = np.isin(cidx, free)
            cidx, nbs, theta = cidx[keep], nbs[keep], theta[keep]
            if cidx.size == 0:
                contact = None
        if contact is not None:
            plain = free[~np.isin(free, cidx)]
        else:
            plain = free
        for color in (0, 1):
            sel = par[plain] == color
            groups.append((plain[sel], None, std))
            if contact is not None:
                csel = par[cidx] == color
                groups.append(
                    (cidx[csel], None, _make_cut_update(nbs[csel], theta[csel]))
                )
            osel = par[obstacle_idx] == color
            groups.append((obstacle_idx[osel], psi_values[osel], std))

    if omega == "auto":
        if p == 1:
            w = max(domain.shape)
            omega = min(2.0 / (1.0 + math.sin(math.pi / w)), 1.95)
        else:
            omega = 1.0
    if max_sweeps is None:
        max_sweeps = _MAX_SWEEPS[domain.n]

    scale = max(1.0, abs(delta), float(np.abs(psi_values).max()) if psi_values.size else 0.0)
    stop_tol = max(eps * domain.h**2, 256.0 * np.finfo(float).eps * scale)
    ghost = _ghost_setup(domain) if boundary == "extrapolate" else None
    uflat = u.ravel()

    sweeps = 0
    dmax = np.inf
    while sweeps < max_sweeps:
        dmax = _sweep_once(uflat, groups, delta, omega, ghost)
        sweeps += 1
        if dmax < stop_tol:
            return u, sweeps, dmax, True, stop_tol
    if raise_on_budget:
        raise ConvergenceError(
            f"no convergence after {sweeps} sweeps (last update {dmax:.3e}, "
            f"threshold {stop_tol:.3e})",
            final_update=dmax,
            sweeps=sweeps,
        )
    return u, sweeps, dmax, False, stop_tol


# ---------------------------------------------------------------------------
# public solver


@dataclass
class EnvelopeSolution:
    """Converged envelope with convergence and admissibility diagnostics."""

    omega: ScalarField
    spec: object
    domain: object
    iterations: int
    final_update: float
    converged: bool
    stop_tol: float
    obstacle_active: np.ndarray        # bool over grid, true on contact K nodes
    maximality_residual: float
    boundary_residual: float

    def summary(self):
        return {
            "iterations": self.iterations,
            "final_update": self.final_update,
            "converged": self.converged,
            "stop_tol": self.stop_tol,
            "active_nodes": int(np.count_nonzero(self.obstacle_active)),
            "maximality_residual": self.maximality_residual,
            "boundary_residual": self.boundary_residual,
        }


def _initial_state(domain, spec, psi_vals, init):
    u = np.full(domain.shape, float(spec.delta))
    if init is not None:
        if isinstance(init, ScalarField):
            src = init
            if src.domain.same_grid(domain):
                u = src.values.copy()
            else:
                u = _prolong(src, domain)
        else:
            u = np.array(init, dtype=float)
        np.minimum(u, spec.delta, out=u)
        u[domain.mask == BOUNDARY] = spec.delta
        u[domain.mask == EXTERIOR] = spec.delta
    kidx = domain.flat_indices("compact")
    u.ravel()[kidx] = np.minimum(u.ravel()[kidx], psi_vals)
    return u


def _prolong(field, fine):
    """Multilinear interpolation of a coarse field onto a finer grid."""
    from scipy.ndimage import map_coordinates

    coarse = field.domain
    idx = np.flatnonzero((fine.mask != EXTERIOR).ravel())
    pts = fine.coords(idx)
    coords = [
        (pts[:, a] / coarse.h) - coarse.origin[a] for a in range(fine.dim)
    ]
    vals = map_coordinates(field.values, np.array(coords), order=1, mode="nearest")
    out = np.full(fine.shape, float(field.values.max()))
    out.ravel()[idx] = vals
    return out


def solve_envelope(
    spec,
    h=None,
    *,
    domain=None,
    eps=_EPS_DEFAULT,
    max_sweeps=None,
    omega="auto",
    stencil="wide",
    boundary="extrapolate",
    obstacle="cut",
    init=None,
    allow_degenerate=False,
):
    """Compute the weighted m-subharmonic measure of the condenser.

    The unweighted special case is psi = -1, delta = 0.  `init` may be a
    ScalarField on any grid of the same generators (used for coarse-to-fine
    warm starts).  With allow_degenerate=True the strict delta > sup psi
    requirement is relaxed to >=, which admits the constant-envelope edge
    case psi = delta.

    Raises InfeasibleError when delta <= sup_K psi (strict mode) and
    ConvergenceError when the sweep budget is exhausted.
    """
    if domain is None:
        domain = spec.build(h)
    psi_vals = spec.psi_on_compact(domain)
    spec.validate(domain, strict=not allow_degenerate)

    u0 = _initial_state(domain, spec, psi_vals, init)
    kidx = domain.flat_indices("compact")
    u, sweeps, dmax, ok, stop_tol = solve_on_masks(
        domain,
        u0,
        "interior",
        kidx,
        psi_vals,
        spec.p,
        spec.delta,
        eps=eps,
        max_sweeps=max_sweeps,
        omega=omega,
        stencil=stencil,
        boundary=boundary,
        obstacle=obstacle,
    )

    # the ghost scaffolding lives only inside the solve; the returned field
    # carries the Dirichlet value on the layer
    u[domain.mask == BOUNDARY] = spec.delta
    u[domain.mask == EXTERIOR] = spec.delta
    omega_field = ScalarField(domain, u)
    active_tol = max(10.0 * stop_tol, 1e-9 * max(1.0, abs(spec.delta)))
    active = np.zeros(domain.shape, dtype=bool)
    active.ravel()[kidx] = (psi_vals - u.ravel()[kidx]) <= active_tol

    sol = EnvelopeSolution(
        omega=omega_field,
        spec=spec,
        domain=domain,
        iterations=sweeps,
        final_update=dmax,
        converged=ok,
        stop_tol=stop_tol,
        obstacle_active=active,
        maximality_residual=0.0,
        boundary_residual=0.0,
    )
    sol.maximality_residual = maximality_residual(sol)
    sol.boundary_residual = boundary_residual(sol)
    return sol


# ---------------------------------------------------------------------------
# diagnostics


def maximality_residual(sol):
    """Order-p mass of the envelope away from the contact set and boundary.

    The residual measures how far the envelope is from degenerate (zero
    Hessian measure) off K; it tends to zero under refinement for regular
    condensers.  For p = 1 it is the total |density| over interior nodes
    more than 2 nodes from K and the boundary (the scheme drives exactly
    this operator to zero, so the value sits at solver tolerance).  For
    p = 2 the pointwise sigma_2 of the sweeping solution does not integrate
    stably, so the mass of the same region is evaluated weakly: the order-2
    measure is paired with a smooth bump supported in the annulus.
    """
    if sol.spec.p == 1:
        mf = hessian.hessian_density(sol.omega, sol.spec.p)
        return mf.total_abs("interior_core")
    domain = sol.domain
    h = domain.h
    gap = domain.condenser_gap()
    # bump edges scale with the condenser gap, not with h, so the residual
    # trend across refinements measures the envelope, not the cutoff
    edges = (0.2 * gap, 0.5 * gap, 0.5 * gap, 0.8 * gap)
    if 0.2 * gap < 1.5 * h or 0.3 * gap < 2.0 * h:
        mf = hessian.hessian_density(sol.omega, sol.spec.p)
        return mf.total_abs("interior_core")
    phi = hessian.smooth_cutoff(domain, domain.compact_distance(), edges)
    return abs(hessian.paired_order2_mass(sol.omega, phi, shift=sol.spec.delta))


def boundary_residual(sol):
    """max |omega - delta| over the first interior ring next to the boundary."""
    ring = sol.domain.region_mask("near_boundary")
    if not ring.any():
        return 0.0
    return float(np.abs(sol.omega.values[ring] - sol.spec.delta).max())


@dataclass
class RegularityReport:
    regular: bool
    max_gap: float
    tol: float
    gap: np.ndarray          # full-grid array; regularised envelope minus psi on K
    failing: np.ndarray      # flat indices of K nodes exceeding tol

    def __str__(self):
        verdict = "REGULAR" if self.regular else "IRREGULAR"
        return f"{verdict}: max gap {self.max_gap:.3e} (tol {self.tol:.3e}, failing {self.failing.size})"


def regularity_report(sol, tol=None):
    """Contact diagnostic: does the envelope reach the weight on all of K?

    The raw envelope is pinned to psi wherever the obstacle binds, so the
    meaningful gap is between the weight and the upper-semicontinuous
    regularisation of the envelope, taken here as the max over the closed
    max-norm-1 node neighborhood.  A compact is flagged regular when this gap
    stays O(h); an isolated K node in the Monge-Ampere branch keeps a gap of
    order delta - psi under refinement and is reported with its nodes.
    """
    domain = sol.domain
    spec = sol.spec
    psi_vals = spec.psi_on_compact(domain)
    if tol is None:
        tol = 8.0 * domain.h * max(1.0, spec.delta - float(psi_vals.min()))

    vals = sol.omega.values
    reg = vals.copy()
    d = domain.dim
    for a in range(d):
        for s in (1, -1):
            reg = np.maximum(reg, np.roll(vals, s, axis=a))
    # rolled values wrap around the lattice; the pad of exterior nodes (value
    # delta) keeps the wrap harmless away from the pad itself
    kidx = domain.flat_indices("compact")
    gap = np.zeros(domain.shape, dtype=float)
    gap.ravel()[kidx] = reg.ravel()[kidx] - psi_vals
    mg = float(np.abs(gap.ravel()[kidx]).max())
    failing = kidx[np.abs(gap.ravel()[kidx]) >= tol]
    return RegularityReport(
        regular=bool(mg < tol), max_gap=mg, tol=float(tol), gap=gap, failing=failing
    )


def local_resolve(sol, center, radius, **solver_kw):
    """Re-solve the degenerate equation on an interior ball with the envelope's data.

    Gluing consistency: replacing the envelope on a ball B inside D \\ K by
    the local maximal solution with the envelope's boundary values must
    reproduce the envelope on B.  Returns the re-solved full-grid field.
    """
    domain = sol.domain
    env = domain.node_env()
    center = np.asarray(center, dtype=float)
    acc = 0.0
    keys = ("x1", "y1", "x2", "y2")[: domain.dim]
    for a, k in enumerate(keys):
        acc = acc + (env[k] - center[a]) ** 2
    ball = (acc <= radius**2) & (domain.mask == INTERIOR)
    if bool(np.any(dilate(ball, 1) & (domain.mask == COMPACT_K))):
        raise ValueError("gluing ball touches the compact set")
    if bool(np.any(dilate(ball, 2) & (domain.mask == BOUNDARY))):
        raise ValueError("gluing ball touches the boundary layer")
    empty_idx = np.empty(0, dtype=np.int64)
    empty_psi = np.empty(0, dtype=float)
    solver_kw.setdefault("boundary", "constant")
    u, _, _, _, _ = solve_on_masks(
        domain,
        sol.omega.values,
        ball,
        empty_idx,
        empty_psi,
        sol.spec.p,
        sol.spec.delta,
        **solver_kw,
    )
    return ScalarField(domain, u), ball
