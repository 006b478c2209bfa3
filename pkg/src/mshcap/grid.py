"""Uniform Cartesian grids for condenser geometry in C^n (realised as R^{2n}).

A condenser is a compact set K inside a bounded domain D.  Both are described
by geometric primitives (balls, boxes, annuli, unions) and rasterised by
node-center membership onto a uniform lattice of spacing h.  Every node is
classified EXTERIOR, BOUNDARY, INTERIOR or COMPACT_K:

* INTERIOR / COMPACT_K nodes are the unknowns of the sweeping solvers;
* BOUNDARY nodes form a closed Dirichlet layer two nodes thick, so that the
  wide (radius-2) stencils used by the degenerate-elliptic schemes never read
  an EXTERIOR value from an interior node;
* COMPACT_K nodes keep a margin of at least SEPARATION nodes (max-norm) to
  everything outside D.

Grids and fields are immutable after construction; all operations here are
pure reads and safe to call concurrently.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCompactError, InfeasibleError, SeparationError

EXTERIOR, BOUNDARY, INTERIOR, COMPACT_K = 0, 1, 2, 3
MASK_LABELS = ("EXTERIOR", "BOUNDARY", "INTERIOR", "COMPACT_K")

#: thickness of the Dirichlet layer, in nodes (= wide-stencil radius)
BOUNDARY_LAYER = 2
#: required max-norm node margin between K and the complement of D
SEPARATION = 3
#: lattice padding beyond the domain bounds, in nodes
_PAD = SEPARATION + 1


# ---------------------------------------------------------------------------
# geometric primitives


def _axis_view(arr, axis, ndim):
    """Reshape a 1-D axis array so it broadcasts along `axis` of an ndim grid."""
    shape = [1] * ndim
    shape[axis] = -1
    return arr.reshape(shape)


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball; `center` has 2n real coordinates."""

    center: tuple
    radius: float

    def contains(self, axes):
        d = len(self.center)
        acc = 0.0
        for a in range(d):
            acc = acc + (_axis_view(axes[a], a, d) - self.center[a]) ** 2
        return acc <= self.radius**2 * (1.0 + 1e-12)

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    def inflate(self, eps):
        return Ball(self.center, self.radius + eps)

    def exterior_distance(self, pts):
        t = np.linalg.norm(pts - np.asarray(self.center), axis=-1)
        return np.maximum(t - self.radius, 0.0)

    def interior_surface_distance(self, pts):
        t = np.linalg.norm(pts - np.asarray(self.center), axis=-1)
        return np.maximum(self.radius - t, 0.0)


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box [lo, hi] in R^{2n}."""

    lo: tuple
    hi: tuple

    def contains(self, axes):
        d = len(self.lo)
        out = None
        for a in range(d):
            ax = _axis_view(axes[a], a, d)
            tol = 1e-12 * max(1.0, abs(self.lo[a]), abs(self.hi[a]))
            cond = (ax >= self.lo[a] - tol) & (ax <= self.hi[a] + tol)
            out = cond if out is None else (out & cond)
        return out

    def bounds(self):
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)

    def inflate(self, eps):
        return Box(tuple(v - eps for v in self.lo), tuple(v + eps for v in self.hi))

    def exterior_distance(self, pts):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        over = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
        return np.linalg.norm(over, axis=-1)

    def interior_surface_distance(self, pts):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        inside = np.minimum(pts - lo, hi - pts).min(axis=-1)
        return np.maximum(inside, 0.0)


@dataclass(frozen=True)
class Annulus:
    """Closed spherical shell inner <= |x - center| <= outer."""

    center: tuple
    inner: float
    outer: float

    def contains(self, axes):
        d = len(self.center)
        acc = 0.0
        for a in range(d):
            acc = acc + (_axis_view(axes[a], a, d) - self.center[a]) ** 2
        lo = self.inner**2 * (1.0 - 1e-12)
        hi = self.outer**2 * (1.0 + 1e-12)
        return (acc >= lo) & (acc <= hi)

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.outer, c + self.outer

    def inflate(self, eps):
        return Annulus(self.center, max(self.inner - eps, 0.0), self.outer + eps)

    def exterior_distance(self, pts):
        t = np.linalg.norm(pts - np.asarray(self.center), axis=-1)
        return np.maximum(np.maximum(t - self.outer, self.inner - t), 0.0)

    def interior_surface_distance(self, pts):
        t = np.linalg.norm(pts - np.asarray(self.center), axis=-1)
        return np.maximum(np.minimum(self.outer - t, t - self.inner), 0.0)


@dataclass(frozen=True)
class Union:
    """Union of primitives."""

    parts: tuple

    def contains(self, axes):
        out = None
        for p in self.parts:
            c = p.contains(axes)
            out = c if out is None else (out | c)
        return out

    def bounds(self):
        los, his = zip(*(p.bounds() for p in self.parts))
        return np.min(los, axis=0), np.max(his, axis=0)

    def inflate(self, eps):
        return Union(tuple(p.inflate(eps) for p in self.parts))

    def exterior_distance(self, pts):
        return np.min([p.exterior_distance(pts) for p in self.parts], axis=0)

    def interior_surface_distance(self, pts):
        # a lower bound (surface bits swallowed by other parts are ignored)
        return np.max([p.interior_surface_distance(pts) for p in self.parts], axis=0)


# ---------------------------------------------------------------------------
# separable max-norm morphology (box structuring element of given radius)


def dilate(mask, radius):
    out = mask.copy()
    for axis in range(mask.ndim):
        src = out.copy()
        for s in range(1, radius + 1):
            lo = [slice(None)] * mask.ndim
            hi = [slice(None)] * mask.ndim
            lo[axis] = slice(s, None)
            hi[axis] = slice(None, -s)
            out[tuple(lo)] |= src[tuple(hi)]
            out[tuple(hi)] |= src[tuple(lo)]
    return out


def erode(mask, radius):
    return ~dilate(~mask, radius)


# ---------------------------------------------------------------------------
# grid domain


class GridDomain:
    """Rasterised condenser geometry.

    Attributes
    ----------
    n : complex dimension (1 or 2); the lattice lives in R^{2n}
    h : grid spacing
    domain_shape, compact_shape : generating primitives for D and K
    origin : integer lattice index of the first node per axis
    shape : node counts per axis
    mask : int8 classification array (EXTERIOR/BOUNDARY/INTERIOR/COMPACT_K)

    Node coordinates are h * (origin + index); anchoring indices on the global
    lattice h*Z makes refinement nest exactly.
    """

    def __init__(self, n, h, domain_shape, compact_shape, origin, mask):
        self.n = int(n)
        self.h = float(h)
        self.domain_shape = domain_shape
        self.compact_shape = compact_shape
        self.origin = np.asarray(origin, dtype=np.int64)
        self.mask = mask
        self.mask.setflags(write=False)
        self.shape = mask.shape
        self.dim = 2 * self.n
        self.strides = np.array(
            [int(np.prod(mask.shape[a + 1 :], dtype=np.int64)) for a in range(mask.ndim)],
            dtype=np.int64,
        )
        self.axes = [
            (self.origin[a] + np.arange(self.shape[a], dtype=np.int64)) * self.h
            for a in range(self.dim)
        ]
        self.counts = {
            MASK_LABELS[code]: int(np.count_nonzero(mask == code)) for code in range(4)
        }
        self._region_cache = {}

    # -- identity ----------------------------------------------------------

    def same_grid(self, other):
        return (
            self.n == other.n
            and self.h == other.h
            and tuple(self.origin) == tuple(other.origin)
            and self.shape == other.shape
        )

    @property
    def bbox(self):
        lo = self.origin * self.h
        hi = (self.origin + np.asarray(self.shape) - 1) * self.h
        return lo, hi

    @property
    def cell_volume(self):
        return self.h**self.dim

    # -- node selections ----------------------------------------------------

    def region_mask(self, region):
        """Boolean mask for a named region or a boolean array passed through.

        Named regions: exterior, boundary, interior, compact, domain
        (= interior|compact), collar (one-node ring of interior nodes around
        K), compact_collar (K plus collar), near_boundary (interior nodes with
        a BOUNDARY neighbor in max-norm 1), interior_core (interior nodes
        farther than 2 nodes from both K and the boundary layer), all.
        """
        if isinstance(region, np.ndarray):
            if region.shape != self.shape:
                raise ValueError("region mask shape mismatch")
            return region
        if region in self._region_cache:
            return self._region_cache[region]
        m = self.mask
        if region == "exterior":
            out = m == EXTERIOR
        elif region == "boundary":
            out = m == BOUNDARY
        elif region == "interior":
            out = m == INTERIOR
        elif region == "compact":
            out = m == COMPACT_K
        elif region == "domain":
            out = (m == INTERIOR) | (m == COMPACT_K)
        elif region == "collar":
            out = dilate(m == COMPACT_K, 1) & (m == INTERIOR)
        elif region == "compact_collar":
            out = dilate(m == COMPACT_K, 1) & ((m == INTERIOR) | (m == COMPACT_K))
        elif region == "near_boundary":
            out = dilate(m == BOUNDARY, 1) & (m == INTERIOR)
        elif region == "interior_core":
            out = (m == INTERIOR) & ~dilate((m == COMPACT_K) | (m == BOUNDARY), 2)
        elif region == "all":
            out = np.ones(self.shape, dtype=bool)
        else:
            raise ValueError(f"unknown region {region!r}")
        out.setflags(write=False)
        self._region_cache[region] = out
        return out

    def flat_indices(self, region):
        return np.flatnonzero(self.region_mask(region).ravel())

    def coords(self, flat_idx):
        """(N, 2n) array of node coordinates for flat indices."""
        multi = np.unravel_index(np.asarray(flat_idx), self.shape)
        cols = [(self.origin[a] + multi[a]) * self.h for a in range(self.dim)]
        return np.stack(cols, axis=-1)

    def node_env(self, flat_idx=None):
        """Coordinate environment for weight evaluation.

        Keys: x1, y1 (and x2, y2 for n = 2), r = |z|, r1 = |z_1|, r2 = |z_2|.
        With flat_idx=None the environment covers the full lattice (broadcast
        to full arrays).
        """
        if flat_idx is None:
            full = [
                np.broadcast_to(_axis_view(self.axes[a], a, self.dim), self.shape)
                for a in range(self.dim)
            ]
            cols = [np.ascontiguousarray(f) for f in full]
        else:
            pts = self.coords(flat_idx)
            cols = [pts[..., a] for a in range(self.dim)]
        env = {"x1": cols[0], "y1": cols[1]}
        env["r1"] = np.sqrt(cols[0] ** 2 + cols[1] ** 2)
        if self.n == 2:
            env["x2"], env["y2"] = cols[2], cols[3]
            env["r2"] = np.sqrt(cols[2] ** 2 + cols[3] ** 2)
            env["r"] = np.sqrt(env["r1"] ** 2 + env["r2"] ** 2)
        else:
            env["r"] = env["r1"]
        return env

    def compact_distance(self):
        """Full-grid distance to the compact set (0 on K, analytic per shape)."""
        out = np.zeros(self.shape, dtype=float)
        live = self.flat_indices(self.mask != EXTERIOR)
        out.ravel()[live] = self.compact_shape.exterior_distance(self.coords(live))
        return out

    def condenser_gap(self):
        """Smallest compact-set distance of a boundary-layer node."""
        dist = self.compact_distance()
        sel = self.mask == BOUNDARY
        if not sel.any():
            return math.inf
        return float(dist[sel].min())

    def parity(self):
        """Red/black coloring: sum of lattice indices mod 2, as uint8."""
        acc = np.zeros(self.shape, dtype=np.uint8)
        for a in range(self.dim):
            idx = ((self.origin[a] + np.arange(self.shape[a])) % 2).astype(np.uint8)
            acc = acc ^ _axis_view(idx, a, self.dim)
        return acc

    def fine_index_of(self, coarse_flat, fine):
        """Map this grid's flat indices onto a refinement of the same shapes."""
        multi = np.unravel_index(np.asarray(coarse_flat), self.shape)
        ratio = self.h / fine.h
        out = []
        for a in range(self.dim):
            fi = np.rint((self.origin[a] + multi[a]) * ratio).astype(np.int64) - fine.origin[a]
            out.append(fi)
        return np.ravel_multi_index(tuple(out), fine.shape)


def build_domain(domain_shape, compact_shape, h, n):
    """Rasterise a condenser (K inside D) at spacing h.

    Raises SeparationError when K comes within SEPARATION nodes (max-norm) of
    the complement of D, and EmptyCompactError when no node falls in K.
    """
    if n not in (1, 2):
        raise ValueError("complex dimension n must be 1 or 2")
    if h <= 0:
        raise ValueError("spacing h must be positive")
    d = 2 * n
    lo, hi = domain_shape.bounds()
    if lo.size != d:
        raise ValueError(f"domain shape has {lo.size} coordinates, expected {d}")
    origin = np.floor(lo / h + 1e-9).astype(np.int64) - _PAD
    top = np.ceil(hi / h - 1e-9).astype(np.int64) + _PAD
    shape = tuple((top - origin + 1).tolist())
    axes = [(origin[a] + np.arange(shape[a], dtype=np.int64)) * h for a in range(d)]

    in_d = domain_shape.contains(axes)
    if not in_d.any():
        raise EmptyCompactError("domain shape contains no grid node")
    in_k = compact_shape.contains(axes) & in_d
    if not in_k.any():
        raise EmptyCompactError("no grid node falls inside the compact set")

    core = erode(in_d, SEPARATION)
    if not bool(np.all(core[in_k])):
        # the separable max-norm erosion is a sufficient fast path; fall back
        # to the exact Euclidean node distance when it is inconclusive
        from scipy.ndimage import distance_transform_edt

        dist = distance_transform_edt(in_d)
        if not bool(np.all(dist[in_k] >= SEPARATION - 1e-9)):
            raise SeparationError(
                f"compact set closer than {SEPARATION} nodes ({SEPARATION}h = "
                f"{SEPARATION * h:g}) to the boundary of the domain"
            )

    mask = np.zeros(shape, dtype=np.int8)
    mask[dilate(in_d, BOUNDARY_LAYER) & ~in_d] = BOUNDARY
    mask[in_d & ~in_k] = INTERIOR
    mask[in_k] = COMPACT_K
    return GridDomain(n, h, domain_shape, compact_shape, origin, mask)


def refine(domain, factor):
    """Re-rasterise the same generators at spacing h/factor (factor >= 2)."""
    if int(factor) != factor or factor < 2:
        raise ValueError("refinement factor must be an integer >= 2")
    return build_domain(
        domain.domain_shape, domain.compact_shape, domain.h / int(factor), domain.n
    )


# ---------------------------------------------------------------------------
# scalar fields


class ScalarField:
    """Real values on the nodes of a GridDomain (immutable)."""

    def __init__(self, domain, values):
        values = np.asarray(values, dtype=float)
        if values.shape != domain.shape:
            raise ValueError("field shape does not match domain")
        live = domain.region_mask("all") & (domain.mask != EXTERIOR)
        if not np.all(np.isfinite(values[live])):
            raise ValueError("field has non-finite values at non-exterior nodes")
        self.domain = domain
        self.values = values
        self.values.setflags(write=False)

    @classmethod
    def constant(cls, domain, c):
        return cls(domain, np.full(domain.shape, float(c)))

    @classmethod
    def from_function(cls, domain, fn, fill=0.0):
        """Evaluate fn(env) over the whole lattice; exterior values that come
        out non-finite are replaced by `fill`."""
        env = domain.node_env()
        with np.errstate(all="ignore"):
            vals = np.asarray(fn(env), dtype=float)
        vals = np.broadcast_to(vals, domain.shape).copy()
        ext = domain.mask == EXTERIOR
        bad = ~np.isfinite(vals)
        vals[bad & ext] = fill
        return cls(domain, vals)

    def _check_same(self, other):
        if not self.domain.same_grid(other.domain):
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, ScalarField):
            self._check_same(other)
            return ScalarField(self.domain, self.values + other.values)
        return ScalarField(self.domain, self.values + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            self._check_same(other)
            return ScalarField(self.domain, self.values - other.values)
        return ScalarField(self.domain, self.values - float(other))

    def __mul__(self, scalar):
        return ScalarField(self.domain, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.domain, -self.values)


def integrate(f, region="domain"):
    """Sum of f over the region's nodes times the cell volume h^{2n}."""
    if isinstance(f, ScalarField):
        domain, values = f.domain, f.values
    else:
        raise TypeError("integrate expects a ScalarField")
    sel = domain.region_mask(region)
    return float(values[sel].sum() * domain.cell_volume)


# ---------------------------------------------------------------------------
# weights and condenser specification


@dataclass(frozen=True)
class ConstantWeight:
    value: float

    def evaluate(self, env):
        return np.full_like(env["x1"], self.value, dtype=float)

    def variables(self):
        return set()

    def describe(self):
        return repr(self.value)


@dataclass(frozen=True)
class FunctionWeight:
    """Adapter for arbitrary callables fn(env) -> array (used in tests/demos)."""

    fn: object
    label: str = "<callable>"

    def evaluate(self, env):
        return np.asarray(self.fn(env), dtype=float)

    def variables(self):
        return set()

    def describe(self):
        return self.label


def as_weight(psi):
    if isinstance(psi, (int, float)):
        return ConstantWeight(float(psi))
    if hasattr(psi, "evaluate"):
        return psi
    if callable(psi):
        return FunctionWeight(psi)
    raise TypeError(f"cannot interpret weight {psi!r}")


@dataclass(frozen=True)
class CondenserSpec:
    """Full problem statement: geometry, Hessian class index m, weight, threshold.

    The derived operator order is p = n - m + 1 (p = 1 is the Laplace branch,
    p = n the Monge-Ampere branch).  The weight psi is only ever evaluated on
    K nodes; delta is the Dirichlet value on the boundary layer.
    """

    n: int
    m: int
    domain_shape: object
    compact_shape: object
    psi: object
    delta: float
    h: float

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("n must be 1 or 2")
        if not (1 <= self.m <= self.n):
            raise ValueError("m must satisfy 1 <= m <= n")
        object.__setattr__(self, "psi", as_weight(self.psi))

    @property
    def p(self):
        return self.n - self.m + 1

    def build(self, h=None):
        return build_domain(self.domain_shape, self.compact_shape, h or self.h, self.n)

    def psi_on_compact(self, domain):
        """Weight values aligned with domain.flat_indices('compact')."""
        idx = domain.flat_indices("compact")
        vals = np.asarray(self.psi.evaluate(domain.node_env(idx)), dtype=float)
        vals = np.broadcast_to(vals, idx.shape).copy()
        if not np.all(np.isfinite(vals)):
            raise InfeasibleError("weight evaluates to a non-finite value on K")
        return vals

    def validate(self, domain, strict=True):
        """Numerical check of delta > sup_K psi over the K nodes."""
        sup_psi = float(self.psi_on_compact(domain).max())
        if strict and not (self.delta > sup_psi):
            raise InfeasibleError(
                f"delta = {self.delta!r} must exceed sup_K psi = {sup_psi!r}"
            )
        if not strict and self.delta < sup_psi - 1e-12:
            raise InfeasibleError(
                f"delta = {self.delta!r} is below sup_K psi = {sup_psi!r}"
            )
        return sup_psi

    def with_(self, **kw):
        data = {
            "n": self.n,
            "m": self.m,
            "domain_shape": self.domain_shape,
            "compact_shape": self.compact_shape,
            "psi": self.psi,
            "delta": self.delta,
            "h": self.h,
        }
        data.update(kw)
        return CondenserSpec(**data)

    def describe(self):
        return {
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "domain_shape": repr(self.domain_shape),
            "compact_shape": repr(self.compact_shape),
            "psi": self.psi.describe() if hasattr(self.psi, "describe") else repr(self.psi),
            "delta": self.delta,
            "h": self.h,
        }


# ---------------------------------------------------------------------------
# CSV dumps

_COORD_NAMES = ("x1", "y1", "x2", "y2")


def dump_field_csv(f, path_or_buf, extra=None, header_extra=None):
    """Write one CSV row per non-exterior node: coordinates, mask label, value.

    `extra` maps column name -> full-grid array; the comment header records
    n, h and the bounding box (exterior nodes carry no data and are omitted;
    the mask is reconstructible from the generators).
    """
    domain = f.domain
    extra = extra or {}
    idx = domain.flat_indices(domain.mask != EXTERIOR)
    pts = domain.coords(idx)
    labels = np.array(MASK_LABELS)[domain.mask.ravel()[idx]]
    vals = f.values.ravel()[idx]
    cols = list(_COORD_NAMES[: domain.dim]) + ["mask", "value"] + list(extra)

    own = isinstance(path_or_buf, (str, bytes))
    buf = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        lo, hi = domain.bbox
        head = f"# n={domain.n} h={domain.h!r} bbox={','.join(repr(v) for v in lo)};{','.join(repr(v) for v in hi)}"
        if header_extra:
            head += " " + " ".join(f"{k}={v!r}" for k, v in header_extra.items())
        buf.write(head + "\n")
        buf.write(",".join(cols) + "\n")
        extra_flat = {k: np.asarray(v).ravel()[idx] for k, v in extra.items()}
        for i in range(idx.size):
            row = [repr(float(pts[i, a])) for a in range(domain.dim)]
            row.append(labels[i])
            row.append(repr(float(vals[i])))
            for k in extra:
                v = extra_flat[k][i]
                row.append(repr(v.item() if hasattr(v, "item") else v))
            buf.write(",".join(row) + "\n")
    finally:
        if own:
            buf.close()


def dump_field_csv_string(f, extra=None, header_extra=None):
    buf = io.StringIO()
    dump_field_csv(f, buf, extra=extra, header_extra=header_extra)
    return buf.getvalue()
