"""Discrete complex Hessian, its spectrum, and Hessian-measure densities.

For a grid field u the complex Hessian at a node is the Hermitian n x n
matrix with entries

    H_jk = (1/4) [ (Dxx_{jk} + Dyy_{jk}) u + i (Dxy_{jk} - Dyx_{jk}) u ],

assembled from central second differences (pure) and 4-point cross
differences (mixed), which are exact on quadratics.  With eigenvalues
lambda_1 <= ... <= lambda_n, the order-p Hessian measure has density

    p! (n-p)! sigma_p(lambda)

with respect to Lebesgue volume on R^{2n}; the normalization is anchored by
u = |z|^2, whose density equals n! for every p.

Membership in the m-subharmonic class is the literal pointwise test
sigma_k >= -tol for k = 1..p with p = n - m + 1.  The report carries the
signed worst margin so that near-degenerate cone boundaries can be inspected
rather than silently resolved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grid as gridmod
from .errors import StencilError
from .grid import COMPACT_K, EXTERIOR, INTERIOR, ScalarField


def _eval_indices(domain):
    return domain.flat_indices("domain")


def _second_diffs(domain, values):
    """Pure and mixed second differences at all INTERIOR/COMPACT_K nodes.

    Returns (idx, dd, cross): dd[a] is the second difference along axis a,
    cross[(a, b)] the 4-point cross difference for a < b, already divided by
    h^2 (resp. 4h^2).
    """
    idx = _eval_indices(domain)
    u = values.ravel()
    s = domain.strides
    h2 = domain.h**2
    dd = {}
    for a in range(domain.dim):
        dd[a] = (u[idx + s[a]] - 2.0 * u[idx] + u[idx - s[a]]) / h2
    cross = {}
    for a in range(domain.dim):
        for b in range(a + 1, domain.dim):
            cross[(a, b)] = (
                u[idx + s[a] + s[b]]
                - u[idx + s[a] - s[b]]
                - u[idx - s[a] + s[b]]
                + u[idx - s[a] - s[b]]
            ) / (4.0 * h2)
    return idx, dd, cross


def _hermitian_entries(domain, values):
    """Complex Hessian entries over the evaluation nodes.

    n=1: returns (idx, {"h11": ...}); n=2 adds h22, re12, im12.  The diagonal
    mixed terms x_j y_j share one stencil in both orders, so the assembled
    matrix is Hermitian exactly.
    """
    idx, dd, cross = _second_diffs(domain, values)
    if domain.n == 1:
        return idx, {"h11": 0.25 * (dd[0] + dd[1])}
    ent = {
        "h11": 0.25 * (dd[0] + dd[1]),
        "h22": 0.25 * (dd[2] + dd[3]),
        "re12": 0.25 * (cross[(0, 2)] + cross[(1, 3)]),
        "im12": 0.25 * (cross[(0, 3)] - cross[(1, 2)]),
    }
    return idx, ent


@dataclass
class HessianSpectrum:
    """Per-node eigenvalues (ascending) and elementary symmetric values."""

    domain: object
    idx: np.ndarray          # flat node indices, INTERIOR | COMPACT_K
    lam: np.ndarray          # (N, n) eigenvalues, ascending
    sigma: np.ndarray        # (N, n) sigma_1..sigma_n

    def check(self, atol=1e-9):
        n = self.domain.n
        assert np.all(np.diff(self.lam, axis=1) >= -atol)
        if n == 1:
            ref = self.lam[:, 0]
            assert np.allclose(self.sigma[:, 0], ref, atol=atol)
        else:
            s1 = self.lam.sum(axis=1)
            s2 = self.lam[:, 0] * self.lam[:, 1]
            assert np.allclose(self.sigma[:, 0], s1, atol=atol)
            assert np.allclose(self.sigma[:, 1], s2, atol=math.sqrt(atol))
        return True


def complex_hessian(u, node):
    """Hermitian n x n complex Hessian matrix at a single node.

    `node` is a multi-index tuple.  Raises StencilError when the node is not
    INTERIOR/COMPACT_K or a stencil neighbor is EXTERIOR.
    """
    domain = u.domain
    node = tuple(int(v) for v in node)
    code = domain.mask[node]
    if code not in (INTERIOR, COMPACT_K):
        raise StencilError(f"node {node} is {gridmod.MASK_LABELS[code]}, not interior")
    lo = [slice(max(i - 1, 0), i + 2) for i in node]
    if np.any(domain.mask[tuple(lo)] == EXTERIOR):
        raise StencilError(f"stencil at {node} reaches an exterior node")
    flat = int(np.ravel_multi_index(node, domain.shape))
    v = u.values.ravel()
    s = domain.strides
    h2 = domain.h**2
    d = domain.dim

    def dd(a):
        return (v[flat + s[a]] - 2.0 * v[flat] + v[flat - s[a]]) / h2

    def cr(a, b):
        return (
            v[flat + s[a] + s[b]]
            - v[flat + s[a] - s[b]]
            - v[flat - s[a] + s[b]]
            + v[flat - s[a] - s[b]]
        ) / (4.0 * h2)

    if domain.n == 1:
        return np.array([[0.25 * (dd(0) + dd(1))]], dtype=complex)
    h11 = 0.25 * (dd(0) + dd(1))
    h22 = 0.25 * (dd(2) + dd(3))
    h12 = 0.25 * ((cr(0, 2) + cr(1, 3)) + 1j * (cr(0, 3) - cr(1, 2)))
    return np.array([[h11, h12], [np.conjugate(h12), h22]], dtype=complex)


def spectrum(u):
    """Eigenvalues and sigma_k of the complex Hessian at every interior node.

    n = 1 is the single diagonal entry; n = 2 uses the closed-form Hermitian
    2x2 eigenvalues.  sigma_2 is computed from the matrix invariants directly
    (det = h11*h22 - |h12|^2) for accuracy.
    """
    domain = u.domain
    idx, ent = _hermitian_entries(domain, u.values)
    if domain.n == 1:
        lam = ent["h11"][:, None]
        sig = lam.copy()
        return HessianSpectrum(domain, idx, lam, sig)
    h11, h22 = ent["h11"], ent["h22"]
    off2 = ent["re12"] ** 2 + ent["im12"] ** 2
    mid = 0.5 * (h11 + h22)
    rad = np.sqrt(0.25 * (h11 - h22) ** 2 + off2)
    lam = np.stack([mid - rad, mid + rad], axis=1)
    sig = np.stack([h11 + h22, h11 * h22 - off2], axis=1)
    return HessianSpectrum(domain, idx, lam, sig)


@dataclass
class MeasureField:
    """Density of the order-p Hessian measure w.r.t. volume on R^{2n}."""

    domain: object
    p: int
    density: np.ndarray      # full-grid array, zero off the evaluation nodes
    idx: np.ndarray

    def total(self, region="domain"):
        sel = self.domain.region_mask(region)
        return float(self.density[sel].sum() * self.domain.cell_volume)

    def total_abs(self, region="domain"):
        sel = self.domain.region_mask(region)
        return float(np.abs(self.density[sel]).sum() * self.domain.cell_volume)

    def as_field(self):
        return ScalarField(self.domain, self.density)


def hessian_density(u, p):
    """MeasureField with density p!(n-p)! sigma_p at the interior nodes."""
    domain = u.domain
    if not (1 <= p <= domain.n):
        raise ValueError(f"order p={p} outside 1..{domain.n}")
    spec = spectrum(u)
    coeff = math.factorial(p) * math.factorial(domain.n - p)
    dens = np.zeros(domain.shape, dtype=float)
    dens.ravel()[spec.idx] = coeff * spec.sigma[:, p - 1]
    return MeasureField(domain, p, dens, spec.idx)


def default_tol(u):
    """Membership tolerance: second differences amplify rounding by h^-2."""
    scale = float(np.abs(u.values[u.domain.mask != EXTERIOR]).max())
    return 1e-8 * max(scale, 1.0) / u.domain.h**2


@dataclass
class MembershipReport:
    member: bool
    m: int
    p: int
    tol: float
    worst_violation: float   # max(0, -min sigma_k), k <= p
    margin: float            # signed min over nodes and k <= p of sigma_k
    worst_node: tuple
    worst_k: int
    per_k_min: dict

    def __str__(self):
        verdict = "member" if self.member else "NON-member"
        return (
            f"sh_m(m={self.m}, p={self.p}): {verdict}; worst violation "
            f"{self.worst_violation:.3e} at node {self.worst_node} (k={self.worst_k}), "
            f"tol {self.tol:.3e}"
        )


def is_m_subharmonic(u, m, tol=None, region="domain"):
    """Pointwise sigma_k >= -tol test for k = 1..p, p = n - m + 1.

    `region` restricts the scan (any region selector); pass "domain_inner"
    to skip the ring next to the Dirichlet layer, whose stencils read
    boundary data and inherit its first-order distortion.
    """
    domain = u.domain
    if not (1 <= m <= domain.n):
        raise ValueError(f"class index m={m} outside 1..{domain.n}")
    if tol is None:
        tol = default_tol(u)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    p = domain.n - m + 1
    spec = spectrum(u)
    if region != "domain":
        if region == "domain_inner":
            sel = domain.region_mask("domain") & ~domain.region_mask("near_boundary")
        else:
            sel = domain.region_mask(region)
        keep = sel.ravel()[spec.idx]
        spec = HessianSpectrum(domain, spec.idx[keep], spec.lam[keep], spec.sigma[keep])
    per_k_min = {}
    margin = np.inf
    worst_k = 1
    worst_flat = int(spec.idx[0])
    for k in range(1, p + 1):
        col = spec.sigma[:, k - 1]
        j = int(np.argmin(col))
        per_k_min[k] = float(col[j])
        if per_k_min[k] < margin:
            margin = per_k_min[k]
            worst_k = k
            worst_flat = int(spec.idx[j])
    member = bool(margin >= -tol)
    return MembershipReport(
        member=member,
        m=m,
        p=p,
        tol=float(tol),
        worst_violation=float(max(0.0, -margin)),
        margin=float(margin),
        worst_node=tuple(int(v) for v in np.unravel_index(worst_flat, domain.shape)),
        worst_k=worst_k,
        per_k_min=per_k_min,
    )


def dump_measure_csv(mf, path_or_buf):
    """MeasureField dump: ScalarField CSV schema plus density column and p header."""
    f = ScalarField(mf.domain, mf.density)
    gridmod.dump_field_csv(
        f, path_or_buf, extra={"density": mf.density}, header_extra={"p": mf.p}
    )


# ---------------------------------------------------------------------------
# weak (cutoff-paired) evaluation of the order-2 measure
#
# The order-2 measure of the envelope concentrates on the contact rim, where
# the solution has a lattice-staircased gradient jump; the pointwise sigma_2
# there does not integrate stably (active nodes are local minima, so every
# second difference is nonnegative and the noise is one-sided).  Pairing the
# measure with a smooth cutoff and integrating by parts twice,
#
#     integral phi (dd^c u)^2  =  integral (u - c) dd^c(phi) ^ dd^c(u),
#
# moves the evaluation onto the region where phi varies, which can be placed
# away from contact sets and boundary layers.


def _smoothstep(s):
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


def smooth_cutoff(domain, dist, edges, smooth_passes=1):
    """Cutoff profile of a distance field: 1 below, 0 above, smooth between.

    edges = (c1, c2) gives a falling ramp over [c1, c2]; edges = (c1, c2, c3,
    c4) gives a bump rising over [c1, c2] and falling over [c3, c4].  A box
    filter pass tames ridge kinks of non-smooth distance fields.
    """
    dist = np.asarray(dist, dtype=float)
    if len(edges) == 2:
        c1, c2 = edges
        phi = 1.0 - _smoothstep(np.clip((dist - c1) / (c2 - c1), 0.0, 1.0))
    else:
        c1, c2, c3, c4 = edges
        up = _smoothstep(np.clip((dist - c1) / (c2 - c1), 0.0, 1.0))
        down = 1.0 - _smoothstep(np.clip((dist - c3) / (c4 - c3), 0.0, 1.0))
        phi = up * down
    if phi.shape != domain.shape:
        raise ValueError("distance field shape mismatch")
    for a in range(domain.dim):
        phi = (np.roll(phi, 1, axis=a) + phi + np.roll(phi, -1, axis=a)) / 3.0
    return phi


def paired_order2_mass(u, phi, shift=0.0):
    """sum of (u - shift) * density(dd^c phi ^ dd^c u) over the lattice (n = 2).

    For a cutoff phi that is constant outside a shell where u is smooth this
    evaluates integral phi (dd^c u)^2 without touching contact staircases.
    The shift removes the boundary value so the discrete Stokes defect of the
    constant part stays small.
    """
    domain = u.domain
    if domain.n != 2:
        raise ValueError("order-2 pairing requires n = 2")
    idx, pent = _hermitian_entries(domain, phi)
    _, uent = _hermitian_entries(domain, u.values)
    uvals = u.values.ravel()[idx] - shift
    dens = uvals * (
        pent["h11"] * uent["h22"]
        + pent["h22"] * uent["h11"]
        - 2.0 * (pent["re12"] * uent["re12"] + pent["im12"] * uent["im12"])
    )
    return float(dens.sum() * domain.cell_volume)
