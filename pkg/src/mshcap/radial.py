"""One-dimensional radial reductions used as independent oracles.

For radial profiles u(z) = f(t), t = |z|, the complex Hessian has the radial
eigenvalue (f'' + f'/t)/4 and the transverse eigenvalue f'/(2t) with
multiplicity n - 1.  Fields whose order-p measure vanishes off the compact
set therefore reduce to the two-point boundary value problem

    (t^alpha f')' = 0   on (r, R),   f(r) = c,  f(R) = delta,

with alpha = 2n - 1 on the Laplace branch (p = 1) and alpha = 1 on the
Monge-Ampere branch (n = 2, p = 2).  Solving this on an independent 1-D mesh
gives reference envelope profiles and, via the discrete flux, reference
capacities:

    p = 1:  C = (pi^n / 2) r^{2n-1} f'(r+)
    p = 2:  C = (pi^2 / 4) (r f'(r+))^2        (n = 2)

These formulas are the surface-flux evaluations of the grid normalization
(density = p!(n-p)! sigma_p, i.e. |z|^2 has density n!), which
sigma_density_profile validates on the quadratic anchor.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_banded


def _alpha(n, p):
    if p == 1:
        return 2 * n - 1
    if p == 2 and n == 2:
        return 1
    raise ValueError(f"unsupported branch n={n}, p={p}")


def profile_bvp(alpha, r, R, lo_value, hi_value, num=4097):
    """Solve (t^alpha f')' = 0 with f(r)=lo_value, f(R)=hi_value.

    Conservative 3-point differences on a uniform mesh of `num` nodes; the
    tridiagonal system is solved directly.  Returns (t, f).
    """
    if not (0 < r < R):
        raise ValueError("need 0 < r < R")
    t = np.linspace(r, R, num)
    dt = t[1] - t[0]
    w = ((t[:-1] + t[1:]) / 2.0) ** alpha  # face weights t_{i+1/2}^alpha
    m = num - 2
    ab = np.zeros((3, m))
    rhs = np.zeros(m)
    for row in range(m):
        i = row + 1
        wl, wr = w[i - 1], w[i]
        ab[1, row] = -(wl + wr)
        if row > 0:
            ab[2, row - 1] = wl
        else:
            rhs[row] -= wl * lo_value
        if row < m - 1:
            ab[0, row + 1] = wr
        else:
            rhs[row] -= wr * hi_value
    inner = solve_banded((1, 1), ab, rhs)
    f = np.empty(num)
    f[0], f[-1] = lo_value, hi_value
    f[1:-1] = inner
    return t, f


def envelope_profile(n, p, r, R, psi_value, delta, num=4097):
    """Radial reference profile of the weighted measure for a ball condenser."""
    alpha = _alpha(n, p)
    return profile_bvp(alpha, r, R, psi_value, delta, num=num)


def flux_slope(t, f, alpha):
    """f'(r+) recovered from the conserved discrete flux t^alpha f'."""
    dt = t[1] - t[0]
    phi = ((t[0] + t[1]) / 2.0) ** alpha * (f[1] - f[0]) / dt
    return phi / t[0] ** alpha


def flux_capacity(n, p, t, f):
    """Capacity of the ball condenser from the profile's inner slope."""
    alpha = _alpha(n, p)
    r = t[0]
    fp = flux_slope(t, f, alpha)
    if p == 1:
        return (math.pi**n / 2.0) * r ** (2 * n - 1) * fp
    return (math.pi**2 / 4.0) * (r * fp) ** 2


def ball_condenser_capacity(n, p, r, R, psi_value, delta, num=8193):
    """Reference capacity via the independent 1-D solve + flux evaluation."""
    t, f = envelope_profile(n, p, r, R, psi_value, delta, num=num)
    return flux_capacity(n, p, t, f)


def sigma_density_profile(n, t, f):
    """Radial reduction of the Hessian eigenvalues and densities on a 1-D mesh.

    Returns dict with lam_rad, lam_tan and density_p for p = 1..n at the
    interior mesh nodes (3-point differences).  Anchor: f = t^2 gives
    density_p = n! for all p.
    """
    dt = t[1] - t[0]
    fp = (f[2:] - f[:-2]) / (2.0 * dt)
    fpp = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / dt**2
    tm = t[1:-1]
    lam_rad = 0.25 * (fpp + fp / tm)
    lam_tan = fp / (2.0 * tm)
    out = {"t": tm, "lam_rad": lam_rad, "lam_tan": lam_tan}
    if n == 1:
        out["density_1"] = lam_rad
    else:
        s1 = lam_rad + lam_tan
        s2 = lam_rad * lam_tan
        out["density_1"] = math.factorial(1) * math.factorial(n - 1) * s1
        out["density_2"] = math.factorial(2) * math.factorial(n - 2) * s2
    return out


def mass_quadrature(n, p, t, f, upto=None):
    """integral of density_p over the ball of radius `upto` by 1-D quadrature.

    The volume element of R^{2n} is 2 pi^n t^{2n-1} / (n-1)! dt.  Profiles
    with a kink (obstacle contact) are handled by the same 3-point formulas;
    the kink cell carries the concentrated mass.
    """
    prof = sigma_density_profile(n, t, f)
    dens = prof[f"density_{p}"]
    tm = prof["t"]
    area = 2.0 * math.pi**n / math.factorial(n - 1) * tm ** (2 * n - 1)
    dt = t[1] - t[0]
    sel = slice(None) if upto is None else tm <= upto
    return float(np.sum(dens[sel] * area[sel]) * dt)


def clamped_profile(n, p, r, R, psi_value, delta, inner=None, num=8193):
    """Envelope profile extended inside the compact set (f = psi for t <= r).

    Solves the annulus problem and prepends the flat obstacle segment from
    `inner` (default r/4) so that quadrature across the kink is possible.
    """
    inner = r / 4.0 if inner is None else inner
    t_out, f_out = envelope_profile(n, p, r, R, psi_value, delta, num=num)
    dt = t_out[1] - t_out[0]
    k = int(np.ceil((r - inner) / dt))
    t_in = t_out[0] - dt * np.arange(k, 0, -1)
    f_in = np.full(k, psi_value)
    return np.concatenate([t_in, t_out]), np.concatenate([f_in, f_out])
