import math

import numpy as np
import pytest

from mshcap import radial


def test_profile_bvp_reproduces_log():
    t, f = radial.profile_bvp(1, 0.5, 1.0, -1.0, 0.0)
    exact = np.log(t) / math.log(2.0)
    assert np.abs(f - exact).max() < 1e-6


def test_profile_bvp_reproduces_inverse_square():
    t, f = radial.profile_bvp(3, 0.4, 0.9, -1.0, 0.0)
    g = lambda s: -1.0 / s**2
    exact = (g(t) - g(0.9)) / (g(0.9) - g(0.4))
    assert np.abs(f - exact).max() < 1e-5


def test_flux_capacities_match_closed_forms():
    assert radial.ball_condenser_capacity(1, 1, 0.5, 1.0, -1.0, 0.0) == pytest.approx(
        (math.pi / 2) / math.log(2.0), rel=1e-6
    )
    assert radial.ball_condenser_capacity(2, 1, 0.4, 0.9, -1.0, 0.0) == pytest.approx(
        math.pi**2 / (1 / 0.16 - 1 / 0.81), rel=1e-6
    )
    assert radial.ball_condenser_capacity(2, 2, 0.4, 0.9, -1.0, 0.0) == pytest.approx(
        math.pi**2 / (4 * math.log(0.9 / 0.4) ** 2), rel=1e-6
    )


def test_capacity_scales_with_levels():
    base = radial.ball_condenser_capacity(1, 1, 0.5, 1.0, -1.0, 0.0)
    scaled = radial.ball_condenser_capacity(1, 1, 0.5, 1.0, -3.0, 1.0)
    assert scaled == pytest.approx(4.0 * base, rel=1e-9)


def test_sigma_profile_quadratic_anchor():
    t = np.linspace(0.1, 1.0, 2001)
    for n in (1, 2):
        prof = radial.sigma_density_profile(n, t, t**2)
        for p in range(1, n + 1):
            dens = prof[f"density_{p}"]
            assert np.abs(dens - math.factorial(n)).max() < 1e-8


def test_mass_quadrature_matches_flux():
    t, f = radial.clamped_profile(2, 2, 0.4, 0.9, -1.0, 0.0)
    mass = radial.mass_quadrature(2, 2, t, f, upto=0.7)
    flux = math.pi**2 / (4 * math.log(0.9 / 0.4) ** 2)
    assert mass == pytest.approx(flux, rel=2e-3)
