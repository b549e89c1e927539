from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holofloat.convex import Ball, Cube, Superellipsoid, apply_affine, ellipsoid
from holofloat.floating import (CapSpec, ConvergenceReport, asa_limit_study, c_n_constant,
                                cap_offsets, cap_volume, cap_volumes, convention_ratio,
                                exact_wet_volume, fit_limit, mc_cap_volume, min_cap_volume,
                                unit_ball_cap, wet_mask, wet_volume)
from holofloat.numerics import McEstimate, Rejected, lattice_directions


@pytest.mark.parametrize("theta", [0.05, 0.4, 1.0, 2.0, 3.0])
def test_disk_segment(theta):
    v = cap_volume(Ball(2), CapSpec([1.0, 0.0], math.cos(theta)))
    assert abs(v - (theta - math.sin(theta) * math.cos(theta))) < 1e-12


def test_disk_segment_quadrature():
    from scipy.integrate import quad

    t = 0.3
    ref = quad(lambda x: 2 * math.sqrt(1 - x * x), t, 1)[0]
    assert abs(cap_volume(Ball(2), CapSpec([0.0, 1.0], t)) - ref) < 1e-10


@pytest.mark.parametrize("h", [1e-4, 0.3, 1.0, 1.7])
def test_ball3_cap(h):
    u = np.array([1.0, 2.0, 2.0]) / 3
    v = cap_volume(Ball(3), CapSpec(u, 1 - h))
    assert abs(v - math.pi * h * h * (3 - h) / 3) < 1e-12


@pytest.mark.parametrize("body", [Ball(2), Ball(3), Cube(2), Cube(3), Superellipsoid(4, [1, 2]),
                                  ellipsoid([2, 1, 1])], ids=lambda b: f"{b.tag}{b.n}")
def test_cap_beyond_support_is_zero(body):
    u = lattice_directions(body.n, 5)
    t = body.support(u) + 0.01
    assert np.all(cap_volumes(body, u, t) == 0.0)


@pytest.mark.parametrize("body", [Cube(2), Cube(3), Superellipsoid(4, [1, 2]),
                                  ellipsoid([2, 1, 0.7]), Ball(4)], ids=lambda b: f"{b.tag}{b.n}")
def test_cap_volume_against_mc(body):
    u = np.array([0.6, 0.8] + [0.0] * (body.n - 2))
    t = 0.3 * float(body.support(u[None, :])[0])
    cap = CapSpec(u, t)
    est = mc_cap_volume(body, cap, 400_000, 3)
    assert abs(cap_volume(body, cap) - est.value) < 4 * est.std_error


def test_unit_ball_cap_full():
    for n in (1, 2, 3, 5):
        full = unit_ball_cap(n, 2.0)
        assert abs(full - math.pi ** (n / 2) / math.gamma(n / 2 + 1)) < 1e-12


def test_cap_direction_must_be_unit():
    with pytest.raises(Rejected):
        CapSpec([1.0, 1.0], 0.0)


def test_cap_offsets_invert_volume():
    body = Superellipsoid(4, [1, 2])
    u = lattice_directions(2, 9)
    t = cap_offsets(body, u, 0.05)
    assert np.allclose(cap_volumes(body, u, t), 0.05, rtol=1e-9)


@pytest.mark.parametrize("n", [2, 3])
def test_min_cap_radial(n):
    x = np.zeros(n)
    x[0] = 0.4
    x = np.roll(x, 1) + 0.2
    r = np.linalg.norm(x)
    vol, u = min_cap_volume(Ball(n), x)
    assert abs(vol - float(unit_ball_cap(n, 1 - r))) < 1e-9
    assert np.arccos(min(1.0, u @ x / r)) < 1e-3


def test_min_cap_center_and_boundary():
    vol, _ = min_cap_volume(Ball(3), np.zeros(3))
    assert abs(vol - 2 * math.pi / 3) < 1e-12
    vol, _ = min_cap_volume(Ball(2), [1.0, 0.0])
    assert vol < 1e-12
    with pytest.raises(Rejected):
        min_cap_volume(Ball(2), [1.5, 0.0])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_min_cap_direction_property(seed):
    g = np.random.default_rng(seed)
    x = g.normal(size=3)
    x *= g.uniform(0.1, 0.95) / np.linalg.norm(x)
    _, u = min_cap_volume(Ball(3), x)
    assert np.arccos(min(1.0, u @ x / np.linalg.norm(x))) < 1e-3


@pytest.mark.parametrize("h", [0.01, 0.2])
def test_exact_ball3(h):
    delta = math.pi * h * h * (3 - h) / 3
    w = wet_volume(Ball(3), delta, method="exact")
    assert abs(w.value - 4 * math.pi / 3 * (1 - (1 - h) ** 3)) < 1e-12
    assert w.std_error == 0


def test_exact_disk():
    theta = 0.3
    delta = theta - math.sin(theta) * math.cos(theta)
    w = wet_volume(Ball(2), delta, method="exact")
    assert abs(w.value - math.pi * math.sin(theta) ** 2) < 1e-12


def test_wet_volume_shrinks():
    vals = [wet_volume(Ball(3), d).value for d in (1e-2, 1e-4, 1e-6, 1e-8)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-3


def test_wet_volume_bad_delta():
    with pytest.raises(Rejected):
        wet_volume(Ball(2), 2.0)
    with pytest.raises(Rejected):
        wet_volume(Cube(2), 0.01, method="exact")


def test_wet_mask_ball_matches_radius():
    delta = 0.01
    h = 1 - math.sqrt(1 - exact_wet_volume(Ball(2), delta) / math.pi)
    q = lattice_directions(2, 64)
    r = np.linspace(0.5, 0.999, 64)
    x = r[:, None] * q
    mask = wet_mask(Ball(2), x, delta)
    far = np.abs(r - (1 - h)) > 1e-5
    assert np.array_equal(mask[far], (r > 1 - h)[far])


@settings(max_examples=5, deadline=None)
@given(d1=st.floats(1e-4, 0.1), d2=st.floats(1e-4, 0.1), seed=st.integers(0, 1000))
def test_wet_monotone_in_delta(d1, d2, seed):
    lo, hi = sorted((d1, d2))
    body = Superellipsoid(4, [1.0, 1.5])
    g = np.random.default_rng(seed)
    q = g.normal(size=(150, 2))
    q /= np.linalg.norm(q, axis=1)[:, None]
    x = (g.uniform(0.6, 1.0, 150) * body.radius(q))[:, None] * q
    a = wet_mask(body, x, lo)
    b = wet_mask(body, x, hi)
    assert np.all(b[a])


def test_affine_equivariance_mc():
    A = np.array([[2.0, 0.3], [0.0, 0.7]])
    det = abs(np.linalg.det(A))
    delta = 0.01
    img = apply_affine(Ball(2), A)
    est = wet_volume(img, delta * det, 20_000, 4, method="mc")
    ref = det * exact_wet_volume(Ball(2), delta)
    assert abs(est.value - ref) < 3 * est.std_error


def test_mc_matches_exact_small():
    est = wet_volume(Ball(3), 1e-3, 20_000, 9, method="mc")
    ref = exact_wet_volume(Ball(3), 1e-3)
    assert abs(est.value - ref) < 4 * est.std_error


def test_mc_reproducible():
    a = wet_volume(Superellipsoid(4, [1, 2]), 1e-3, 5000, 2, method="mc", workers=1)
    b = wet_volume(Superellipsoid(4, [1, 2]), 1e-3, 5000, 2, method="mc", workers=3)
    assert a.value == b.value


def test_constants():
    assert abs(c_n_constant(2, "printed") - 2.0) < 1e-12
    assert abs(c_n_constant(3, "oracle") - math.sqrt(math.pi)) < 1e-12
    assert abs(c_n_constant(2, "oracle") - 2 * (2 / 3) ** (2 / 3)) < 1e-12
    for n in (2, 3, 4):
        r = c_n_constant(n, "printed") / c_n_constant(n, "oracle")
        assert abs(r - convention_ratio(n)) < 1e-12
    with pytest.raises(Rejected):
        c_n_constant(1)


def test_disk_oracle_from_expansion():
    # vol(wet)/delta^(2/3) -> pi (3/2)^(2/3) for the disk; times c_2 gives 2 pi
    d = 1e-9
    v = exact_wet_volume(Ball(2), d) / d ** (2 / 3)
    assert abs(v / (math.pi * 1.5 ** (2 / 3)) - 1) < 1e-4


def test_study_ball3():
    rep = asa_limit_study(Ball(3), [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    assert abs(rep.fitted_limit / (4 * math.pi) - 1) < 5e-3
    assert rep.fit_exponent == 0.5
    assert len(rep.rows()) == 5


def test_study_disk_printed_factor():
    grid = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
    o = asa_limit_study(Ball(2), grid)
    p = asa_limit_study(Ball(2), grid, convention="printed")
    assert abs(o.fitted_limit / (2 * math.pi) - 1) < 5e-3
    assert abs(p.fitted_limit / o.fitted_limit - convention_ratio(2)) < 1e-2


def test_study_rejects_grid():
    with pytest.raises(Rejected, match="delta_grid not decreasing"):
        asa_limit_study(Ball(2), [1e-3, 1e-2])
    with pytest.raises(Rejected):
        asa_limit_study(Ball(2), [1e-2, 1e-9])


def test_report_seed_consistency():
    s = [McEstimate(1.0, 0.1, 10, 1), McEstimate(1.0, 0.1, 10, 2)]
    with pytest.raises(Rejected):
        ConvergenceReport((1e-2, 1e-3), s, 0.5, 1.0, 0.0)


def test_fit_limit_exact_power_law():
    d = np.array([1e-2, 1e-3, 1e-4])
    a, b, res = fit_limit(d, 3.0 + 2.0 * d ** 0.5, exponent=0.5)
    assert abs(a - 3) < 1e-12 and abs(b - 2) < 1e-10 and res < 1e-12
