from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holofloat.numerics import (Box, CounterRNG, McEstimate, Rejected, compass_minimize,
                                covering_angle, find_root, gamma_fn, lattice_directions,
                                mc_integrate, mc_volume, sphere_sample, takagi, uniform_sphere)


def disk(x):
    return np.sum(x * x, axis=1) <= 1.0


def test_mc_volume_empty_and_full():
    e = mc_volume(lambda x: np.zeros(len(x), bool), Box([-1, -1], [1, 1]), 5000, 3)
    assert e.value == 0.0 and e.std_error == 0.0
    f = mc_volume(lambda x: np.ones(len(x), bool), Box([0, 0], [1, 1]), 5000, 3)
    assert f.value == 1.0 and f.std_error == 0.0


def test_mc_volume_disk_area():
    e = mc_volume(disk, Box([-1, -1], [1, 1]), 10_000_000, 11)
    assert abs(e.value - math.pi) < 4 * e.std_error
    assert e.samples == 10_000_000 and e.seed == 11


def test_mc_volume_reproducible_across_workers():
    box = Box([-1, -1, -1], [1, 1, 1])
    a = mc_volume(disk, box, 200_000, 5, workers=1)
    b = mc_volume(disk, box, 200_000, 5, workers=4)
    c = mc_volume(disk, box, 200_000, 5, workers=1)
    assert a.value == b.value == c.value
    assert a.std_error == b.std_error


def test_mc_integrate_multi_output_shares_stream():
    def sampler(gen, m):
        return gen.random((m, 1)), 1.0

    out = mc_integrate(lambda x: np.column_stack([x[:, 0], x[:, 0] ** 2]), sampler,
                       100_000, 2, workers=1)
    assert len(out) == 2
    assert abs(out[0].value - 0.5) < 4 * out[0].std_error
    assert abs(out[1].value - 1 / 3) < 4 * out[1].std_error


def test_nested_sets_ordered_on_shared_stream():
    box = Box([-1, -1], [1, 1])
    small = mc_volume(lambda x: np.sum(x * x, 1) <= 0.25, box, 50_000, 8)
    big = mc_volume(disk, box, 50_000, 8)
    assert small.value <= big.value


@settings(max_examples=25, deadline=None)
@given(r1=st.floats(0.05, 1.0), r2=st.floats(0.05, 1.0), seed=st.integers(0, 2 ** 32))
def test_nested_monotonicity_property(r1, r2, seed):
    lo, hi = sorted((r1, r2))
    box = Box([-1, -1], [1, 1])
    a = mc_volume(lambda x: np.sum(x * x, 1) <= lo * lo, box, 4000, seed)
    b = mc_volume(lambda x: np.sum(x * x, 1) <= hi * hi, box, 4000, seed)
    assert a.value <= b.value


def test_zero_samples_rejected():
    with pytest.raises(Rejected):
        mc_volume(disk, Box([0, 0], [1, 1]), 0, 1)


def test_estimate_scaling():
    e = McEstimate(2.0, 0.5, 100, 1)
    s = e.scaled(-3.0)
    assert s.value == -6.0 and s.std_error == 1.5 and s.seed == 1


def test_counter_rng_chunks_independent_of_order():
    rng = CounterRNG(42, "volume")
    a = rng.chunk(3).random(5)
    rng.chunk(0).random(100)
    b = CounterRNG(42, "volume").chunk(3).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, CounterRNG(42, "boundary").chunk(3).random(5))


def test_sphere_sample_s0():
    pts = sphere_sample(1, 2, method="lattice").points
    assert sorted(pts[:, 0].tolist()) == [-1.0, 1.0]


def test_sphere_sample_four_angles():
    pts = sphere_sample(2, 4, method="lattice").points
    ang = np.sort(np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi))
    assert np.allclose(np.diff(ang), np.pi / 2, atol=1e-12)


def test_sphere_sample_mean():
    count = 1_000_000
    pts = sphere_sample(3, count, seed=4).points
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0)
    assert np.all(np.abs(pts.mean(axis=0)) < 4 / math.sqrt(count))


def test_sphere_sample_needs_seed():
    with pytest.raises(Rejected):
        sphere_sample(3, 10)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_lattice_unit_and_nested(d):
    a = lattice_directions(d, 64)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0)
    if d >= 4:
        assert np.allclose(lattice_directions(d, 128)[:64], a)


def test_lattice_covering_shrinks():
    assert covering_angle(lattice_directions(3, 1024)) < covering_angle(lattice_directions(3, 64))


def test_gamma_values():
    assert gamma_fn(1.0) == 1.0
    assert abs(gamma_fn(0.5) - math.sqrt(math.pi)) < 1e-14
    assert gamma_fn(5.0) == 24.0


def test_find_root_examples():
    assert abs(find_root(lambda x: x - 0.5, 0.0, 1.0) - 0.5) < 1e-12
    assert abs(find_root(lambda x: x * x - 2, 0.0, 2.0) - math.sqrt(2)) < 1e-12
    assert abs(find_root(lambda x: x ** 3, -1.0, 1.0)) < 1e-12
    with pytest.raises(Rejected):
        find_root(lambda x: x * x + 1, -1.0, 1.0)


def test_compass_minimize_quadratic():
    target = np.array([[0.3, -0.2], [-0.1, 0.05]])

    def f(idx, x):
        return np.sum((x - target[idx]) ** 2, axis=1)

    x, val = compass_minimize(f, 2, 2, 0.5, min_step=1e-9)
    assert np.allclose(x, target, atol=1e-6)
    assert np.all(val < 1e-10)


def test_takagi_zero():
    U, phi = takagi(np.zeros((3, 3)))
    assert np.all(phi == 0)
    assert np.allclose(U, np.eye(3))


def test_takagi_diagonal():
    U, phi = takagi(np.diag([3.0, 1.0]))
    assert np.allclose(phi, [3, 1])
    assert np.allclose(U, np.eye(2), atol=1e-12)


def test_takagi_random_3x3():
    g = np.random.default_rng(0)
    A = g.normal(size=(3, 3)) + 1j * g.normal(size=(3, 3))
    S = (A + A.T) / 2
    U, phi = takagi(S)
    assert np.max(np.abs(U @ np.diag(phi) @ U.T - S)) <= 1e-10


def test_takagi_rejects_nonsymmetric():
    with pytest.raises(Rejected):
        takagi(np.array([[0, 1], [0, 0]], dtype=complex))


def test_takagi_degenerate_values():
    # repeated and vanishing Takagi values
    g = np.random.default_rng(9)
    Q, _ = np.linalg.qr(g.normal(size=(4, 4)) + 1j * g.normal(size=(4, 4)))
    S = Q @ np.diag([2.0, 2.0, 0.0, 0.0]) @ Q.T
    U, phi = takagi(S)
    assert np.max(np.abs(U @ np.diag(phi) @ U.T - S)) <= 1e-10
    assert np.max(np.abs(U.conj().T @ U - np.eye(4))) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 2 ** 32 - 1))
def test_takagi_round_trip_property(n, seed):
    g = np.random.default_rng(seed)
    r = np.sqrt(g.random((n, n)))
    A = r * np.exp(2j * np.pi * g.random((n, n)))
    S = (A + A.T) / 2
    U, phi = takagi(S)
    assert np.all(phi >= 0)
    assert np.max(np.abs(U @ np.diag(phi) @ U.T - S)) <= 1e-10
    assert np.max(np.abs(U.conj().T @ U - np.eye(n))) <= 1e-12


def test_uniform_sphere_norms():
    pts = uniform_sphere(np.random.default_rng(1), 100, 5)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0)
