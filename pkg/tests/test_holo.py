from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holofloat.cr import (ComplexBall, ComplexEllipsoid, LinearImage, PerturbedBall, Polydisk,
                          boundary_points)
from holofloat.holo import (C_n_constant, LeviFamily, NormalForm, PolydiskFamily, _wet_ratios,
                            cap_area, hermitian_cap_volume, holo_wet_volume, holo_wet_volumes,
                            levi_peak, local_quadric, peak_family, sublevel_quantiles,
                            holo_limit_study, webster_normal_form)
from holofloat.numerics import Box, Rejected, mc_volume
from holofloat.numerics import CounterRNG


def test_C_n_values():
    assert abs(C_n_constant(1) - math.sqrt(math.pi / 2)) < 1e-12
    assert abs(C_n_constant(2) - (8 * math.pi / 3) ** (1 / 3)) < 1e-12
    assert abs(C_n_constant(3) - math.pi ** 0.75) < 1e-12


def test_cap_area_examples():
    assert abs(cap_area(1, 0, 1) - math.pi) < 1e-15
    assert cap_area(1, 0.5, -1) == 0.0
    assert abs(cap_area(2, 1, 1) - math.pi / math.sqrt(3)) < 1e-15
    with pytest.raises(Rejected):
        cap_area(1, 1.5j, 1)


def _cap_area_mc(A, B, V, samples, seed):
    R = math.sqrt(V / (A - abs(B)))

    def member(x):
        z = x[:, 0] + 1j * x[:, 1]
        return A * np.abs(z) ** 2 + (B * z * z).real < V

    return mc_volume(member, Box([-R, -R], [R, R]), samples, seed, stream="oracle")


def test_cap_area_mc_oracle():
    est = _cap_area_mc(2.0, 1.0, 1.0, 400_000, 1)
    assert abs(est.value - math.pi / math.sqrt(3)) < 4 * est.std_error


def test_hermitian_cap_examples():
    assert abs(hermitian_cap_volume(NormalForm([[1]], [0]), 1, 2) - math.pi) < 1e-15
    assert abs(hermitian_cap_volume(NormalForm(np.eye(2), [0, 0]), 1, 3) - math.pi ** 2 / 2) < 1e-14
    assert abs(hermitian_cap_volume(NormalForm([[2]], [0.5]), 1, 2) - math.pi / 4) < 1e-15
    assert hermitian_cap_volume(NormalForm([[2]], [0.5]), -1, 2) == 0.0
    with pytest.raises(Rejected):
        hermitian_cap_volume(NormalForm([[2]], [0.5]), 1, 3)


def test_hermitian_cap_mc_oracle():
    nf = NormalForm([[2]], [0.5])
    R = 1.0 / (2 * math.sqrt(math.sqrt(1.25) - 0.5))

    def member(x):
        return nf.cap_form(x[:, :1] + 1j * x[:, 1:]) < 1.0

    est = mc_volume(member, Box([-R, -R], [R, R]), 400_000, 2, stream="oracle")
    assert abs(est.value - math.pi / 4) < 4 * est.std_error


def test_normal_form_checks():
    with pytest.raises(Rejected):
        NormalForm([[1]], [1.5])
    with pytest.raises(Rejected):
        NormalForm([[0]], [0.1])


def test_webster_trivial():
    nf = webster_normal_form(np.eye(2), np.zeros((2, 2)))
    assert np.allclose(nf.T, np.eye(2)) and np.all(nf.phi == 0)


def test_webster_one_dimensional():
    nf = webster_normal_form([[1.0]], [[0.3]])
    assert abs(abs(nf.T[0, 0]) - 1) < 1e-12
    assert abs(nf.phi[0] - 0.3) < 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_webster_reconstruction(seed):
    g = np.random.default_rng(seed)
    X = g.normal(size=(2, 2)) + 1j * g.normal(size=(2, 2))
    Lam = X @ X.conj().T + 0.5 * np.eye(2)
    M = g.normal(size=(2, 2)) + 1j * g.normal(size=(2, 2))
    Mu = 0.5 * (M + M.T)
    # keep phi inside [0, 1]
    nf0 = webster_normal_form(Lam, np.zeros((2, 2)))
    Mu *= 0.9 / max(1e-9, np.max(np.abs(np.linalg.svd(
        np.linalg.inv(nf0.T).T @ Mu @ np.linalg.inv(nf0.T), compute_uv=False))))
    nf = webster_normal_form(Lam, Mu)
    z = g.normal(size=(100, 2)) + 1j * g.normal(size=(100, 2))
    ref = np.einsum("mi,ij,mj->m", z, Lam, z.conj()).real + np.einsum("mi,ij,mj->m", z, Mu, z).real
    assert np.max(np.abs(nf.form(z) - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


@pytest.mark.parametrize("dom", [ComplexBall(2), ComplexEllipsoid([1, 2]), PerturbedBall(2, 0.05),
                                 ComplexEllipsoid([1, 2, 3]), PerturbedBall(3, 0.05)],
                         ids=lambda d: f"{d.tag}{d.n}")
def test_phi_bound(dom):
    for p in boundary_points(dom, 30, 3):
        nf = webster_normal_form(*local_quadric(dom, p))
        assert np.all(nf.phi <= 1 + 1e-9)


def test_levi_peak_ball_and_disk():
    h = levi_peak(ComplexBall(2), [0, 1])
    z = np.array([[0.3, 0.2 + 0.1j], [0.1j, -0.5]])
    assert np.allclose(h(z), 1 - z[:, 1], atol=1e-15)
    assert h.c is not None and h.c > 0
    d = levi_peak(ComplexBall(1), [1.0])
    w = np.array([[0.2 + 0.3j]])
    assert np.allclose(d(w), 1 - w[:, 0])


def test_levi_peak_perturbed_quadratic_term():
    eps = 0.05
    r = 1 / math.sqrt(1 + eps)
    h = levi_peak(PerturbedBall(2, eps), [r, 0])
    assert abs(h.b[0, 0] + eps / (2 * (1 + eps) * r)) < 1e-14
    assert abs(h(np.array([[r, 0]]))[0]) == 0.0
    assert abs(h.dh_norm - 1) < 1e-12


def test_peak_rejects_polydisk_and_interior():
    with pytest.raises(Rejected):
        levi_peak(Polydisk(2), [1, 0])
    with pytest.raises(Rejected):
        levi_peak(ComplexBall(2), [0, 0.5])


@pytest.mark.parametrize("dom", [ComplexBall(2), ComplexEllipsoid([1, 2]), PerturbedBall(2, 0.05)],
                         ids=lambda d: d.tag)
def test_peak_family_properties(dom):
    fam = LeviFamily(dom, 16)
    for k in range(fam.K):
        h = fam.peak(k)
        assert abs(h(h.p[None, :])[0]) == 0.0
        assert abs(h.dh_norm - 1) < 1e-12
        assert h.c > 0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_peak_unitary_equivariance(seed):
    g = np.random.default_rng(seed)
    U, _ = np.linalg.qr(g.normal(size=(2, 2)) + 1j * g.normal(size=(2, 2)))
    base = PerturbedBall(2, 0.05)
    p = boundary_points(base, 1, seed % 997)[0]
    h = levi_peak(base, p, validate=False)
    hr = levi_peak(LinearImage(base, U), U @ p, validate=False)
    assert np.max(np.abs(hr.a - np.conj(U) @ h.a)) <= 1e-12
    assert np.max(np.abs(hr.b - np.conj(U) @ h.b @ U.conj().T)) <= 1e-12


@pytest.fixture(scope="module")
def disk_tables():
    dom = ComplexBall(1)
    return sublevel_quantiles(dom, peak_family(dom, 64), [1e-2, 1e-3, 1e-4, 1e-5], 8192, 1)


def test_disk_quantile_collar_width(disk_tables):
    for g, d in enumerate(disk_tables.delta_grid):
        eta = disk_tables.eta[:, g]
        assert np.ptp(eta) < 1e-12 * eta.max() + 1e-15
        if d <= 1e-3:
            assert abs(eta[0] / math.sqrt(2 * d / math.pi) - 1) < 0.03


def test_quantiles_monotone(disk_tables):
    assert np.all(np.diff(disk_tables.eta, axis=1) < 0)


def test_quantile_sample_floor():
    with pytest.raises(Rejected):
        sublevel_quantiles(ComplexBall(1), peak_family(ComplexBall(1), 4), [1e-2], 500, 0)
    with pytest.raises(Rejected, match="delta_grid not decreasing"):
        sublevel_quantiles(ComplexBall(1), peak_family(ComplexBall(1), 4), [1e-3, 1e-2], 2000, 0)


def _sublevel_mc(dom, h, eta, samples, seed):
    w = math.sqrt(2.5 * eta) + eta
    lo = np.concatenate([h.p.real - w, h.p.imag - w])
    hi = np.concatenate([h.p.real + w, h.p.imag + w])
    n = dom.n

    def member(x):
        z = x[:, :n] + 1j * x[:, n:]
        return dom.membership(z) & (np.abs(h(z)) < eta)

    return mc_volume(member, Box(lo, hi), samples, seed, stream="oracle")


@pytest.mark.parametrize("dom", [ComplexBall(2), PerturbedBall(2, 0.05)], ids=lambda d: d.tag)
def test_quantile_volume_duality(dom):
    fam = peak_family(dom, 4)
    tab = sublevel_quantiles(dom, fam, [1e-2, 1e-3], 100_000, 5)
    for k in range(fam.K):
        for g, d in enumerate(tab.delta_grid):
            est = _sublevel_mc(dom, fam.peak(k), tab.eta[k, g], 200_000, 11 + k)
            assert abs(est.value - d) < 4 * est.std_error


def test_holo_wet_disk_collar(disk_tables):
    dom = disk_tables.family.domain
    est = holo_wet_volume(dom, disk_tables, 1e-4, 200_000, 3)
    ref = 2 * math.pi * math.sqrt(2e-4 / math.pi)
    assert abs(est.value / ref - 1) < 0.03


def test_holo_wet_shrinks_and_uncovered_delta(disk_tables):
    dom = disk_tables.family.domain
    vals = [v.value for v in holo_wet_volumes(disk_tables, 50_000, 2)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    with pytest.raises(Rejected):
        holo_wet_volume(dom, disk_tables, 5e-3, 10_000, 1)


def test_wet_monotone_in_delta_and_K():
    dom = ComplexBall(2)
    tab = sublevel_quantiles(dom, peak_family(dom, 64), [1e-2, 1e-3, 1e-4], 4096, 2)
    gen = CounterRNG(0, "wet").chunk(0)
    q = gen.normal(size=(4000, 4))
    q /= np.linalg.norm(q, axis=1)[:, None]
    r = (1 - 0.2 * gen.random(4000)) ** 0.25
    x = q * r[:, None]
    Z = x[:, :2] + 1j * x[:, 2:]
    wet = _wet_ratios(tab, Z, False, None) < 1
    assert np.all(wet[:, 0] >= wet[:, 1]) and np.all(wet[:, 1] >= wet[:, 2])
    small = _wet_ratios(tab.subset(1), Z, False, None) < 1
    mid = _wet_ratios(tab.subset(16), Z, False, None) < 1
    assert np.all(small <= mid) and np.all(mid <= wet)
    assert wet.sum() > mid.sum() > small.sum()


def test_polydisk_family():
    with pytest.raises(Rejected):
        PolydiskFamily(Polydisk(2), 7)
    fam = PolydiskFamily(Polydisk(2), 8)
    assert np.allclose(np.abs(fam.P).max(axis=1), 1)


def test_holo_study_disk():
    rep = holo_limit_study(ComplexBall(1), [1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5],
                         K=64, samples=200_000, seed=1)
    assert abs(rep.fitted_limit / (2 * math.pi) - 1) < 0.02
    assert rep.fit_exponent == 0.5
    assert rep.reference == pytest.approx(2 * math.pi)


def test_holo_study_ball_small():
    rep = holo_limit_study(ComplexBall(2), [1e-2, 1e-3, 1e-4, 1e-5], K=256, samples=100_000,
                         seed=3)
    assert abs(rep.relative_gap) < 0.05


def test_holo_study_polydisk_decreasing():
    rep = holo_limit_study(Polydisk(2), [1e-2, 1e-3, 1e-4, 1e-5], K=32, samples=50_000, seed=4)
    vals = [s.value for s in rep.statistic]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert rep.reference is None


def test_holo_study_reproducible():
    grid = [1e-2, 1e-3]
    a = holo_limit_study(ComplexBall(1), grid, K=16, samples=20_000, seed=9, workers=1)
    b = holo_limit_study(ComplexBall(1), grid, K=16, samples=20_000, seed=9, workers=2)
    assert [s.value for s in a.statistic] == [s.value for s in b.statistic]
