"""Shared numerical machinery.

Monte Carlo estimation on counter-based random streams, sphere sampling,
root finding, Takagi factorization and a few special functions.  Every
Monte Carlo routine splits its sample budget into fixed-size chunks; chunk
``i`` draws from a Philox stream whose counter is keyed by ``i``, so the
result does not depend on how chunks are spread over workers.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special
from scipy.stats import qmc

CHUNK = 1 << 15

_STREAM_IDS = {
    "default": 0,
    "volume": 1,
    "boundary": 2,
    "quantile": 3,
    "wet": 4,
    "oracle": 5,
    "validate": 6,
}


class Rejected(ValueError):
    """An input violated a documented precondition.

    ``measure`` carries the offending quantity when there is one (an
    asymmetry, a residual, a determinant).
    """

    def __init__(self, message: str, measure: float | None = None):
        super().__init__(message)
        self.measure = measure


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    samples: int
    seed: int
    method: str = "mc"

    def __post_init__(self):
        if self.samples < 1:
            raise Rejected("an estimate needs at least one sample")
        if not self.std_error >= 0.0:
            raise Rejected("std_error must be non-negative", self.std_error)

    def scaled(self, factor: float) -> "McEstimate":
        return replace(self, value=self.value * factor,
                       std_error=self.std_error * abs(factor))

    @classmethod
    def exact(cls, value: float, seed: int = 0) -> "McEstimate":
        return cls(float(value), 0.0, 1, int(seed), "exact")


def stream_id(name: str | int) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name)
    return _STREAM_IDS[name]


class CounterRNG:
    """Philox streams addressed by (seed, stream, chunk index)."""

    def __init__(self, seed: int, stream: str | int = 0):
        self.seed = int(seed)
        self.stream = stream_id(stream)
        self._key = [self.seed & 0xFFFFFFFFFFFFFFFF, self.stream]

    def chunk(self, index: int) -> np.random.Generator:
        bitgen = np.random.Philox(key=self._key, counter=[0, int(index), 0, 0])
        return np.random.Generator(bitgen)


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))


def _chunk_sizes(samples: int, chunk: int) -> list[int]:
    full, rest = divmod(samples, chunk)
    return [chunk] * full + ([rest] if rest else [])


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise Rejected("box bounds must be two vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise Rejected("box bounds must be finite")
        if np.any(hi <= lo):
            raise Rejected("box must have positive volume")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def sample(self, gen: np.random.Generator, m: int):
        u = gen.random((m, self.dim))
        return self.lo + u * (self.hi - self.lo), self.volume


def mc_integrate(func: Callable, sampler: Callable, samples: int, seed: int, *,
                 stream: str | int = "default", workers: int | None = None,
                 chunk: int = CHUNK, method: str = "mc"):
    """Estimate integrals by importance sampling.

    ``sampler(gen, m)`` returns ``(points, weights)`` where ``weights`` is a
    scalar or an ``(m,)`` array (the reciprocal proposal density).  ``func``
    maps the points to an ``(m,)`` or ``(m, k)`` array.  Returns one
    :class:`McEstimate` per output column (a single one for 1-D output).
    """
    samples = int(samples)
    if samples < 1:
        raise Rejected("zero samples requested")
    rng = CounterRNG(seed, stream)
    sizes = _chunk_sizes(samples, chunk)

    def work(i):
        pts, w = sampler(rng.chunk(i), sizes[i])
        f = np.asarray(func(pts), dtype=float)
        wf = (f.T * w).T if np.ndim(w) else f * w
        return wf.sum(axis=0), (wf * wf).sum(axis=0)

    workers = workers or default_workers()
    if workers == 1 or len(sizes) == 1:
        parts = [work(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    # chunk-ordered reduction keeps the float sum schedule independent
    s1 = np.sum(np.array([p[0] for p in parts]), axis=0)
    s2 = np.sum(np.array([p[1] for p in parts]), axis=0)
    mean = s1 / samples
    var = np.maximum(s2 / samples - mean * mean, 0.0)
    se = np.sqrt(var / max(samples - 1, 1)) if samples > 1 else np.zeros_like(mean)
    if np.ndim(mean) == 0:
        return McEstimate(float(mean), float(se), samples, int(seed), method)
    return [McEstimate(float(a), float(b), samples, int(seed), method)
            for a, b in zip(mean, se)]


def mc_volume(membership: Callable, box: Box, samples: int, seed: int, *,
              stream: str | int = "volume", workers: int | None = None) -> McEstimate:
    """Hit-or-miss volume of ``{x in box : membership(x)}``.

    ``membership`` takes an ``(m, d)`` array and returns a boolean mask.
    The standard error is the box volume times the binomial standard
    deviation of the hit fraction.
    """
    if not isinstance(box, Box):
        box = Box(*box)
    samples = int(samples)
    if samples < 1:
        raise Rejected("zero samples requested")
    rng = CounterRNG(seed, stream)
    sizes = _chunk_sizes(samples, CHUNK)

    def work(i):
        pts, _ = box.sample(rng.chunk(i), sizes[i])
        return int(np.count_nonzero(membership(pts)))

    workers = workers or default_workers()
    if workers == 1 or len(sizes) == 1:
        hits = sum(work(i) for i in range(len(sizes)))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = sum(pool.map(work, range(len(sizes))))
    p = hits / samples
    vol = box.volume
    return McEstimate(vol * p, vol * math.sqrt(p * (1.0 - p) / samples), samples, int(seed))


# ----------------------------------------------------------------------------
# spheres and balls

def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d: int) -> float:
    if d == 0:
        return 1.0
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def uniform_sphere(gen: np.random.Generator, m: int, d: int) -> np.ndarray:
    x = gen.standard_normal((m, d))
    r = np.linalg.norm(x, axis=1)
    bad = r == 0.0
    if np.any(bad):
        x[bad, 0], r[bad] = 1.0, 1.0
    return x / r[:, None]


def uniform_ball(gen: np.random.Generator, m: int, d: int) -> np.ndarray:
    u = uniform_sphere(gen, m, d)
    return u * gen.random(m)[:, None] ** (1.0 / d)


def lattice_directions(d: int, count: int) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors in R^d."""
    if d < 1:
        raise Rejected("sphere dimension must be at least 1")
    if d == 1:
        return np.where(np.arange(count) % 2 == 0, 1.0, -1.0)[:, None]
    if d == 2:
        ang = 2.0 * math.pi * np.arange(count) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if d == 3:
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        phi = math.pi * (3.0 - math.sqrt(5.0)) * np.arange(count)
        rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    # fixed scrambling keeps the set deterministic and nested in count
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        u = qmc.Sobol(d, scramble=True, seed=20240611).random(count)
    x = special.ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))
    return x / np.linalg.norm(x, axis=1)[:, None]


@dataclass(frozen=True)
class SphereSample:
    points: np.ndarray
    low_discrepancy: bool


def sphere_sample(n: int, count: int, seed: int | None = None,
                  method: str = "random") -> SphereSample:
    """Points on the unit sphere of R^n.

    ``method="random"`` draws i.i.d. uniform points from the counter-based
    stream for ``seed``; ``method="lattice"`` returns the deterministic
    spiral/Fibonacci-type point set (equally spaced angles when n = 2,
    the pair ``{+1, -1}`` when n = 1).
    """
    if n < 1:
        raise Rejected("sphere dimension must be at least 1")
    if method == "lattice":
        return SphereSample(lattice_directions(n, count), True)
    if method != "random":
        raise Rejected(f"unknown sphere sampling method {method!r}")
    if seed is None:
        raise Rejected("random sphere samples need an explicit seed")
    rng = CounterRNG(seed, "boundary")
    pts = [uniform_sphere(rng.chunk(i), m, n)
           for i, m in enumerate(_chunk_sizes(count, CHUNK))]
    return SphereSample(np.concatenate(pts) if pts else np.empty((0, n)), False)


def covering_angle(points: np.ndarray, probes: int = 50000, seed: int = 7) -> float:
    """Largest angular distance from a sphere point to the set ``points``.

    Estimated from random probes and inflated by 15% so it can be used as a
    covering bound in screening tests.
    """
    d = points.shape[1]
    if d == 2:
        ang = np.sort(np.mod(np.arctan2(points[:, 1], points[:, 0]), 2 * math.pi))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * math.pi]]))
        return float(gaps.max() / 2.0)
    gen = CounterRNG(seed, "validate").chunk(0)
    worst = 0.0
    for start in range(0, probes, 2048):
        q = uniform_sphere(gen, min(2048, probes - start), d)
        c = np.clip((q @ points.T).max(axis=1), -1.0, 1.0)
        worst = max(worst, float(np.arccos(c).max()))
    return 1.15 * worst


def tangent_basis(q: np.ndarray) -> np.ndarray:
    """Orthonormal bases of the tangent spaces ``q^perp``.

    ``q`` has shape (m, d) with unit rows; returns (m, d, d-1) obtained from
    the Householder reflection that maps e_1 to q.
    """
    q = np.atleast_2d(q)
    m, d = q.shape
    s = np.where(q[:, 0] >= 0.0, 1.0, -1.0)
    v = q.copy()
    v[:, 0] += s
    vv = np.einsum("ij,ij->i", v, v)
    h = np.eye(d)[None, :, :] - 2.0 * v[:, :, None] * v[:, None, :] / vv[:, None, None]
    return h[:, :, 1:]


def move_on_sphere(q: np.ndarray, basis: np.ndarray, x: np.ndarray) -> np.ndarray:
    y = q + np.einsum("mdk,mk->md", basis, x)
    return y / np.linalg.norm(y, axis=1)[:, None]


# ----------------------------------------------------------------------------
# scalar helpers

def gamma_fn(x: float) -> float:
    x = float(x)
    if not x > 0.0:
        raise Rejected("gamma_fn is only defined here for x > 0", x)
    return math.gamma(x)


def find_root(f: Callable[[float], float], lo: float, hi: float,
              tol: float = 1e-12) -> float:
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if np.sign(flo) == np.sign(fhi):
        raise Rejected("find_root needs a sign change on [lo, hi]", min(abs(flo), abs(fhi)))
    return float(optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps,
                                 maxiter=500))


def bisect_roots(f: Callable[[np.ndarray], np.ndarray], lo, hi,
                 iters: int = 100, xtol: float = 0.0) -> np.ndarray:
    """Vectorized bisection for monotone ``f`` with a root in each [lo, hi]."""
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    slo = np.sign(f(lo))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        go_right = np.sign(f(mid)) == slo
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
        if np.all(hi - lo <= xtol + 4e-16 * np.abs(mid)):
            break
    return 0.5 * (lo + hi)


def compass_minimize(f: Callable[[np.ndarray, np.ndarray], np.ndarray],
                     m: int, d: int, step0, min_step: float = 1e-8,
                     stop_below=None, max_iter: int = 400):
    """Batched coordinate pattern search starting at x = 0.

    ``f(idx, x)`` evaluates the objective for the problems ``idx`` at the
    points ``x`` of shape (len(idx), d).  Each problem keeps its own step,
    halved after an unsuccessful poll.  A problem stops once its step drops
    below ``min_step`` or its value falls below ``stop_below`` (per problem).
    Returns ``(x, value)``.
    """
    x = np.zeros((m, d))
    idx_all = np.arange(m)
    val = np.asarray(f(idx_all, x), dtype=float).copy()
    step = np.broadcast_to(np.asarray(step0, dtype=float), (m,)).copy()
    stop = None if stop_below is None else np.broadcast_to(
        np.asarray(stop_below, dtype=float), (m,))
    active = step >= min_step
    if stop is not None:
        active &= val >= stop
    polls = np.concatenate([np.eye(d), -np.eye(d)])
    for _ in range(max_iter):
        ia = np.flatnonzero(active)
        if ia.size == 0:
            break
        best_val = val[ia].copy()
        best_x = x[ia].copy()
        for e in polls:
            trial = x[ia] + step[ia, None] * e
            fv = np.asarray(f(ia, trial), dtype=float)
            better = fv < best_val
            best_val = np.where(better, fv, best_val)
            best_x[better] = trial[better]
        improved = best_val < val[ia]
        val[ia] = best_val
        x[ia] = best_x
        step[ia] = np.where(improved, step[ia], 0.5 * step[ia])
        still = step[ia] >= min_step
        if stop is not None:
            still &= val[ia] >= stop[ia]
        active[ia] = still
    return x, val


# ----------------------------------------------------------------------------
# Takagi factorization

def _unit_phase_columns(u: np.ndarray) -> np.ndarray:
    # fix the remaining sign freedom: largest entry of each column gets Re > 0
    k = np.argmax(np.abs(u), axis=0)
    lead = u[k, np.arange(u.shape[1])]
    flip = np.where(lead.real < 0.0, -1.0, 1.0)
    return u * flip


def _complement(g: np.ndarray, n: int) -> np.ndarray:
    k = n - g.shape[1]
    if k == 0:
        return np.zeros((n, 0), dtype=complex)
    proj = np.eye(n, dtype=complex) - g @ g.conj().T
    u, _, _ = np.linalg.svd(proj)
    return u[:, :k]


def _gram_schmidt(u: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(u)
    return q * np.where(np.diag(r).real < 0.0, -1.0, 1.0)


def _takagi_core(s: np.ndarray):
    n = s.shape[0]
    scale = float(np.max(np.abs(s))) if n else 0.0
    if n == 0 or scale == 0.0:
        return np.eye(n, dtype=complex), np.zeros(n)
    a = s / scale
    p, r = a.real, a.imag
    emb = np.block([[p, r], [r, -p]])
    w, v = np.linalg.eigh(emb)
    order = np.argsort(w)[::-1][:n]
    phi = w[order]
    u = v[:n, order] + 1j * v[n:, order]
    # columns whose +phi/-phi pair is well separated are trustworthy
    good = phi > 1e-4
    ug = _gram_schmidt(u[:, good]) if np.any(good) else np.zeros((n, 0), complex)
    phig = phi[good]
    c = _complement(ug, n)
    if c.shape[1]:
        b = c.conj().T @ s @ c.conj()
        b = 0.5 * (b + b.T)
        q, phic = _takagi_core(b)
        uc = c @ q
        return np.column_stack([ug, uc]), np.concatenate([phig * scale, phic])
    return ug, phig * scale


def takagi(s, tol: float = 1e-12):
    """Takagi factorization ``S = U diag(phi) U^T`` of a complex symmetric S.

    Returns ``(U, phi)`` with ``U`` unitary and ``phi`` non-negative, sorted
    in descending order.  The singular pairs come from the real symmetric
    eigenproblem ``[[Re S, Im S], [Im S, -Re S]]``, whose positive
    eigenvectors ``(x, y)`` satisfy ``S conj(x + iy) = phi (x + iy)``.  Blocks
    of very small ``phi`` are refactored recursively on their complement so
    that ``U`` stays unitary to rounding.
    """
    s = np.array(s, dtype=complex)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise Rejected("takagi needs a square matrix")
    if not np.all(np.isfinite(s)):
        raise Rejected("takagi input has non-finite entries")
    asym = float(np.max(np.abs(s - s.T))) if s.size else 0.0
    if asym > tol * max(1.0, float(np.max(np.abs(s)))):
        raise Rejected(f"matrix is not symmetric (max |S - S^T| = {asym:.3e})", asym)
    s = 0.5 * (s + s.T)
    u, phi = _takagi_core(s)
    order = np.argsort(-phi, kind="stable")
    u, phi = u[:, order], np.clip(phi[order], 0.0, None)
    return _unit_phase_columns(u), phi
