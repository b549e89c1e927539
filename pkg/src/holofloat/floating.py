"""Cap volumes, wet parts and the convex floating-body limit study."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .convex import AffineImage, Ball, ConvexBody, Cube, Superellipsoid, _rows
from .numerics import (McEstimate, Rejected, ball_volume, bisect_roots,
                       compass_minimize, covering_angle, lattice_directions,
                       mc_integrate, move_on_sphere, sphere_area, tangent_basis,
                       uniform_sphere)


@dataclass(frozen=True)
class CapSpec:
    """The half-space ``{y : u . y >= t}``."""

    u: np.ndarray
    t: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise Rejected("cap direction must be a unit vector", float(np.linalg.norm(u)))
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "t", float(self.t))


# ----------------------------------------------------------------------------
# cap volumes

def _x_minus_sin(x):
    # x - sin(x), without cancellation for small x
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.2
    x2 = x * x
    series = x * x2 / 6.0 * (1 - x2 / 20.0 * (1 - x2 / 42.0 * (1 - x2 / 72.0 * (1 - x2 / 110.0))))
    return np.where(small, series, x - np.sin(x))


def unit_ball_cap(n: int, h) -> np.ndarray:
    """Volume of the cap of height h in {0..2} cut from the unit ball of R^n."""
    h = np.clip(np.asarray(h, dtype=float), 0.0, 2.0)
    if n == 1:
        return h
    if n == 3:
        return math.pi * h * h * (3.0 - h) / 3.0
    flip = h > 1.0
    hs = np.where(flip, 2.0 - h, h)
    if n == 2:
        theta = 2.0 * np.arcsin(np.sqrt(hs / 2.0))
        small = 0.5 * _x_minus_sin(2.0 * theta)
    else:
        small = 0.5 * ball_volume(n) * special.betainc((n + 1) / 2.0, 0.5, hs * (2.0 - hs))
    return np.where(flip, ball_volume(n) - small, small)


def _cube_cdf2(w, sigma):
    # P(w1 Y1 + w2 Y2 <= sigma), Y uniform on [0,1]^2, w >= 0
    a = np.minimum(w[:, 0], w[:, 1])
    b = np.maximum(w[:, 0], w[:, 1])
    s = np.clip(sigma, 0.0, a + b)
    with np.errstate(divide="ignore", invalid="ignore"):
        lower = np.where(a > 0, s * s / (2 * a * b), 0.0)
        mid = (s - 0.5 * a) / b
        upper = 1.0 - np.where(a > 0, (a + b - s) ** 2 / (2 * a * b), 0.0)
    out = np.where(s <= a, lower, np.where(s <= b, mid, upper))
    return np.where(b > 0, out, (sigma >= 0).astype(float))


def _cube_cdf_general(w, sigma):
    out = np.empty(len(w))
    for i, (wi, si) in enumerate(zip(w, sigma)):
        wi = wi[wi > 1e-300]
        k = wi.size
        if k == 0:
            out[i] = 1.0 if si >= 0 else 0.0
            continue
        if si <= 0:
            out[i] = 0.0
            continue
        if si >= wi.sum():
            out[i] = 1.0
            continue
        total = 0.0
        for mask in range(1 << k):
            sel = [(mask >> j) & 1 for j in range(k)]
            ws = float(np.dot(sel, wi))
            if si > ws:
                total += (-1) ** sum(sel) * (si - ws) ** k
        out[i] = min(1.0, max(0.0, total / (math.factorial(k) * float(np.prod(wi)))))
    return out


def _cube_caps(body: Cube, u, t):
    s = body.side
    w = s * np.abs(u)
    W = w.sum(axis=1)
    tau = t + 0.5 * W
    cdf = _cube_cdf2 if body.n == 2 else _cube_cdf_general
    if body.n == 1:
        cdf = lambda ww, sg: np.clip(np.where(ww[:, 0] > 0, sg / np.where(ww[:, 0] > 0, ww[:, 0], 1), 1.0), 0.0, 1.0)
    use_upper = W - tau <= tau
    sig = np.where(use_upper, W - tau, tau)
    F = cdf(w, sig)
    frac = np.where(use_upper, F, 1.0 - F)
    return s ** body.n * frac


def _radial_cap_integrand(body: ConvexBody, q, u, tp):
    # volume density of cap {u.(x-c) >= tp} along the ray direction q
    n = body.n
    r = body.radius(q[None, :])[0]
    uq = float(q @ u)
    if uq > 0:
        lo = max(0.0, tp / uq)
        return max(r ** n - lo ** n, 0.0) / n if lo < r else 0.0
    if tp < 0 and uq < 0:
        hi = min(r, tp / uq)
        return hi ** n / n
    return r ** n / n if tp <= 0 and uq == 0 else 0.0


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_SECTOR_CELLS = 4096


def _sector_table(body: ConvexBody):
    # cumulative 0.5 * int_0^theta r^2 on a uniform angle grid
    tab = getattr(body, "_sector_cache", None)
    if tab is None:
        h = 2 * math.pi / _SECTOR_CELLS
        a = np.arange(_SECTOR_CELLS)[:, None] * h + 0.5 * h * (_GL_NODES + 1.0)
        r = body.radius(np.column_stack([np.cos(a.ravel()), np.sin(a.ravel())])).reshape(a.shape)
        cell = 0.25 * h * (r * r) @ _GL_WEIGHTS
        tab = np.concatenate([[0.0], np.cumsum(cell)])
        body._sector_cache = tab
    return tab


def _sector(body: ConvexBody, theta):
    tab = _sector_table(body)
    h = 2 * math.pi / _SECTOR_CELLS
    turns = np.floor(theta / (2 * math.pi))
    th = theta - turns * 2 * math.pi
    k = np.minimum((th / h).astype(int), _SECTOR_CELLS - 1)
    a0 = k * h
    half = 0.5 * (th - a0)
    a = a0[:, None] + half[:, None] * (_GL_NODES + 1.0)
    r = body.radius(np.column_stack([np.cos(a.ravel()), np.sin(a.ravel())])).reshape(a.shape)
    return turns * tab[-1] + tab[k] + 0.5 * half * ((r * r) @ _GL_WEIGHTS)


def _support_point(body: Superellipsoid, u):
    q = body.p / (body.p - 1.0)
    h = body.support(u)
    su = np.abs(u * body.scales)
    return np.sign(u) * body.scales * su ** (q - 1.0) / h[:, None] ** (q - 1.0)


def _planar_caps(body: Superellipsoid, u, t):
    """Cap areas of a centred planar body: sector over the arc minus a triangle."""
    def height(theta, uu):
        q = np.column_stack([np.cos(theta), np.sin(theta)])
        return body.radius(q) * np.einsum("ij,ij->i", q, uu)

    top = _support_point(body, u)
    bot = _support_point(body, -u)
    a_top = np.arctan2(top[:, 1], top[:, 0])
    a_bot = np.arctan2(bot[:, 1], bot[:, 0])
    a_bot = np.where(a_bot <= a_top, a_bot + 2 * math.pi, a_bot)
    f = lambda th: height(th, u) - t
    tb = bisect_roots(f, a_top, a_bot, iters=80)
    ta = bisect_roots(f, a_bot - 2 * math.pi, a_top, iters=80)
    ra = body.radius(np.column_stack([np.cos(ta), np.sin(ta)]))
    rb = body.radius(np.column_stack([np.cos(tb), np.sin(tb)]))
    tri = 0.5 * ra * rb * np.sin(tb - ta)
    sector = _sector(body, tb) - _sector(body, ta)
    short = tb - ta < 0.05
    if np.any(short):
        # direct composite rule avoids cancellation in the table for thin caps
        lo, w = ta[short], (tb - ta)[short] / 8
        a = lo[:, None, None] + w[:, None, None] * (np.arange(8)[None, :, None]
                                                     + 0.5 * (_GL_NODES + 1.0))
        r = body.radius(np.column_stack([np.cos(a.ravel()), np.sin(a.ravel())])).reshape(a.shape)
        sector[short] = 0.25 * w * np.einsum("ijk,k->i", r * r, _GL_WEIGHTS)
    return np.clip(sector - tri, 0.0, None)


def _quad_caps(body: ConvexBody, u, t):
    out = np.empty(len(u))
    for i, (ui, ti) in enumerate(zip(u, t)):
        tp = ti - ui @ body.center
        if body.n == 2:
            f = lambda a: _radial_cap_integrand(body, np.array([math.cos(a), math.sin(a)]), ui, tp)
            base = math.atan2(ui[1], ui[0])
            pts = [base + k * math.pi / 2 for k in range(-1, 2)]
            val = 0.0
            edges = [base - math.pi] + pts + [base + math.pi]
            for a0, a1 in zip(edges[:-1], edges[1:]):
                val += integrate.quad(f, a0, a1, epsabs=1e-13, epsrel=1e-11, limit=200)[0]
            out[i] = val
        elif body.n == 3:
            def g(phi, theta):
                st = math.sin(theta)
                q = np.array([st * math.cos(phi), st * math.sin(phi), math.cos(theta)])
                return _radial_cap_integrand(body, q, ui, tp) * st
            out[i] = integrate.dblquad(g, 0.0, math.pi, 0.0, 2 * math.pi,
                                       epsabs=1e-10, epsrel=1e-9)[0]
        else:
            raise Rejected("quadrature caps are available for n = 2, 3 only; use mc_cap_volume")
    return out


def cap_volumes(body: ConvexBody, u, t) -> np.ndarray:
    """Batched cap volumes ``vol(K ∩ {u . y >= t})`` for unit rows ``u``."""
    u = _rows(u, body.n)
    t = np.broadcast_to(np.asarray(t, dtype=float), (len(u),))
    hi = body.support(u)
    lo = -body.support(-u)
    if isinstance(body, Ball):
        tn = (t - u @ body.center) / body.R
        out = unit_ball_cap(body.n, 1.0 - tn) * body.R ** body.n
    elif isinstance(body, AffineImage):
        v = u @ body.A
        nv = np.linalg.norm(v, axis=1)
        out = abs(body.det) * cap_volumes(body.base, v / nv[:, None], (t - u @ body.b) / nv)
    elif isinstance(body, Cube):
        out = _cube_caps(body, u, t)
    elif isinstance(body, Superellipsoid):
        inside = (t < hi) & (t > lo)
        out = np.zeros(len(u))
        if np.any(inside):
            cap = _planar_caps if body.n == 2 else _quad_caps
            out[inside] = cap(body, u[inside], t[inside])
    else:
        raise Rejected(f"no cap formula for {body.tag}; use mc_cap_volume")
    vol = body.volume
    out = np.where(t >= hi, 0.0, out)
    if vol is not None:
        out = np.where(t <= lo, vol, out)
    return out


def cap_volume(body: ConvexBody, cap: CapSpec) -> float:
    return float(cap_volumes(body, cap.u[None, :], [cap.t])[0])


def mc_cap_volume(body: ConvexBody, cap: CapSpec, samples: int, seed: int) -> McEstimate:
    """Hit-or-miss cap volume over the bounding box (oracle and fallback)."""
    from .numerics import Box, mc_volume

    lo, hi = body.bounding_box()
    return mc_volume(lambda x: body.membership(x) & (x @ cap.u >= cap.t),
                     Box(lo, hi), samples, seed, stream="oracle")


def cap_offsets(body: ConvexBody, u, delta: float) -> np.ndarray:
    """Offsets t with ``cap_volume(u, t) = delta`` for each unit row of u."""
    u = _rows(u, body.n)
    hi = body.support(u)
    lo = -body.support(-u)
    if isinstance(body, Ball):
        h = _ball_cap_height(body.n, delta / body.R ** body.n)
        return u @ body.center + body.R * (1.0 - h)
    return bisect_roots(lambda t: cap_volumes(body, u, t) - delta, lo, hi, iters=200)


def _ball_cap_height(n: int, v: float) -> float:
    """Height of the unit-ball cap with volume v."""
    return float(bisect_roots(lambda h: unit_ball_cap(n, h) - v, np.array([0.0]),
                              np.array([2.0]), iters=200)[0])


# ----------------------------------------------------------------------------
# minimal caps and wet points

def default_lattice_size(n: int) -> int:
    return {1: 2, 2: 2048, 3: 1024}.get(n, 2048)


def min_cap_volume(body: ConvexBody, x, lattice: int | None = None):
    """Smallest cap volume over half-spaces whose boundary passes through x.

    Returns ``(volume, direction)``.  A deterministic direction lattice picks
    the start and Nelder-Mead refines in tangent coordinates.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if not body.membership(x[None, :])[0]:
        raise Rejected("point lies outside the body", float(body.value(x[None, :])[0]))
    n = body.n
    U = lattice_directions(n, lattice or max(default_lattice_size(n), 256 if n == 2 else 1024))
    vals = cap_volumes(body, U, U @ x)
    i = int(np.argmin(vals))
    u0 = U[i]
    if n == 1:
        return float(vals[i]), u0
    basis = tangent_basis(u0[None, :])[0]

    def obj(y):
        u = u0 + basis @ y
        u = u / np.linalg.norm(u)
        return float(cap_volumes(body, u[None, :], [u @ x])[0])

    step = 2.0 * covering_angle(U) if n > 2 else 2 * math.pi / len(U)
    simplex = np.vstack([np.zeros(n - 1), step * np.eye(n - 1)])
    res = optimize.minimize(obj, np.zeros(n - 1), method="Nelder-Mead",
                            options={"initial_simplex": simplex, "xatol": 1e-10,
                                     "fatol": 1e-16, "maxiter": 4000})
    best = min((res.fun, res.x), (vals[i], np.zeros(n - 1)), key=lambda p: p[0])
    u = u0 + basis @ best[1]
    return float(best[0]), u / np.linalg.norm(u)


class WetClassifier:
    """Decides ``min_cap_volume(x) < delta`` for batches of interior points.

    Stage one screens with a direction lattice: ``g = max_i u_i.x - t_i`` is
    a certificate of wetness when positive.  Because the offset map has
    gradient bounded by the distance to the section centroid, ``g <= -L *
    gap`` certifies a dry point.  Remaining points get a compass search on
    the cap volume through x.
    """

    def __init__(self, body: ConvexBody, delta: float, lattice: int | None = None):
        vol = body.volume
        if vol is not None and not 0.0 < delta < vol / 2.0:
            raise Rejected("delta must lie in (0, vol/2)", delta)
        self.body, self.delta = body, float(delta)
        n = body.n
        self.U = lattice_directions(n, lattice or default_lattice_size(n))
        self.t = cap_offsets(body, self.U, delta)
        self.gap = math.pi / len(self.U) if n == 2 else covering_angle(self.U)
        if n == 1:
            self.gap = 0.0
        self.R = body.max_radius()
        self.screened = 0
        self.searched = 0

    def shell_width(self) -> float:
        """Relative radial depth outside of which every point is wet-free."""
        c = self.body.center
        h = self.body.support(self.U) - self.U @ c
        ratio = (self.t - self.U @ c - 2.0 * self.R * self.gap) / h
        return float(min(1.0, max(0.0, 1.0 - ratio.min())))

    def classify(self, x: np.ndarray) -> np.ndarray:
        x = _rows(x, self.body.n)
        wet = np.zeros(len(x), dtype=bool)
        best = np.zeros(len(x), dtype=int)
        g = np.full(len(x), -np.inf)
        for s in range(0, len(x), 4096):
            blk = x[s:s + 4096] @ self.U.T - self.t
            j = np.argmax(blk, axis=1)
            best[s:s + 4096] = j
            g[s:s + 4096] = blk[np.arange(len(j)), j]
        wet[g > 0] = True
        L = np.linalg.norm(x - self.body.center, axis=1) + self.R
        open_ = (g <= 0) & (g > -L * self.gap)
        self.screened += len(x)
        idx = np.flatnonzero(open_)
        if idx.size and self.body.n > 1:
            self.searched += idx.size
            wet[idx] = self._search(x[idx], self.U[best[idx]])
        return wet

    def _search(self, x, u0):
        n = self.body.n
        basis = tangent_basis(u0)

        def f(ii, y):
            u = move_on_sphere(u0[ii], basis[ii], y)
            return cap_volumes(self.body, u, np.einsum("ij,ij->i", u, x[ii]))

        _, val = compass_minimize(f, len(x), n - 1, self.gap, min_step=1e-6,
                                  stop_below=self.delta)
        return val < self.delta


def wet_mask(body: ConvexBody, x, delta: float, lattice: int | None = None) -> np.ndarray:
    return WetClassifier(body, delta, lattice).classify(x)


def _radial_shell_sampler(body: ConvexBody, width: float):
    d = body.n
    inner = 1.0 - width
    shell = 1.0 - inner ** d
    area = sphere_area(d)

    def sampler(gen, m):
        q = uniform_sphere(gen, m, d)
        r = body.radius(q)
        t = (inner ** d + shell * gen.random(m)) ** (1.0 / d)
        pts = body.center + (t * r)[:, None] * q
        return pts, area * r ** d * shell / d

    return sampler


def exact_wet_volume(body: ConvexBody, delta: float) -> float | None:
    """Closed-form wet volume for balls and their affine images."""
    if isinstance(body, Ball):
        n, R = body.n, body.R
        h = _ball_cap_height(n, delta / R ** n)
        return body.volume * -math.expm1(n * math.log1p(-h))
    if isinstance(body, AffineImage) and isinstance(body.base, Ball):
        d = abs(body.det)
        return d * exact_wet_volume(body.base, delta / d)
    return None


def wet_volume(body: ConvexBody, delta: float, samples: int = 100_000, seed: int = 0,
               method: str = "auto", lattice: int | None = None,
               workers: int | None = None) -> McEstimate:
    """Volume of the points of K cut off by some cap of volume below delta.

    ``method="exact"`` (and ``"auto"`` on balls and ellipsoids) uses the
    concentric structure of the ball's floating body; ``"mc"`` samples a
    radial shell that provably contains the wet part.
    """
    vol = body.volume
    if vol is None:
        raise Rejected("wet_volume needs a body with known volume")
    if not 0.0 < delta < vol / 2.0:
        raise Rejected("delta must lie in (0, vol/2)", delta)
    if method in ("auto", "exact"):
        ex = exact_wet_volume(body, delta)
        if ex is not None:
            return McEstimate.exact(ex, seed)
        if method == "exact":
            raise Rejected(f"no exact wet volume for {body.tag}")
    if method not in ("auto", "mc"):
        raise Rejected(f"unknown method {method!r}")
    clf = WetClassifier(body, delta, lattice)
    width = clf.shell_width()
    return mc_integrate(lambda p: clf.classify(p).astype(float),
                        _radial_shell_sampler(body, width), samples, seed,
                        stream="wet", workers=workers)


# ----------------------------------------------------------------------------
# constants and the limit study

def c_n_constant(n: int, convention: str = "oracle") -> float:
    if n < 2:
        raise Rejected("c_n is defined for n >= 2", n)
    if convention == "printed":
        return (2 * math.pi) ** ((n - 1) / (n + 1)) / math.gamma((n + 1) / 2) ** (2 / (n + 1))
    if convention == "oracle":
        return 2.0 * (ball_volume(n - 1) / (n + 1)) ** (2.0 / (n + 1))
    raise Rejected(f"unknown convention {convention!r}")


def convention_ratio(n: int) -> float:
    """printed / oracle."""
    return ((n + 1) / 2.0) ** (2.0 / (n + 1))


@dataclass
class ConvergenceReport:
    delta_grid: tuple
    statistic: list
    fit_exponent: float
    fitted_limit: float
    fit_residual: float
    fit_slope: float = 0.0
    constant: float = 1.0
    label: str = ""
    reference: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        check_delta_grid(self.delta_grid)
        seeds = {s.seed for s in self.statistic}
        if len(seeds) > 1:
            raise Rejected("statistics carry different seeds")

    @property
    def relative_gap(self) -> float | None:
        if self.reference is None:
            return None
        return (self.fitted_limit - self.reference) / self.reference

    def rows(self, K: int | None = None):
        return [{"delta": d, "statistic": s.value, "std_error": s.std_error,
                 "samples": s.samples, "K": K, "seed": s.seed}
                for d, s in zip(self.delta_grid, self.statistic)]


def check_delta_grid(grid) -> tuple:
    grid = tuple(float(d) for d in grid)
    if not grid:
        raise Rejected("delta_grid is empty")
    if any(not d > 0 for d in grid):
        raise Rejected("delta_grid entries must be positive")
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise Rejected("delta_grid not decreasing")
    return grid


def fit_limit(deltas, values, errors=None, exponent: float = 0.5):
    """Least-squares fit ``value = a + b delta^s``; returns (a, b, rms residual)."""
    d = np.asarray(deltas, dtype=float)
    v = np.asarray(values, dtype=float)
    if d.size == 1:
        return float(v[0]), 0.0, 0.0
    X = np.column_stack([np.ones_like(d), d ** exponent])
    w = np.ones_like(v)
    if errors is not None:
        e = np.asarray(errors, dtype=float)
        if np.all(e > 0):
            w = 1.0 / e
    coef, *_ = np.linalg.lstsq(X * w[:, None], v * w, rcond=None)
    resid = v - X @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid ** 2)))


def asa_limit_study(body: ConvexBody, delta_grid, samples: int = 100_000, seed: int = 0,
                    convention: str = "oracle", method: str = "auto",
                    fit_exponent: float | None = None, lattice: int | None = None,
                    workers: int | None = None) -> ConvergenceReport:
    grid = check_delta_grid(delta_grid)
    if min(grid) < 1e-8:
        raise Rejected("smallest delta must be at least 1e-8", min(grid))
    n = body.n
    cn = c_n_constant(n, convention)
    power = 2.0 / (n + 1)
    stats = []
    for d in grid:
        w = wet_volume(body, d, samples, seed, method, lattice, workers)
        stats.append(w.scaled(cn / d ** power))
    s = power if fit_exponent is None else float(fit_exponent)
    a, b, res = fit_limit(grid, [x.value for x in stats], [x.std_error for x in stats], s)
    return ConvergenceReport(grid, stats, s, a, res, b, cn, f"c_n[{convention}]")
