"""Convex bodies in R^n with implicit jets, support functions and curvature.

All bodies are star-shaped about ``center`` and expose batched evaluation:
points are arrays of shape (m, n).  The implicit function ``F`` is negative
inside, zero on the boundary and positive outside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import (McEstimate, Rejected, ball_volume, lattice_directions,
                       mc_integrate, sphere_area, uniform_sphere)


def _rows(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != n:
        raise Rejected(f"expected points of dimension {n}, got {x.shape[-1]}")
    return x


class ConvexBody:
    tag = "body"
    smooth = True

    def __init__(self, n: int, center=None):
        if n < 1:
            raise Rejected("dimension must be at least 1")
        self.n = int(n)
        self.center = np.zeros(n) if center is None else np.asarray(center, float).copy()
        self.center.setflags(write=False)

    # subclasses fill these in
    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def jet(self, x):
        raise NotImplementedError

    def support(self, u) -> np.ndarray:
        raise NotImplementedError

    def radius(self, q) -> np.ndarray:
        """Distance from the center to the boundary along unit directions q."""
        raise NotImplementedError

    @property
    def volume(self) -> float | None:
        return None

    def membership(self, x) -> np.ndarray:
        return self.value(x) <= 0.0

    def bounding_box(self):
        e = np.eye(self.n)
        return -self.support(-e), self.support(e)

    def max_radius(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(np.maximum(hi - self.center, self.center - lo)))

    def boundary_point(self, q) -> np.ndarray:
        q = _rows(q, self.n)
        q = q / np.linalg.norm(q, axis=1)[:, None]
        return self.center + self.radius(q)[:, None] * q

    def descriptor(self) -> dict:
        raise NotImplementedError


class Ball(ConvexBody):
    tag = "ball"

    def __init__(self, n: int, radius: float = 1.0, center=None):
        super().__init__(n, center)
        if not radius > 0:
            raise Rejected("ball radius must be positive", radius)
        self.R = float(radius)

    def value(self, x):
        d = _rows(x, self.n) - self.center
        return np.einsum("ij,ij->i", d, d) - self.R ** 2

    def jet(self, x):
        d = _rows(x, self.n) - self.center
        f = np.einsum("ij,ij->i", d, d) - self.R ** 2
        hess = np.broadcast_to(2.0 * np.eye(self.n), (len(d), self.n, self.n))
        return f, 2.0 * d, hess

    def support(self, u):
        u = _rows(u, self.n)
        return self.R * np.linalg.norm(u, axis=1) + u @ self.center

    def radius(self, q):
        return np.full(len(_rows(q, self.n)), self.R)

    @property
    def volume(self):
        return ball_volume(self.n) * self.R ** self.n

    def max_radius(self):
        return self.R

    def descriptor(self):
        out = {"kind": "ball", "n": self.n, "radius": self.R}
        if np.any(self.center):
            out["center"] = self.center.tolist()
        return out


class Superellipsoid(ConvexBody):
    """``sum |x_i / s_i|^p <= 1`` with p >= 2 (C^2 boundary)."""

    tag = "superellipsoid"

    def __init__(self, p: float, scales):
        scales = np.asarray(scales, dtype=float)
        super().__init__(scales.size)
        if not p >= 2.0:
            raise Rejected("superellipsoid exponent must be at least 2", p)
        if np.any(scales <= 0):
            raise Rejected("superellipsoid scales must be positive")
        self.p = float(p)
        self.scales = scales

    def value(self, x):
        y = np.abs(_rows(x, self.n)) / self.scales
        return np.sum(y ** self.p, axis=1) - 1.0

    def jet(self, x):
        x = _rows(x, self.n)
        p, s = self.p, self.scales
        y = np.abs(x) / s
        f = np.sum(y ** p, axis=1) - 1.0
        grad = p * np.sign(x) * y ** (p - 1.0) / s
        diag = p * (p - 1.0) * y ** (p - 2.0) / s ** 2
        hess = np.zeros((len(x), self.n, self.n))
        idx = np.arange(self.n)
        hess[:, idx, idx] = diag
        return f, grad, hess

    def support(self, u):
        u = _rows(u, self.n)
        q = self.p / (self.p - 1.0)
        return np.sum(np.abs(u * self.scales) ** q, axis=1) ** (1.0 / q)

    def radius(self, q):
        q = _rows(q, self.n)
        return np.sum(np.abs(q / self.scales) ** self.p, axis=1) ** (-1.0 / self.p)

    @property
    def volume(self):
        n, p = self.n, self.p
        return float(np.prod(2.0 * self.scales * math.gamma(1.0 + 1.0 / p))
                     / math.gamma(1.0 + n / p))

    def descriptor(self):
        return {"kind": "superellipsoid", "p": self.p, "scales": self.scales.tolist()}


class Cube(ConvexBody):
    """Axis-parallel cube ``[-s/2, s/2]^n``."""

    tag = "cube"
    smooth = False

    def __init__(self, n: int, side: float = 1.0):
        super().__init__(n)
        if not side > 0:
            raise Rejected("cube side must be positive", side)
        self.side = float(side)

    def value(self, x):
        return np.max(np.abs(_rows(x, self.n)), axis=1) - 0.5 * self.side

    def jet(self, x):
        raise Rejected("the cube has no smooth implicit jet")

    def support(self, u):
        return 0.5 * self.side * np.sum(np.abs(_rows(u, self.n)), axis=1)

    def radius(self, q):
        return 0.5 * self.side / np.max(np.abs(_rows(q, self.n)), axis=1)

    @property
    def volume(self):
        return self.side ** self.n

    def max_radius(self):
        return 0.5 * self.side * math.sqrt(self.n)

    def descriptor(self):
        return {"kind": "cube", "n": self.n, "side": self.side}


class AffineImage(ConvexBody):
    """The body ``A K + b``."""

    tag = "affine-image"

    def __init__(self, base: ConvexBody, A, b=None, tag: str | None = None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        n = base.n
        if A.shape != (n, n):
            raise Rejected(f"affine map must be {n}x{n}")
        det = float(np.linalg.det(A))
        if not np.isfinite(det) or abs(det) < 1e-14 * max(1.0, np.abs(A).max()) ** n:
            raise Rejected("affine map is singular", abs(det))
        b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
        super().__init__(n, A @ base.center + b)
        self.base, self.A, self.b = base, A, b
        self.Ainv = np.linalg.inv(A)
        self.det = det
        self.smooth = base.smooth
        if tag:
            self.tag = tag

    def _pull(self, x):
        return (_rows(x, self.n) - self.b) @ self.Ainv.T

    def value(self, x):
        return self.base.value(self._pull(x))

    def membership(self, x):
        return self.base.membership(self._pull(x))

    def jet(self, x):
        f, g, h = self.base.jet(self._pull(x))
        ai = self.Ainv
        return f, g @ ai, np.einsum("ki,mkl,lj->mij", ai, h, ai)

    def support(self, u):
        u = _rows(u, self.n)
        return self.base.support(u @ self.A) + u @ self.b

    def radius(self, q):
        v = _rows(q, self.n) @ self.Ainv.T
        nv = np.linalg.norm(v, axis=1)
        return self.base.radius(v / nv[:, None]) / nv

    @property
    def volume(self):
        v = self.base.volume
        return None if v is None else abs(self.det) * v

    def descriptor(self):
        if self.tag == "ellipsoid":
            return {"kind": "ellipsoid", "axes": np.diag(self.A).tolist()}
        return {"kind": "affine", "base": self.base.descriptor(),
                "A": self.A.tolist(), "b": self.b.tolist()}


def ellipsoid(axes) -> AffineImage:
    axes = np.asarray(axes, dtype=float)
    if np.any(axes <= 0):
        raise Rejected("ellipsoid axes must be positive")
    return AffineImage(Ball(axes.size), np.diag(axes), tag="ellipsoid")


def apply_affine(body: ConvexBody, A, b=None) -> ConvexBody:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(body.n) if b is None else np.asarray(b, dtype=float)
    if A.shape == (body.n, body.n) and np.array_equal(A, np.eye(body.n)) and not np.any(b):
        return body
    if isinstance(body, AffineImage):
        return AffineImage(body.base, A @ body.A, A @ body.b + b)
    return AffineImage(body, A, b)


def body_from_descriptor(desc: dict) -> ConvexBody:
    kind = desc.get("kind")
    if kind in ("ball", "disk", "circle"):
        n = int(desc.get("n", 2 if kind != "ball" else 3))
        return Ball(n, float(desc.get("radius", 1.0)), desc.get("center"))
    if kind in ("ellipsoid", "ellipse"):
        return ellipsoid(desc["axes"])
    if kind in ("superellipsoid", "superellipse"):
        scales = desc.get("scales") or [1.0] * int(desc.get("n", 2))
        return Superellipsoid(float(desc["p"]), scales)
    if kind in ("cube", "square"):
        return Cube(int(desc.get("n", 2)), float(desc.get("side", 1.0)))
    if kind == "affine":
        return apply_affine(body_from_descriptor(desc["base"]), desc["A"], desc.get("b"))
    raise Rejected(f"unknown body kind {kind!r}")


# ----------------------------------------------------------------------------
# curvature

@dataclass(frozen=True)
class CurvatureJet:
    point: np.ndarray
    normal: np.ndarray
    kappa: float


def curvature_from_jet(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """Gaussian curvature from the bordered Hessian, batched."""
    m, n = grad.shape
    border = np.zeros((m, n + 1, n + 1))
    border[:, :n, :n] = hess
    border[:, :n, n] = grad
    border[:, n, :n] = grad
    gn = np.linalg.norm(grad, axis=1)
    return -np.linalg.det(border) / gn ** (n + 1)


def gauss_curvature(body: ConvexBody, x, tol: float = 1e-9) -> CurvatureJet:
    x = _rows(x, body.n)
    if len(x) != 1:
        raise Rejected("gauss_curvature takes a single point")
    f, g, h = body.jet(x)
    if abs(f[0]) > tol:
        raise Rejected(f"point is not on the boundary (|F| = {abs(f[0]):.3e})", abs(f[0]))
    gn = float(np.linalg.norm(g[0]))
    if gn == 0.0:
        raise Rejected("implicit gradient vanishes", 0.0)
    kappa = float(curvature_from_jet(g, h)[0])
    return CurvatureJet(x[0].copy(), g[0] / gn, max(kappa, 0.0) if kappa > -1e-12 else kappa)


def fd_curvature(body: ConvexBody, x, step: float = 1e-5) -> float:
    """Curvature as the determinant of the finite-difference normal map.

    Only the gradient of the jet is used; the unit normal field is
    differentiated along an orthonormal tangent frame.
    """
    x = _rows(x, body.n)[0]
    n = body.n

    def normal(y):
        g = body.jet(y[None, :])[1][0]
        return g / np.linalg.norm(g)

    nu = normal(x)
    frame = np.linalg.svd(np.eye(n) - np.outer(nu, nu))[0][:, : n - 1]
    shape = np.empty((n - 1, n - 1))
    for j in range(n - 1):
        e = frame[:, j]
        dn = (normal(x + step * e) - normal(x - step * e)) / (2 * step)
        shape[:, j] = frame.T @ dn
    return float(np.linalg.det(shape))


def fd_jet(F, x, step: float = 1e-5):
    """Central finite-difference gradient and Hessian of a scalar function.

    ``F`` may also be a batched function returning an array of length one.
    """
    x = np.asarray(x, dtype=float)
    G = F

    def F(y):
        return float(np.ravel(G(y))[0])

    n = x.size
    e = np.eye(n) * step
    grad = np.array([(F(x + e[i]) - F(x - e[i])) / (2 * step) for i in range(n)])
    hess = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            v = (F(x + e[i] + e[j]) - F(x + e[i] - e[j])
                 - F(x - e[i] + e[j]) + F(x - e[i] - e[j])) / (4 * step * step)
            hess[i, j] = hess[j, i] = v
    return grad, hess


# ----------------------------------------------------------------------------
# affine surface area

def _asa_integrand(body: ConvexBody, q: np.ndarray) -> np.ndarray:
    n = body.n
    r = body.radius(q)
    x = body.center + r[:, None] * q
    _, g, h = body.jet(x)
    kappa = np.clip(curvature_from_jet(g, h), 0.0, None)
    gn = np.linalg.norm(g, axis=1)
    jac = r ** (n - 1) * gn / np.abs(np.einsum("ij,ij->i", g, q))
    return kappa ** (1.0 / (n + 1)) * jac


def affine_surface_area(body: ConvexBody, samples: int = 200_000, seed: int = 0,
                        method: str = "mc", workers: int | None = None) -> McEstimate:
    """Integral of ``kappa^(1/(n+1))`` over the boundary.

    Boundary points are rays from the center; the area element is
    ``r^(n-1) |grad F| / |grad F . q|`` times the sphere element.  With
    ``method="lattice"`` a deterministic point set is used (equally spaced
    angles in the plane, which is spectrally accurate) and the reported
    standard error is zero.
    """
    if not body.smooth:
        raise Rejected("affine surface area needs a smooth body (curvature undefined on a cube)")
    n = body.n
    area = sphere_area(n)
    if method == "lattice":
        q = lattice_directions(n, int(samples))
        val = area * float(np.mean(_asa_integrand(body, q)))
        return McEstimate(val, 0.0, int(samples), int(seed), "lattice")

    def sampler(gen, m):
        return uniform_sphere(gen, m, n), area

    return mc_integrate(lambda q: _asa_integrand(body, q), sampler, samples, seed,
                        stream="boundary", workers=workers)
