"""Model domains in C^n, the Monge-Ampere determinant and the invariant boundary measure.

Defining functions are positive inside.  Points are complex arrays of shape
(m, n); the real coordinates are ordered ``(x_1..x_n, y_1..y_n)`` whenever a
real view is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .convex import ConvexBody, body_from_descriptor, curvature_from_jet
from .numerics import (McEstimate, Rejected, ball_volume, mc_integrate, sphere_area,
                       uniform_sphere, CounterRNG)


def _crows(z, n: int) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    if z.ndim == 1:
        z = z[None, :]
    if z.shape[-1] != n:
        raise Rejected(f"expected points in C^{n}, got dimension {z.shape[-1]}")
    return z


def to_real(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag], axis=-1)


def to_complex(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


@dataclass
class ComplexJet2:
    """Second-order jet of a real defining function, batched over points."""

    rho: np.ndarray
    grad: np.ndarray        # d rho / d z_j
    mixed_hess: np.ndarray  # d^2 rho / d z_j d conj(z_k)
    holo_hess: np.ndarray   # d^2 rho / d z_j d z_k

    @property
    def n(self) -> int:
        return self.grad.shape[-1]

    def check(self, tol: float = 1e-12) -> None:
        for name, arr in (("rho", self.rho), ("grad", self.grad),
                          ("mixed_hess", self.mixed_hess), ("holo_hess", self.holo_hess)):
            if not np.all(np.isfinite(arr)):
                raise Rejected(f"jet entry {name} is not finite")
        herm = np.max(np.abs(self.mixed_hess - np.conj(np.swapaxes(self.mixed_hess, -1, -2))))
        sym = np.max(np.abs(self.holo_hess - np.swapaxes(self.holo_hess, -1, -2)))
        scale = max(1.0, float(np.max(np.abs(self.mixed_hess))), float(np.max(np.abs(self.holo_hess))))
        if herm > tol * scale:
            raise Rejected("mixed Hessian is not hermitian", float(herm))
        if sym > tol * scale:
            raise Rejected("holomorphic Hessian is not symmetric", float(sym))

    def scaled(self, lam: float) -> "ComplexJet2":
        return ComplexJet2(lam * self.rho, lam * self.grad, lam * self.mixed_hess,
                           lam * self.holo_hess)

    def __getitem__(self, i) -> "ComplexJet2":
        return ComplexJet2(self.rho[i], self.grad[i], self.mixed_hess[i], self.holo_hess[i])

    def __len__(self):
        return len(self.rho)


def jet_from_real(grad: np.ndarray, hess: np.ndarray, rho) -> ComplexJet2:
    """Complex jet from the real gradient and Hessian in (x, y) ordering."""
    grad = np.atleast_2d(grad)
    hess = hess if hess.ndim == 3 else hess[None]
    n = grad.shape[1] // 2
    gz = 0.5 * (grad[:, :n] - 1j * grad[:, n:])
    hxx, hxy = hess[:, :n, :n], hess[:, :n, n:]
    hyx, hyy = hess[:, n:, :n], hess[:, n:, n:]
    # d/dz_j d/dzbar_k = (dx_j - i dy_j)(dx_k + i dy_k)/4
    mixed = 0.25 * (hxx + hyy + 1j * (hxy - hyx))
    holo = 0.25 * (hxx - hyy - 1j * (hxy + hyx))
    return ComplexJet2(np.atleast_1d(np.asarray(rho, float)), gz, mixed, holo)


# ----------------------------------------------------------------------------
# domains

class DomainModel:
    tag = "domain"
    strictly_pseudoconvex = True
    bounded = True

    def __init__(self, n: int, center=None):
        if n < 1:
            raise Rejected("complex dimension must be at least 1")
        self.n = int(n)
        self.center = np.zeros(n, complex) if center is None else np.asarray(center, complex)

    def rho(self, z) -> np.ndarray:
        return self.jet(z).rho

    def jet(self, z) -> ComplexJet2:
        raise NotImplementedError

    def membership(self, z) -> np.ndarray:
        return self.rho(z) > 0.0

    def radius(self, q) -> np.ndarray:
        raise NotImplementedError

    @property
    def volume(self) -> float | None:
        return None

    def max_radius(self) -> float:
        raise NotImplementedError

    def bounding_box(self):
        r = self.max_radius()
        c = to_real(self.center[None, :])[0]
        return c - r, c + r

    def boundary_point(self, q) -> np.ndarray:
        q = _crows(q, self.n)
        q = q / np.linalg.norm(q, axis=1)[:, None]
        return self.center + self.radius(q)[:, None] * q

    def descriptor(self) -> dict:
        raise NotImplementedError


class ComplexEllipsoid(DomainModel):
    """``rho = 1 - sum a_j |z_j|^2``; the unit ball when all a_j = 1."""

    tag = "complex-ellipsoid"

    def __init__(self, a):
        a = np.asarray(a, dtype=float)
        super().__init__(a.size)
        if np.any(a <= 0):
            raise Rejected("complex ellipsoid coefficients must be positive")
        self.a = a

    def rho(self, z):
        z = _crows(z, self.n)
        return 1.0 - np.sum(self.a * np.abs(z) ** 2, axis=1)

    def jet(self, z):
        z = _crows(z, self.n)
        m = len(z)
        mixed = np.broadcast_to(-np.diag(self.a).astype(complex), (m, self.n, self.n)).copy()
        return ComplexJet2(self.rho(z), -self.a * np.conj(z), mixed,
                           np.zeros((m, self.n, self.n), complex))

    def radius(self, q):
        q = _crows(q, self.n)
        return 1.0 / np.sqrt(np.sum(self.a * np.abs(q) ** 2, axis=1))

    @property
    def volume(self):
        return ball_volume(2 * self.n) / float(np.prod(self.a))

    def max_radius(self):
        return float(1.0 / np.sqrt(self.a.min()))

    def descriptor(self):
        return {"kind": "complex-ellipsoid", "a": self.a.tolist()}


class ComplexBall(ComplexEllipsoid):
    tag = "ball"

    def __init__(self, n: int, radius: float = 1.0):
        if not radius > 0:
            raise Rejected("radius must be positive", radius)
        super().__init__(np.full(n, 1.0 / radius ** 2))
        self.R = float(radius)

    def rho(self, z):
        # scaled to R^2 - |z|^2 so that M = R^2
        return self.R ** 2 * super().rho(z)

    def jet(self, z):
        return super().jet(z).scaled(self.R ** 2)

    def descriptor(self):
        out = {"kind": "ball", "n": self.n}
        if self.R != 1.0:
            out["radius"] = self.R
        return out


class PerturbedBall(DomainModel):
    """``rho = 1 - |z|^2 - eps Re(z_1^2)``."""

    tag = "perturbed-ball"

    def __init__(self, n: int, eps: float):
        super().__init__(n)
        if not abs(eps) < 1.0:
            raise Rejected("perturbation must satisfy |eps| < 1", eps)
        self.eps = float(eps)

    def rho(self, z):
        z = _crows(z, self.n)
        return 1.0 - np.sum(np.abs(z) ** 2, axis=1) - self.eps * (z[:, 0] ** 2).real

    def jet(self, z):
        z = _crows(z, self.n)
        m, n = z.shape
        grad = -np.conj(z)
        grad[:, 0] -= self.eps * z[:, 0]
        mixed = np.broadcast_to(-np.eye(n, dtype=complex), (m, n, n)).copy()
        holo = np.zeros((m, n, n), complex)
        holo[:, 0, 0] = -self.eps
        return ComplexJet2(self.rho(z), grad, mixed, holo)

    def radius(self, q):
        q = _crows(q, self.n)
        return 1.0 / np.sqrt(1.0 + self.eps * (q[:, 0] ** 2).real)

    def max_radius(self):
        return 1.0 / math.sqrt(1.0 - abs(self.eps))

    def descriptor(self):
        return {"kind": "perturbed-ball", "n": self.n, "eps": self.eps}


class Tube(DomainModel):
    """``X + i R^n`` over a convex profile, ``rho = -F(Re z)`` (unbounded)."""

    tag = "tube"
    bounded = False

    def __init__(self, profile: ConvexBody):
        if not profile.smooth:
            raise Rejected("tube profile must be smooth")
        super().__init__(profile.n, profile.center.astype(complex))
        self.profile = profile

    def rho(self, z):
        return -self.profile.value(_crows(z, self.n).real)

    def jet(self, z):
        z = _crows(z, self.n)
        f, g, h = self.profile.jet(z.real)
        hc = -0.25 * h.astype(complex)
        return ComplexJet2(-f, -0.5 * g.astype(complex), hc, hc.copy())

    def radius(self, q):
        raise Rejected("the tube is unbounded; radial parametrization undefined")

    def max_radius(self):
        raise Rejected("the tube is unbounded")

    def descriptor(self):
        return {"kind": "tube", "profile": self.profile.descriptor()}


class Polydisk(DomainModel):
    """The unit polydisk; not strictly pseudoconvex and without a smooth jet."""

    tag = "polydisk"
    strictly_pseudoconvex = False

    def rho(self, z):
        z = _crows(z, self.n)
        return np.min(1.0 - np.abs(z) ** 2, axis=1)

    def jet(self, z):
        raise Rejected("density undefined for polydisk")

    def radius(self, q):
        return 1.0 / np.max(np.abs(_crows(q, self.n)), axis=1)

    @property
    def volume(self):
        return math.pi ** self.n

    def max_radius(self):
        return math.sqrt(self.n)

    def descriptor(self):
        return {"kind": "polydisk", "n": self.n}


class LinearImage(DomainModel):
    """``G(Omega)`` for an invertible complex-linear G; ``rho' = rho o G^{-1}``."""

    tag = "linear-image"

    def __init__(self, base: DomainModel, G):
        G = np.atleast_2d(np.asarray(G, dtype=complex))
        if G.shape != (base.n, base.n):
            raise Rejected(f"linear map must be {base.n}x{base.n}")
        det = np.linalg.det(G)
        if not np.isfinite(det) or abs(det) < 1e-14 * max(1.0, np.abs(G).max()) ** base.n:
            raise Rejected("linear map is singular", float(abs(det)))
        super().__init__(base.n, G @ base.center)
        self.base, self.G, self.det = base, G, complex(det)
        self.B = np.linalg.inv(G)
        self.strictly_pseudoconvex = base.strictly_pseudoconvex

    def _pull(self, w):
        return _crows(w, self.n) @ self.B.T

    def rho(self, w):
        return self.base.rho(self._pull(w))

    def membership(self, w):
        return self.base.membership(self._pull(w))

    def jet(self, w):
        j = self.base.jet(self._pull(w))
        B = self.B
        return ComplexJet2(j.rho, j.grad @ B,
                           np.einsum("kj,mkl,li->mji", B, j.mixed_hess, np.conj(B)),
                           np.einsum("kj,mkl,li->mji", B, j.holo_hess, B))

    def radius(self, q):
        v = _crows(q, self.n) @ self.B.T
        nv = np.linalg.norm(v, axis=1)
        return self.base.radius(v / nv[:, None]) / nv

    @property
    def volume(self):
        v = self.base.volume
        return None if v is None else abs(self.det) ** 2 * v

    def max_radius(self):
        return float(np.linalg.norm(self.G, 2)) * self.base.max_radius()

    def descriptor(self):
        return {"kind": "linear", "base": self.base.descriptor(),
                "G": [[[c.real, c.imag] for c in row] for row in self.G]}


class MultipliedDomain(DomainModel):
    """Same domain, defining function ``g rho`` with ``g = 1 + scale exp(Re z_1)``."""

    tag = "multiplied"

    def __init__(self, base: DomainModel, scale: float = 0.1):
        super().__init__(base.n, base.center)
        if not scale >= 0:
            raise Rejected("multiplier scale must be non-negative", scale)
        self.base, self.scale = base, float(scale)
        self.strictly_pseudoconvex = base.strictly_pseudoconvex

    def rho(self, z):
        z = _crows(z, self.n)
        return (1.0 + self.scale * np.exp(z[:, 0].real)) * self.base.rho(z)

    def membership(self, z):
        return self.base.membership(z)

    def jet(self, z):
        z = _crows(z, self.n)
        j = self.base.jet(z)
        m, n = z.shape
        e = self.scale * np.exp(z[:, 0].real)
        g = 1.0 + e
        dg = np.zeros((m, n), complex)
        dg[:, 0] = 0.5 * e
        ddg = np.zeros((m, n, n), complex)
        ddg[:, 0, 0] = 0.25 * e
        r = j.rho
        gr, rg = dg, j.grad
        mixed = (ddg * r[:, None, None] + gr[:, :, None] * np.conj(rg)[:, None, :]
                 + rg[:, :, None] * np.conj(gr)[:, None, :] + g[:, None, None] * j.mixed_hess)
        holo = (ddg * r[:, None, None] + gr[:, :, None] * rg[:, None, :]
                + rg[:, :, None] * gr[:, None, :] + g[:, None, None] * j.holo_hess)
        return ComplexJet2(g * r, gr * r[:, None] + g[:, None] * rg, mixed, holo)

    def radius(self, q):
        return self.base.radius(q)

    @property
    def volume(self):
        return self.base.volume

    def max_radius(self):
        return self.base.max_radius()

    def descriptor(self):
        return {"kind": "multiplied", "base": self.base.descriptor(), "scale": self.scale}


def _parse_complex_matrix(rows) -> np.ndarray:
    out = []
    for row in rows:
        out.append([complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c)
                    for c in row])
    return np.array(out, dtype=complex)


def domain_from_descriptor(desc: dict) -> DomainModel:
    kind = desc.get("kind")
    if kind in ("ball", "disk"):
        return ComplexBall(int(desc.get("n", 1 if kind == "disk" else 2)),
                           float(desc.get("radius", 1.0)))
    if kind == "complex-ellipsoid":
        return ComplexEllipsoid(desc.get("a") or desc["axes"])
    if kind == "perturbed-ball":
        return PerturbedBall(int(desc.get("n", 2)), float(desc["eps"]))
    if kind == "tube":
        return Tube(body_from_descriptor(desc["profile"]))
    if kind == "polydisk":
        return Polydisk(int(desc.get("n", 2)))
    if kind == "linear":
        return LinearImage(domain_from_descriptor(desc["base"]), _parse_complex_matrix(desc["G"]))
    if kind == "multiplied":
        return MultipliedDomain(domain_from_descriptor(desc["base"]), float(desc.get("scale", 0.1)))
    raise Rejected(f"unknown domain kind {kind!r}")


def fd_complex_jet(domain: DomainModel, z, step: float = 1e-5,
                   hess_step: float = 1e-4) -> ComplexJet2:
    """Complex jet from central finite differences of ``domain.rho``.

    Second differences use the larger ``hess_step`` to keep rounding error
    (of order eps / step^2) below the truncation error.
    """
    z = _crows(z, domain.n)[0]
    x0 = to_real(z)
    d = x0.size
    f = lambda x: float(domain.rho(to_complex(x)[None, :])[0])
    e = np.eye(d) * step
    grad = np.array([(f(x0 + e[i]) - f(x0 - e[i])) / (2 * step) for i in range(d)])
    hess = np.empty((d, d))
    e = np.eye(d) * hess_step
    for i in range(d):
        for j in range(i, d):
            v = (f(x0 + e[i] + e[j]) - f(x0 + e[i] - e[j])
                 - f(x0 - e[i] + e[j]) + f(x0 - e[i] - e[j])) / (4 * hess_step ** 2)
            hess[i, j] = hess[j, i] = v
    return jet_from_real(grad, hess, f(x0))


# ----------------------------------------------------------------------------
# Monge-Ampere and the density

def bordered_matrix(jet: ComplexJet2) -> np.ndarray:
    m, n = jet.grad.shape
    out = np.empty((m, n + 1, n + 1), complex)
    out[:, 0, 0] = jet.rho
    out[:, 0, 1:] = jet.grad
    out[:, 1:, 0] = np.conj(jet.grad)
    out[:, 1:, 1:] = np.swapaxes(jet.mixed_hess, -1, -2)
    return out


def monge_ampere(jet: ComplexJet2, n: int | None = None) -> np.ndarray:
    """``(-1)^n det [[rho, rho_z], [rho_zbar, rho_{z zbar}]]``, batched."""
    nn = jet.n if n is None else int(n)
    if jet.n != nn:
        raise Rejected("jet dimension does not match n")
    b = bordered_matrix(jet)
    if not np.all(np.isfinite(b)):
        raise Rejected("jet has non-finite entries")
    det = np.linalg.det(b)
    scale = np.maximum(np.abs(det), np.max(np.abs(b), axis=(1, 2)) ** (nn + 1))
    resid = np.abs(det.imag) / np.where(scale > 0, scale, 1.0)
    if np.any(resid > 1e-10):
        raise Rejected("Monge-Ampere determinant has an imaginary residue", float(resid.max()))
    return (-1) ** nn * det.real


def _check_boundary(jet: ComplexJet2, tol: float):
    off = np.abs(jet.rho)
    if np.any(off > tol):
        raise Rejected(f"point is not on the boundary (|rho| = {off.max():.3e})", float(off.max()))


def _density_from(M, gnorm, n):
    if np.any(M <= 0):
        raise Rejected("Monge-Ampere determinant is not positive", float(np.min(M)))
    return 2.0 ** (2 * n / (n + 1)) * M ** (1.0 / (n + 1)) / (2.0 * gnorm)


def fefferman_densities(domain: DomainModel, p, tol: float = 1e-9) -> np.ndarray:
    if not domain.strictly_pseudoconvex:
        raise Rejected("density undefined for polydisk")
    jet = domain.jet(_crows(p, domain.n))
    _check_boundary(jet, tol)
    M = monge_ampere(jet)
    return _density_from(M, np.linalg.norm(jet.grad, axis=1), domain.n)


def fefferman_density(domain: DomainModel, p, tol: float = 1e-9) -> float:
    """Density of the invariant boundary measure against euclidean surface measure at p."""
    return float(fefferman_densities(domain, p, tol)[0])


@dataclass
class LeviData:
    point: np.ndarray
    U: np.ndarray
    levi_matrix: np.ndarray
    normal_derivative: float


def adapted_unitary(g: np.ndarray) -> np.ndarray:
    """Unitary U whose last row is ``g/|g|``, so ``g U^H`` is a multiple of e_n."""
    n = g.size
    gn = np.linalg.norm(g)
    if gn == 0.0:
        raise Rejected("holomorphic gradient vanishes", 0.0)
    r = g / gn
    q, _ = np.linalg.qr(np.column_stack([np.conj(r), np.eye(n, dtype=complex)]))
    u = np.conj(q).T
    phase = r[np.argmax(np.abs(r))] / u[0, np.argmax(np.abs(r))]
    u = np.vstack([u[1:n], phase * u[0]])
    return u


def levi_adapted(domain: DomainModel, p, tol: float = 1e-9) -> LeviData:
    p = _crows(p, domain.n)
    jet = domain.jet(p)
    _check_boundary(jet, tol)
    g = jet.grad[0]
    U = adapted_unitary(g)
    hw = np.conj(U) @ jet.mixed_hess[0] @ U.T
    n = domain.n
    levi = -hw[: n - 1, : n - 1]
    levi = 0.5 * (levi + np.conj(levi).T)
    return LeviData(p[0].copy(), U, levi, float(np.linalg.norm(g)))


def fefferman_density_leviframe(domain: DomainModel, p, tol: float = 1e-9) -> float:
    """Density computed from the Levi matrix in adapted coordinates."""
    if not domain.strictly_pseudoconvex:
        raise Rejected("density undefined for polydisk")
    ld = levi_adapted(domain, p, tol)
    n = domain.n
    det = float(np.linalg.det(ld.levi_matrix).real) if n > 1 else 1.0
    alt = ld.normal_derivative ** 2 * det
    return float(_density_from(np.array([alt]), ld.normal_derivative, n)[0])


def boundary_points(domain: DomainModel, count: int, seed: int) -> np.ndarray:
    gen = CounterRNG(seed, "boundary").chunk(0)
    q = to_complex(uniform_sphere(gen, count, 2 * domain.n))
    return domain.boundary_point(q)


def _total_integrand(domain: DomainModel, q: np.ndarray) -> np.ndarray:
    n = domain.n
    r = domain.radius(q)
    p = domain.center + r[:, None] * q
    jet = domain.jet(p)
    M = monge_ampere(jet)
    if np.any(M <= 0):
        raise Rejected("Monge-Ampere determinant is not positive", float(np.min(M)))
    radial = np.abs(2.0 * np.sum(jet.grad * q, axis=1).real)
    return 2.0 ** (2 * n / (n + 1)) * M ** (1.0 / (n + 1)) * r ** (2 * n - 1) / radial


def fefferman_total(domain: DomainModel, samples: int = 1_000_000, seed: int = 0,
                    workers: int | None = None) -> McEstimate:
    """Total invariant mass of the boundary by radial sphere sampling."""
    if not domain.strictly_pseudoconvex:
        raise Rejected("density undefined for polydisk")
    if not domain.bounded:
        raise Rejected("total mass of an unbounded hypersurface is infinite")
    d = 2 * domain.n
    area = sphere_area(d)

    def sampler(gen, m):
        return to_complex(uniform_sphere(gen, m, d)), area

    return mc_integrate(lambda q: _total_integrand(domain, q), sampler, samples, seed,
                        stream="boundary", workers=workers)


class TransformCheck(NamedTuple):
    ratio: float
    expected: float
    std_error: float


def transformation_check(domain: DomainModel, G, samples: int = 1_000_000,
                         seed: int = 0, workers: int | None = None) -> TransformCheck:
    """Total mass of ``G(domain)`` over that of ``domain`` against ``|det G|^(2n/(n+1))``.

    Both totals use the same sample stream, so their errors are correlated
    and partly cancel in the ratio.
    """
    image = LinearImage(domain, G)
    n = domain.n
    a = fefferman_total(image, samples, seed, workers)
    b = fefferman_total(domain, samples, seed, workers)
    ratio = a.value / b.value
    se = ratio * math.hypot(a.std_error / a.value, b.std_error / b.value)
    return TransformCheck(ratio, abs(image.det) ** (2 * n / (n + 1)), se)


class TubeCheck(NamedTuple):
    density: float
    reference: float


def tube_density_check(profile: ConvexBody, x, y) -> TubeCheck:
    """Invariant density on the tube over ``profile`` against ``kappa^(1/(n+1))``."""
    tube = Tube(profile)
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    z = (x + 1j * y)[None, :]
    dens = fefferman_density(tube, z)
    _, g, h = profile.jet(x[None, :])
    kappa = float(curvature_from_jet(g, h)[0])
    return TubeCheck(dens, kappa ** (1.0 / (profile.n + 1)))
