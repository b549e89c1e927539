"""Peak functions, sublevel quantiles and the holomorphic floating body.

A point z of the domain is *wet* at level delta when some peak function h
from the family satisfies ``|h(z)| < eta_h(delta)``, where ``eta_h(delta)``
is the level at which ``vol{w in domain : |h(w)| < eta}`` equals delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .cr import (ComplexBall, DomainModel, Polydisk, _crows, adapted_unitary,
                 fefferman_total, levi_adapted, to_complex, to_real)
from .floating import ConvergenceReport, check_delta_grid, fit_limit
from .numerics import (CounterRNG, McEstimate, Rejected, ball_volume, lattice_directions,
                       mc_integrate, move_on_sphere, sphere_area, takagi, tangent_basis,
                       uniform_ball, uniform_sphere)


# ----------------------------------------------------------------------------
# closed-form cap formulas and constants

def C_n_constant(n: int) -> float:
    if n < 1:
        raise Rejected("C_n is defined for n >= 1", n)
    g = math.gamma
    inner = (2.0 ** (2 * n - 2) * math.pi ** (n - 0.5) * g(n / 2.0)
             / ((n + 1) * g((n + 1) / 2.0) * g(n)))
    return inner ** (1.0 / (n + 1))


def cap_area(A: float, B: complex, V: float) -> float:
    """Area of ``{z in C : A|z|^2 + Re(B z^2) < V}``."""
    if not abs(B) < A:
        raise Rejected("cap_area needs |B| < A", abs(B))
    if V <= 0:
        return 0.0
    return math.pi * V / math.sqrt(A * A - abs(B) ** 2)


@dataclass(frozen=True)
class NormalForm:
    T: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        T = np.atleast_2d(np.asarray(self.T, dtype=complex))
        phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        if T.shape != (phi.size, phi.size):
            raise Rejected("T must be square with one row per phi")
        det = abs(np.linalg.det(T)) if phi.size else 1.0
        if not det > 1e-14:
            raise Rejected("T is singular", float(det))
        if np.any(phi < -1e-12) or np.any(phi > 1.0 + 1e-9):
            raise Rejected("phi must lie in [0, 1]", float(phi.max()))
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "phi", np.clip(phi, 0.0, None))

    def form(self, z) -> np.ndarray:
        """``sum |T_j z|^2 + Re phi_j (T_j z)^2`` at the rows of z."""
        y = np.atleast_2d(z) @ self.T.T
        return np.sum(np.abs(y) ** 2 + (self.phi * y * y).real, axis=1)

    def cap_form(self, z) -> np.ndarray:
        """``sum sqrt(1 + phi_j^2) |T_j z|^2 + Re phi_j (T_j z)^2``."""
        y = np.atleast_2d(z) @ self.T.T
        return np.sum(np.sqrt(1.0 + self.phi ** 2) * np.abs(y) ** 2
                      + (self.phi * y * y).real, axis=1)


def hermitian_cap_volume(nf: NormalForm, V: float, n: int) -> float:
    """Volume of ``{z' in C^(n-1) : nf.cap_form(z') < V}``."""
    if nf.phi.size != n - 1:
        raise Rejected("normal form has the wrong dimension for n")
    if V <= 0:
        return 0.0
    det = abs(np.linalg.det(nf.T)) if n > 1 else 1.0
    return math.pi ** (n - 1) * V ** (n - 1) / (math.factorial(n - 1) * det ** 2)


def webster_normal_form(Lambda, Mu) -> NormalForm:
    """Reduce ``z^T Lambda conj(z) + Re z^T Mu z`` to Webster normal form.

    A Cholesky factor ``T0`` with ``T0^H T0 = conj(Lambda)`` turns the
    hermitian part into ``|y|^2``; the Takagi factorization of the
    transformed symmetric part ``V diag(phi) V^T`` then gives ``T = V^T T0``.
    """
    L = np.atleast_2d(np.asarray(Lambda, dtype=complex))
    Mu = np.atleast_2d(np.asarray(Mu, dtype=complex))
    if L.shape != Mu.shape or L.shape[0] != L.shape[1]:
        raise Rejected("Lambda and Mu must be square of equal size")
    L = 0.5 * (L + np.conj(L).T)
    try:
        low = np.linalg.cholesky(np.conj(L))
    except np.linalg.LinAlgError:
        raise Rejected("Lambda is not positive definite",
                       float(np.linalg.eigvalsh(L).min())) from None
    T0 = np.conj(low).T
    T0inv = np.linalg.inv(T0)
    S = T0inv.T @ Mu @ T0inv
    U, phi = takagi(0.5 * (S + S.T), tol=1e-9)
    return NormalForm(U.T @ T0, phi)


def local_quadric(domain: DomainModel, p, peak: bool = False):
    """Tangential quadric ``(Lambda, Mu)`` of the boundary at p.

    In adapted coordinates ``w = U (z - p)`` the domain is, to second order,
    ``Re w_n > w'^T Lambda conj(w') + Re w'^T Mu w'``.  Subtracting the Levi
    polynomial's holomorphic quadratic part (``peak=True``) leaves Mu = 0.
    """
    ld = levi_adapted(domain, p)
    n = domain.n
    gn = ld.normal_derivative
    Lam = ld.levi_matrix.T / (2.0 * gn)
    if peak:
        return Lam, np.zeros_like(Lam)
    jet = domain.jet(_crows(p, n))
    Qw = np.conj(ld.U) @ jet.holo_hess[0] @ np.conj(ld.U).T
    return Lam, -Qw[: n - 1, : n - 1] / (2.0 * gn)


# ----------------------------------------------------------------------------
# peak functions

@dataclass
class PeakFunction:
    """``h(z) = a.(z-p) + (z-p)^T b (z-p)``."""

    p: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: float | None = None

    def __call__(self, z) -> np.ndarray:
        d = _crows(z, self.p.size) - self.p
        return d @ self.a + np.einsum("mi,ij,mj->m", d, self.b, d)

    @property
    def dh_norm(self) -> float:
        return float(np.linalg.norm(self.a))


def _peak_coefficients(domain: DomainModel, P: np.ndarray, tol: float = 1e-9):
    jet = domain.jet(P)
    off = np.abs(jet.rho)
    if np.any(off > tol):
        raise Rejected(f"peak base point is off the boundary (|rho| = {off.max():.3e})",
                       float(off.max()))
    gn = np.linalg.norm(jet.grad, axis=1)
    if np.any(gn == 0):
        raise Rejected("holomorphic gradient vanishes at a base point", 0.0)
    return jet.grad / gn[:, None], 0.5 * jet.holo_hess / gn[:, None, None]


def _peak_values(P, A, Bq, Z):
    # pairwise evaluation: row i of Z against peak i
    d = Z - P
    return np.einsum("mi,mi->m", d, A) + np.einsum("mi,mij,mj->m", d, Bq, d)


def _domain_samples(domain: DomainModel, count: int, seed: int) -> np.ndarray:
    lo, hi = domain.bounding_box()
    gen = CounterRNG(seed, "validate").chunk(1)
    out, have = [], 0
    for _ in range(200):
        x = lo + gen.random((4 * count, lo.size)) * (hi - lo)
        z = to_complex(x)
        z = z[domain.membership(z)]
        out.append(z)
        have += len(z)
        if have >= count:
            break
    return np.concatenate(out)[:count]


def peak_convexity(domain: DomainModel, P, A, Bq, samples: int = 4096, seed: int = 0,
                   radius: float = 0.2):
    """Check ``Re h > 0`` on domain samples and return convexity constants.

    Returns ``(c_local, c_global)``: the smallest ``Re h / |z - p|^2`` over
    samples within ``radius`` of p, and over all samples.  A sample with
    ``Re h <= 0`` means the zero set of h meets the domain; it is reported
    as the witness of a rejection.
    """
    n = domain.n
    K = len(P)
    glob = _domain_samples(domain, samples, seed)
    gen = CounterRNG(seed, "validate").chunk(2)
    local = to_complex(uniform_ball(gen, samples, 2 * n)) * radius
    c_loc = np.full(K, np.inf)
    c_glob = np.full(K, np.inf)
    for k in range(K):
        for pts, is_local in ((glob, False), (P[k] + local, True)):
            if is_local:
                pts = pts[domain.membership(pts)]
            if len(pts) == 0:
                continue
            d = pts - P[k]
            re = (d @ A[k] + np.einsum("mi,ij,mj->m", d, Bq[k], d)).real
            if np.any(re <= 0):
                w = pts[np.argmin(re)]
                raise Rejected(f"peak zero set re-enters the domain near z = {np.round(w, 6).tolist()}",
                               float(re.min()))
            ratio = re / np.sum(np.abs(d) ** 2, axis=1)
            c_glob[k] = min(c_glob[k], ratio.min())
            if is_local:
                c_loc[k] = min(c_loc[k], ratio.min())
    c_loc = np.where(np.isfinite(c_loc), c_loc, c_glob)
    return c_loc, c_glob


def levi_peak(domain: DomainModel, p, validate: bool = True, samples: int = 4096,
              seed: int = 0) -> PeakFunction:
    """Levi-polynomial peak function at a boundary point, normalized so ``|dh(p)| = 1``."""
    if isinstance(domain, Polydisk):
        raise Rejected("the polydisk uses its own peak family (PolydiskFamily)")
    P = _crows(p, domain.n)
    A, Bq = _peak_coefficients(domain, P)
    c = None
    if validate:
        c = float(peak_convexity(domain, P, A, Bq, samples, seed)[0][0])
    return PeakFunction(P[0].copy(), A[0], Bq[0], c)


def boundary_lattice(domain: DomainModel, K: int) -> np.ndarray:
    """K deterministic boundary points, nested in K."""
    q = to_complex(lattice_directions(2 * domain.n, K))
    return domain.boundary_point(q)


class LeviFamily:
    """Levi-polynomial peaks at K lattice points of the boundary."""

    kind = "levi"

    def __init__(self, domain: DomainModel, K: int, validate: bool = True,
                 validation_samples: int = 2048, seed: int = 0, points=None):
        if isinstance(domain, Polydisk):
            raise Rejected("the polydisk uses PolydiskFamily")
        if not domain.bounded:
            raise Rejected("peak families need a bounded domain")
        self.domain = domain
        self.n = domain.n
        self.P = boundary_lattice(domain, K) if points is None else _crows(points, domain.n)
        self.K = len(self.P)
        self.A, self.Bq = _peak_coefficients(domain, self.P)
        if validate:
            self.c_local, self.c_global = peak_convexity(domain, self.P, self.A, self.Bq,
                                                         validation_samples, seed)
        else:
            self.c_local = self.c_global = np.full(self.K, 0.5)
        if np.any(self.c_global <= 0):
            raise Rejected("peak family is not uniformly convex", float(self.c_global.min()))
        self.U = np.array([adapted_unitary(a) for a in self.A])
        # quadratic part in adapted coordinates w = U (z - p)
        Uc = np.conj(self.U)
        self.Bw = np.einsum("kji,kjl,kml->kim", Uc, self.Bq, Uc)

    def peak(self, k: int) -> PeakFunction:
        return PeakFunction(self.P[k], self.A[k], self.Bq[k], float(self.c_local[k]))

    def subset(self, K: int) -> "LeviFamily":
        out = object.__new__(LeviFamily)
        out.__dict__.update(self.__dict__)
        for name in ("P", "A", "Bq", "c_local", "c_global", "U", "Bw"):
            setattr(out, name, getattr(self, name)[:K])
        out.K = K
        return out

    def proposal(self, idx, ref, eta_s):
        """Points covering ``{|h_k| < eta_s}`` for peaks idx; returns (Z, |h|, vol)."""
        n = self.n
        c = 0.9 * self.c_global[idx]
        bn = np.linalg.norm(self.Bw[idx], ord=2, axis=(1, 2))
        rn = 1.05 * eta_s * (1.0 + bn / c)
        rt = 1.05 * np.sqrt(eta_s / c)
        W = np.empty((len(idx), ref["disc"].size, n), complex)
        W[:, :, n - 1] = rn[:, None] * ref["disc"][None, :]
        if n > 1:
            W[:, :, : n - 1] = rt[:, None, None] * ref["ball"][None, :, :]
        hv = W[:, :, n - 1] + np.einsum("kmi,kij,kmj->km", W, self.Bw[idx], W)
        Z = self.P[idx][:, None, :] + np.einsum("kji,kmj->kmi", np.conj(self.U[idx]), W)
        vol = math.pi * rn ** 2 * ball_volume(2 * n - 2) * rt ** (2 * n - 2)
        return Z, np.abs(hv), vol

    def values(self, idx, Z) -> np.ndarray:
        return np.abs(_peak_values(self.P[idx], self.A[idx], self.Bq[idx], Z))


class PolydiskFamily:
    """One-variable peaks ``h(z) = 1 - exp(-i theta) z_j`` on the polydisk."""

    kind = "polydisk"

    def __init__(self, domain: Polydisk, K: int):
        if not isinstance(domain, Polydisk):
            raise Rejected("PolydiskFamily needs a polydisk")
        n = domain.n
        if K < n or K % n:
            raise Rejected("family size must be a positive multiple of n", K)
        self.domain, self.n = domain, n
        per = K // n
        theta = 2.0 * math.pi * np.arange(per) / per
        self.j = np.repeat(np.arange(n), per)
        self.theta = np.tile(theta, n)
        self.K = K
        self.P = np.zeros((K, n), complex)
        self.P[np.arange(K), self.j] = np.exp(1j * self.theta)
        self.c_local = self.c_global = np.zeros(K)

    def subset(self, K: int) -> "PolydiskFamily":
        return PolydiskFamily(self.domain, K)

    def proposal(self, idx, ref, eta_s):
        n = self.n
        N = ref["disc"].size
        Z = np.empty((len(idx), N, n), complex)
        Z[:] = ref["poly"][None, :, :] if n > 1 else 0.0
        jj = self.j[idx]
        # put the disc sample in coordinate j, the rest are uniform in the disc
        for col in range(n):
            sel = jj == col
            if not np.any(sel):
                continue
            others = [c for c in range(n) if c != col]
            Zs = np.empty((sel.sum(), N, n), complex)
            if others:
                Zs[:, :, others] = ref["poly"][None, :, : n - 1]
            Zs[:, :, col] = (np.exp(1j * self.theta[idx][sel])[:, None]
                             + eta_s[sel][:, None] * ref["disc"][None, :])
            Z[sel] = Zs
        zj = np.take_along_axis(Z, jj[:, None, None].repeat(N, axis=1), axis=2)[:, :, 0]
        hv = np.abs(1.0 - np.exp(-1j * self.theta[idx])[:, None] * zj)
        vol = math.pi * eta_s ** 2 * math.pi ** (n - 1)
        return Z, hv, vol

    def values(self, idx, Z) -> np.ndarray:
        zj = Z[np.arange(len(idx)), self.j[idx]]
        return np.abs(1.0 - np.exp(-1j * self.theta[idx]) * zj)


def peak_family(domain: DomainModel, K: int, **kw):
    if isinstance(domain, Polydisk):
        return PolydiskFamily(domain, K)
    return LeviFamily(domain, K, **kw)


# ----------------------------------------------------------------------------
# sublevel quantiles

@dataclass
class PeakFamily:
    """A peak family with its per-peak quantile table ``eta[k, g]``."""

    family: object
    delta_grid: tuple
    eta: np.ndarray
    samples: int
    seed: int
    shell_width: float
    extra: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.family.K

    def subset(self, K: int) -> "PeakFamily":
        return PeakFamily(self.family.subset(K), self.delta_grid, self.eta[:K],
                          self.samples, self.seed, self.shell_width, dict(self.extra))


def _reference_samples(n: int, N: int, seed: int) -> dict:
    gen = CounterRNG(seed, "quantile").chunk(0)
    r = np.sqrt(gen.random(N))
    disc = r * np.exp(2j * math.pi * gen.random(N))
    ball = to_complex(uniform_ball(gen, N, 2 * n - 2)) if n > 1 else np.zeros((N, 0), complex)
    rp = np.sqrt(gen.random((N, max(n - 1, 1))))
    poly = rp * np.exp(2j * math.pi * gen.random((N, max(n - 1, 1))))
    return {"disc": disc, "ball": ball, "poly": poly[:, : n - 1]}


def _radial_depth(domain: DomainModel, Z: np.ndarray) -> np.ndarray:
    d = Z - domain.center
    r = np.linalg.norm(d, axis=1)
    q = d / np.where(r > 0, r, 1.0)[:, None]
    q[r == 0] = np.eye(domain.n)[0]
    return 1.0 - r / domain.radius(q)


def sublevel_quantiles(domain: DomainModel, family, delta_grid, samples: int = 8192,
                       seed: int = 0, batch: int = 32) -> PeakFamily:
    """Per-peak levels eta_p(delta) with ``vol{|h_p| < eta_p(delta)} = delta``.

    Each peak gets a local proposal region that provably contains its
    sublevel set (from ``Re h >= c |z - p|^2``); ``samples`` reference points
    are shared by all peaks, so symmetric peaks get identical levels.  The
    proposal scale is adapted per delta until the quantile falls in its
    upper half.
    """
    grid = check_delta_grid(delta_grid)
    vol = domain.volume
    if vol is not None and not grid[0] < vol / 2.0:
        raise Rejected("delta beyond the sampled range (must be below vol/2)", grid[0])
    if samples < 1000:
        raise Rejected("sublevel quantiles need at least 1000 samples per peak", samples)
    n = domain.n
    ref = _reference_samples(n, int(samples), seed)
    N = ref["disc"].size
    K = family.K
    eta = np.empty((K, len(grid)))
    max_depth = 0.0
    for s in range(0, K, batch):
        idx = np.arange(s, min(K, s + batch))
        guess = np.full(len(idx), 0.5 * grid[0] ** (1.0 / (n + 1)))
        for g, delta in enumerate(grid):
            eta_s = guess.copy()
            done = np.zeros(len(idx), bool)
            out = np.empty(len(idx))
            for it in range(60):
                act = np.flatnonzero(~done)
                if act.size == 0:
                    break
                Z, hv, pv = family.proposal(idx[act], ref, eta_s[act])
                inside = domain.membership(Z.reshape(-1, n)).reshape(len(act), N)
                hv = np.where(inside, hv, np.inf)
                hv.sort(axis=1)
                target = delta / np.broadcast_to(pv, (len(act),)) * N
                valid = np.sum(hv < eta_s[act][:, None], axis=1)
                for i, a in enumerate(act):
                    t = target[i]
                    if t >= valid[i] - 1:
                        eta_s[a] *= 2.0
                        continue
                    if t < 1.0:
                        eta_s[a] *= 0.5
                        continue
                    j = int(math.floor(t))
                    e = hv[i, j - 1] + (t - j) * (hv[i, j] - hv[i, j - 1])
                    if e < 0.5 * eta_s[a] and it < 59:
                        eta_s[a] = 1.2 * e
                        continue
                    out[a] = e
                    done[a] = True
            if not np.all(done):
                raise Rejected("quantile search did not converge", float(delta))
            if g > 0:
                out = np.minimum(out, eta[idx, g - 1] * (1.0 - 1e-12))
            eta[idx, g] = out
            if g + 1 < len(grid):
                guess = out * 1.3 * (grid[g + 1] / delta) ** (1.0 / (n + 1))
        max_depth = max(max_depth, _batch_depth(domain, family, idx, ref, eta[idx, 0]))
    width = min(1.0, 1.5 * max_depth)
    return PeakFamily(family, grid, eta, int(samples), int(seed), width)


def _batch_depth(domain, family, idx, ref, eta0):
    """Largest radial depth of points in the sublevel sets at the largest delta."""
    n = domain.n
    Z, hv, _ = family.proposal(idx, ref, eta0)
    flat = Z.reshape(-1, n)
    inside = domain.membership(flat)
    acc = inside & (hv.reshape(-1) < np.repeat(eta0, Z.shape[1]))
    if not np.any(acc):
        return 0.0
    return float(_radial_depth(domain, flat[acc]).max())


# ----------------------------------------------------------------------------
# wet volume

class _Interpolator:
    """Inverse-distance weighting of eta over the k nearest lattice peaks."""

    def __init__(self, fam: PeakFamily, k: int = 8):
        self.fam = fam
        self.tree = cKDTree(to_real(fam.family.P))
        self.k = min(k, fam.K)

    def neighbours(self, Z):
        d, i = self.tree.query(to_real(Z), k=self.k)
        return np.atleast_2d(d.T).T if self.k > 1 else d[:, None], i if self.k > 1 else i[:, None]

    def eta(self, P):
        d, i = self.neighbours(P)
        w = 1.0 / np.maximum(d, 1e-12) ** 2
        w /= w.sum(axis=1, keepdims=True)
        return np.einsum("mk,mkg->mg", w, self.fam.eta[i])


def _levi_values(domain: DomainModel, P, Z):
    A, Bq = _peak_coefficients(domain, P, tol=1e-6)
    return np.abs(_peak_values(P, A, Bq, Z))


def _refine_levi(domain: DomainModel, Z, q0, iters: int = 4, step: float = 1e-4):
    """Minimize ``|h_{p(q)}(z)|^2`` over q on the sphere, p(q) the boundary point.

    A batched Newton iteration with finite-difference derivatives in tangent
    coordinates; the Hessian is shifted to be positive definite and steps
    are backtracked.
    """
    n = domain.n
    d = 2 * n - 1
    m = len(Z)
    Q0 = to_real(q0)
    basis = tangent_basis(Q0)

    def f_sub(rows, x):
        q = move_on_sphere(Q0[rows], basis[rows], x)
        P = domain.boundary_point(to_complex(q))
        return _levi_values(domain, P, Z[rows]) ** 2

    f = lambda x: f_sub(slice(None), x)

    x = np.zeros((m, d))
    fx = f(x)
    eye = np.eye(d)
    act = np.arange(m)
    for _ in range(iters):
        if act.size == 0:
            break
        xa, fa = x[act], fx[act]
        g = lambda y: f_sub(act, y)
        fp = np.stack([g(xa + step * eye[i]) for i in range(d)], axis=1)
        fm = np.stack([g(xa - step * eye[i]) for i in range(d)], axis=1)
        grad = (fp - fm) / (2 * step)
        # points whose predicted gain is negligible are done
        keep = 0.1 * np.linalg.norm(grad, axis=1) > 1e-8 * fa
        act, xa, fa, fp, fm, grad = act[keep], xa[keep], fa[keep], fp[keep], fm[keep], grad[keep]
        if act.size == 0:
            break
        g = lambda y: f_sub(act, y)
        k = act.size
        hess = np.empty((k, d, d))
        idx = np.arange(d)
        hess[:, idx, idx] = (fp - 2 * fa[:, None] + fm) / step ** 2
        for i in range(d):
            for j in range(i + 1, d):
                v = (g(xa + step * (eye[i] + eye[j])) - g(xa + step * (eye[i] - eye[j]))
                     - g(xa - step * (eye[i] - eye[j])) + g(xa - step * (eye[i] + eye[j])))
                hess[:, i, j] = hess[:, j, i] = v / (4 * step ** 2)
        lam = np.clip(-np.linalg.eigvalsh(hess)[:, 0], 0.0, None) + 1e-12 + 1e-3 * np.abs(fa)
        dx = -np.linalg.solve(hess + lam[:, None, None] * eye, grad[:, :, None])[:, :, 0]
        accepted = np.zeros(k, bool)
        for _ in range(6):
            trial = xa + dx
            ft = g(trial)
            ok = (ft < fa) & ~accepted
            xa[ok], fa[ok] = trial[ok], ft[ok]
            accepted |= ok
            dx *= 0.5
        x[act], fx[act] = xa, fa
        act = act[accepted]
    q = move_on_sphere(Q0, basis, x)
    return domain.boundary_point(to_complex(q)), np.sqrt(fx)


def _wet_ratios(fam: PeakFamily, Z: np.ndarray, refine: bool, interp: _Interpolator | None,
                band: float = 0.25) -> np.ndarray:
    """min over the family of ``|h(z)| / eta_h(delta)`` for each delta."""
    family = fam.family
    domain = family.domain
    m = len(Z)
    G = len(fam.delta_grid)
    if not refine:
        best = np.full((m, G), np.inf)
        for k in range(family.K):
            idx = np.full(m, k)
            v = family.values(idx, Z)
            best = np.minimum(best, v[:, None] / fam.eta[k][None, :])
        return best
    if isinstance(family, PolydiskFamily):
        eta = fam.eta.mean(axis=0)
        depth = np.min(1.0 - np.abs(Z), axis=1)
        return depth[:, None] / eta[None, :]
    # certificates from the nearest lattice peaks
    _, nb = interp.neighbours(Z)
    best = np.full((m, G), np.inf)
    for c in range(nb.shape[1]):
        k = nb[:, c]
        v = family.values(k, Z)
        best = np.minimum(best, v[:, None] / fam.eta[k])
    # the continuous family: radial start, then local refinement
    d = Z - domain.center
    q0 = d / np.linalg.norm(d, axis=1)[:, None]
    P0 = domain.boundary_point(q0)
    r0 = _levi_values(domain, P0, Z)[:, None] / interp.eta(P0)
    best = np.minimum(best, r0)
    near = np.any((best >= 1.0) & (best < 1.0 + band), axis=1)
    if np.any(near):
        Ps, hs = _refine_levi(domain, Z[near], q0[near])
        rs = hs[:, None] / interp.eta(Ps)
        best[near] = np.minimum(best[near], rs)
    return best


def _shell_sampler(domain: DomainModel, width: float):
    d = 2 * domain.n
    inner = 1.0 - width
    shell = 1.0 - inner ** d
    area = sphere_area(d)

    def sampler(gen, m):
        q = to_complex(uniform_sphere(gen, m, d))
        r = domain.radius(q)
        t = (inner ** d + shell * gen.random(m)) ** (1.0 / d)
        return domain.center + (t * r)[:, None] * q, area * r ** d * shell / d

    return sampler


def holo_wet_volumes(fam: PeakFamily, samples: int = 1_000_000, seed: int = 0,
                     refine: bool = True, workers: int | None = None) -> list:
    """Wet volume for every delta of the table, from one fresh sample stream."""
    domain = fam.family.domain
    interp = _Interpolator(fam) if refine and not isinstance(fam.family, PolydiskFamily) else None

    def func(Z):
        return (_wet_ratios(fam, Z, refine, interp) < 1.0).astype(float)

    return mc_integrate(func, _shell_sampler(domain, fam.shell_width), samples, seed,
                        stream="wet", workers=workers)


def holo_wet_volume(domain: DomainModel, fam: PeakFamily, delta: float,
                    samples: int = 1_000_000, seed: int = 0, refine: bool = True,
                    workers: int | None = None) -> McEstimate:
    if fam.family.domain is not domain:
        raise Rejected("family was built for a different domain")
    hits = [g for g, d in enumerate(fam.delta_grid) if math.isclose(d, delta, rel_tol=1e-12)]
    if not hits:
        raise Rejected("delta is not covered by the family tables", delta)
    return holo_wet_volumes(fam, samples, seed, refine, workers)[hits[0]]


def default_family_size(domain: DomainModel) -> int:
    if isinstance(domain, Polydisk):
        return 64 * domain.n
    return 64 if domain.n == 1 else 2048


def theorem1_study(domain: DomainModel, delta_grid, K: int | None = None,
                   samples: int = 1_000_000, seed: int = 0, quantile_samples: int = 8192,
                   fit_exponent: float | None = None, refine: bool = True,
                   reference: float | None = None, tables: PeakFamily | None = None,
                   workers: int | None = None) -> ConvergenceReport:
    """Statistic ``C_n vol(wet) / delta^(1/(n+1))`` on a delta grid, with a fitted limit."""
    grid = check_delta_grid(delta_grid)
    n = domain.n
    if tables is None:
        K = K or default_family_size(domain)
        tables = sublevel_quantiles(domain, peak_family(domain, K), grid,
                                    quantile_samples, seed)
    elif tuple(tables.delta_grid) != grid:
        raise Rejected("tables were built for a different delta grid")
    vols = holo_wet_volumes(tables, samples, seed, refine, workers)
    cn = C_n_constant(n)
    power = 1.0 / (n + 1)
    stats = [v.scaled(cn / d ** power) for v, d in zip(vols, grid)]
    s = power if fit_exponent is None else float(fit_exponent)
    a, b, res = fit_limit(grid, [x.value for x in stats], [x.std_error for x in stats], s)
    if reference is None and domain.strictly_pseudoconvex:
        if isinstance(domain, ComplexBall):
            R = domain.R
            reference = (2.0 ** ((n - 1) / (n + 1)) * R ** ((1 - n) / (n + 1))
                         * sphere_area(2 * n) * R ** (2 * n - 1))
        else:
            reference = fefferman_total(domain, 10 ** 6, seed).value
    extra = {"K": tables.K, "shell_width": tables.shell_width,
             "quantile_samples": tables.samples, "refine": refine,
             "ratio_last_first": stats[-1].value / stats[0].value if stats[0].value else None}
    return ConvergenceReport(grid, stats, s, a, res, b, cn, "C_n", reference, extra)


holo_limit_study = theorem1_study
