"""Spherical-harmonic analysis on the unit sphere ``S^n`` in ``R^(n+1)``.

Harmonics of degree ``k`` are restrictions of harmonic homogeneous
polynomials. They are built degree by degree as the kernel of the Euclidean
Laplacian acting on monomial coefficients (for ``n >= 2``) or from the real
and imaginary parts of ``(y1 + i y2)^k`` (for ``n = 1``), then orthonormalized
under grid quadrature. Tangential derivatives come from the homogeneous
extension: for a degree-``k`` harmonic ``h`` with Euclidean gradient ``Dh``
and Hessian ``D2h`` at a unit vector ``y``,

    grad_S h = Dh - k h y,      Hess_S h = P D2h P - k h P,    P = I - y y^T,

so the sphere Laplacian is ``tr(D2h) - y.D2h.y - n k h = -k (n + k - 1) h``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import ceil, gamma, pi

import numpy as np
from scipy.linalg import null_space
from scipy.special import roots_gegenbauer, roots_legendre

from ._config import cache_dir
from .errors import CapabilityError, ConfigurationError, ConsistencyError


def sphere_volume(n: int) -> float:
    """Volume of the unit ``n``-sphere."""
    return 2.0 * pi ** ((n + 1) / 2) / gamma((n + 1) / 2)


def moment2(n: int, i: int, j: int) -> float:
    """Integral of ``x_i x_j`` over ``S^n`` (indices start at 1)."""
    return sphere_volume(n) / (n + 1) * float(i == j)


def moment4(n: int, i: int, j: int, k: int, l: int) -> float:
    """Integral of ``x_i x_j x_k x_l`` over ``S^n`` (indices start at 1)."""
    pairs = float(i == j and k == l) + float(i == k and j == l) + float(i == l and j == k)
    return sphere_volume(n) / ((n + 1) * (n + 3)) * pairs


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphereGrid:
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    exactness: int

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


def _circle(m: int) -> tuple[np.ndarray, np.ndarray]:
    th = 2 * pi * np.arange(m) / m
    return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(m, 2 * pi / m)


def _s2(exactness: int) -> tuple[np.ndarray, np.ndarray]:
    m = ceil((exactness + 1) / 2)
    z, wz = roots_legendre(m)
    ring, wr = _circle(exactness + 1)
    r = np.sqrt(1 - z**2)
    nodes = np.concatenate([np.column_stack([r[i] * ring, np.full(len(ring), z[i])]) for i in range(m)])
    weights = np.concatenate([wz[i] * wr for i in range(m)])
    return nodes, weights


def build_grid(n: int, exactness: int) -> SphereGrid:
    """Product quadrature on ``S^n`` exact for polynomials of degree ``<= exactness``."""
    if exactness < 0:
        raise ConfigurationError("exactness must be non-negative")
    if n == 1:
        nodes, weights = _circle(exactness + 1)
    elif n == 2:
        nodes, weights = _s2(exactness)
    elif n == 3:
        m = ceil((exactness + 1) / 2)
        t, wt = roots_gegenbauer(m, 1.0)
        s2n, s2w = _s2(exactness)
        r = np.sqrt(1 - t**2)
        nodes = np.concatenate([np.column_stack([r[i] * s2n, np.full(len(s2n), t[i])]) for i in range(m)])
        weights = np.concatenate([wt[i] * s2w for i in range(m)])
    else:
        raise CapabilityError(f"sphere grids are implemented for n in (1, 2, 3), got {n}")
    return SphereGrid(n=n, nodes=nodes, weights=weights, exactness=exactness)


# ---------------------------------------------------------------------------
# harmonic bases
# ---------------------------------------------------------------------------

def harmonic_dimension(n: int, k: int) -> int:
    """Dimension of the degree-``k`` harmonics on ``S^n``."""
    if k == 0:
        return 1
    if n == 1:
        return 2
    from math import comb

    return comb(n + k, n) - comb(n + k - 2, n)


def eigenvalue(n: int, k: int) -> float:
    return -float(k * (n + k - 1))


def _exponents(d: int, k: int) -> np.ndarray:
    out = []
    for combo in combinations_with_replacement(range(d), k):
        e = np.zeros(d, dtype=int)
        for c in combo:
            e[c] += 1
        out.append(e)
    return np.array(out, dtype=int).reshape(-1, d)


def _laplacian_on_monomials(d: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    src = _exponents(d, k)
    if k < 2:
        return src, np.zeros((0, len(src)))
    dst = _exponents(d, k - 2)
    index = {tuple(e): r for r, e in enumerate(dst)}
    mat = np.zeros((len(dst), len(src)))
    for col, e in enumerate(src):
        for i in range(d):
            if e[i] >= 2:
                tgt = e.copy()
                tgt[i] -= 2
                mat[index[tuple(tgt)], col] += e[i] * (e[i] - 1)
    return src, mat


def _monomial_jets(pts: np.ndarray, exps: np.ndarray):
    """Values, gradients and Hessians of monomials at points."""
    npts, d = pts.shape
    kmax = int(exps.max()) if exps.size else 0
    pw = np.ones((npts, d, kmax + 1))
    for p in range(1, kmax + 1):
        pw[:, :, p] = pw[:, :, p - 1] * pts
    idx = np.arange(d)

    def power(e):
        # e: (m, d) exponents, possibly negative (-> zero contribution)
        safe = np.clip(e, 0, None)
        vals = pw[:, idx[None, :], safe]                   # (npts, m, d)
        vals = np.where(e[None] < 0, 0.0, vals)
        return np.prod(vals, axis=2)

    m = len(exps)
    val = power(exps)
    grad = np.zeros((npts, m, d))
    hess = np.zeros((npts, m, d, d))
    eye = np.eye(d, dtype=int)
    for i in range(d):
        ei = exps - eye[i]
        grad[:, :, i] = exps[:, i] * power(ei)
        for j in range(i, d):
            eij = ei - eye[j]
            coef = exps[:, i] * (exps[:, j] - (1 if i == j else 0))
            hess[:, :, i, j] = hess[:, :, j, i] = coef * power(eij)
    return val, grad, hess


def _circle_jets(pts: np.ndarray, k: int):
    """Re/Im of (y1 + i y2)^k with Euclidean gradients and Hessians."""
    z = pts[:, 0] + 1j * pts[:, 1]
    npts = len(z)
    if k == 0:
        return np.ones((npts, 1)), np.zeros((npts, 1, 2)), np.zeros((npts, 1, 2, 2))
    zk = z**k
    zk1 = k * z ** (k - 1)
    zk2 = k * (k - 1) * z ** (k - 2) if k >= 2 else np.zeros_like(z)
    # For analytic F = z^k: dF/dy1 = F', dF/dy2 = i F', d2/dy1^2 = F'', d2/dy1dy2 = iF'', d2/dy2^2 = -F''
    comp = []
    for part in (np.real, np.imag):
        val = part(zk)
        g = np.stack([part(zk1), part(1j * zk1)], axis=1)
        h = np.stack([np.stack([part(zk2), part(1j * zk2)], axis=1),
                      np.stack([part(1j * zk2), part(-zk2)], axis=1)], axis=1)
        comp.append((val, g, h))
    val = np.stack([c[0] for c in comp], axis=1)
    grad = np.stack([c[1] for c in comp], axis=1)
    hess = np.stack([c[2] for c in comp], axis=1)
    return val, grad, hess


@dataclass
class HarmonicBasis:
    """Orthonormal real harmonics up to degree ``L`` sampled on a grid.

    Attributes
    ----------
    degrees : (F,) int
        Degree of each basis function.
    values : (N, F)
        Values at grid nodes.
    grads : (N, F, d)
        Tangential gradients (ambient components).
    hessians : (N, F, d, d)
        Tangential Hessians as ambient operators annihilating the normal.
    """

    grid: SphereGrid
    L: int
    degrees: np.ndarray
    values: np.ndarray
    grads: np.ndarray
    hessians: np.ndarray
    exponents: list = field(default_factory=list, repr=False)
    coefficients: list = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def size(self) -> int:
        return len(self.degrees)

    @property
    def eigenvalues(self) -> np.ndarray:
        n = self.n
        return -self.degrees * (n + self.degrees - 1.0)

    def indices(self, k: int) -> np.ndarray:
        return np.nonzero(self.degrees == k)[0]

    def mask(self, exclude=(), include=None) -> np.ndarray:
        m = np.ones(self.size, dtype=bool) if include is None else np.isin(self.degrees, include)
        if exclude:
            m &= ~np.isin(self.degrees, exclude)
        return m

    # -- transforms -----------------------------------------------------------
    def analyze(self, nodal: np.ndarray) -> np.ndarray:
        """Quadrature coefficients of nodal values (last axes are kept)."""
        w = self.grid.weights
        return np.tensordot(self.values * w[:, None], nodal, axes=(0, 0))

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return np.tensordot(self.values, coeffs, axes=(1, 0))

    def evaluate(self, pts: np.ndarray):
        """Values, tangential gradients and tangential Hessians at arbitrary unit points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return _evaluate(self.n, self.L, pts, self.exponents, self.coefficients)

    def laplacian_matrix(self) -> np.ndarray:
        """Galerkin matrix of the sphere Laplacian from analytic Hessians."""
        lap = np.trace(self.hessians, axis1=2, axis2=3)          # (N, F)
        return self.values.T @ (self.grid.weights[:, None] * lap)

    def gram(self) -> np.ndarray:
        return self.values.T @ (self.grid.weights[:, None] * self.values)


def _tangential(pts, k, val, grad, hess):
    d = pts.shape[1]
    P = np.eye(d)[None] - pts[:, :, None] * pts[:, None, :]
    gS = grad - k * val[:, :, None] * pts[:, None, :]
    hS = np.einsum("nab,nfbc,ncd->nfad", P, hess, P) - k * val[:, :, None, None] * P[:, None]
    return gS, hS


def _raw_degree(n: int, k: int, pts: np.ndarray, exps):
    if n == 1:
        return _circle_jets(pts, k)
    return _monomial_jets(pts, exps)


def _evaluate(n, L, pts, exponents, coefficients):
    vals, grads, hesss = [], [], []
    for k in range(L + 1):
        v, g, h = _raw_degree(n, k, pts, exponents[k])
        C = coefficients[k]
        v = v @ C
        g = np.einsum("nmi,mf->nfi", g, C)
        h = np.einsum("nmij,mf->nfij", h, C)
        gS, hS = _tangential(pts, k, v, g, h)
        vals.append(v)
        grads.append(gS)
        hesss.append(hS)
    return np.concatenate(vals, 1), np.concatenate(grads, 1), np.concatenate(hesss, 1)


def _cache_key(n: int, L: int, exactness: int) -> str:
    return f"harmonics_n{n}_L{L}_D{exactness}"


def build_basis(grid: SphereGrid, L: int, use_cache: bool = True) -> HarmonicBasis:
    """Orthonormal harmonics of degree ``<= L`` on ``grid``."""
    if grid.exactness < 2 * L + 2:
        raise ConfigurationError(
            f"grid exactness {grid.exactness} is below 2L+2 = {2 * L + 2} for L = {L}"
        )
    n, d = grid.n, grid.n + 1
    cdir = cache_dir() if use_cache else None
    key = _cache_key(n, L, grid.exactness)
    if cdir is not None and (cdir / f"{key}.npz").exists():
        return _load(cdir / f"{key}.npz", grid, L)
    exponents, coefficients = [], []
    w = grid.weights
    for k in range(L + 1):
        if n == 1:
            exps = np.zeros((0, d), dtype=int)
            v, _, _ = _circle_jets(grid.nodes, k)
            base = np.eye(v.shape[1])
        else:
            exps, lap = _laplacian_on_monomials(d, k)
            base = np.eye(len(exps)) if k < 2 else null_space(lap)
            v, _, _ = _monomial_jets(grid.nodes, exps)
            v = v @ base
        C = base
        # Two Cholesky passes for a Gram matrix equal to the identity to round-off.
        for _ in range(2):
            G = v.T @ (w[:, None] * v)
            Lc = np.linalg.cholesky(G)
            T = np.linalg.inv(Lc).T
            C = C @ T
            v = v @ T
        exponents.append(exps)
        coefficients.append(C)
    vals, grads, hess = _evaluate(n, L, grid.nodes, exponents, coefficients)
    degrees = np.concatenate([np.full(coefficients[k].shape[1], k) for k in range(L + 1)])
    basis = HarmonicBasis(grid=grid, L=L, degrees=degrees, values=vals, grads=grads, hessians=hess,
                          exponents=exponents, coefficients=coefficients)
    if cdir is not None:
        _save(cdir / f"{key}.npz", basis)
    return basis


def _save(path, basis: HarmonicBasis) -> None:
    arrays = {
        "nodes": basis.grid.nodes, "weights": basis.grid.weights, "degrees": basis.degrees,
        "values": basis.values, "grads": basis.grads, "hessians": basis.hessians,
    }
    for k, (e, c) in enumerate(zip(basis.exponents, basis.coefficients)):
        arrays[f"exp{k}"] = e
        arrays[f"coef{k}"] = c
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, **arrays)
    tmp.replace(path)


def _load(path, grid: SphereGrid, L: int) -> HarmonicBasis:
    with np.load(path) as data:
        if not np.array_equal(data["nodes"], grid.nodes):
            raise ConfigurationError(f"cached basis {path} does not match the grid")
        exps = [data[f"exp{k}"] for k in range(L + 1)]
        coefs = [data[f"coef{k}"] for k in range(L + 1)]
        return HarmonicBasis(grid=grid, L=L, degrees=data["degrees"], values=data["values"],
                             grads=data["grads"], hessians=data["hessians"],
                             exponents=exps, coefficients=coefs)


def default_degree(n: int) -> int:
    return {1: 32, 2: 12, 3: 6}.get(n, 6)


def standard_basis(n: int, L: int | None = None) -> HarmonicBasis:
    """Basis of degree ``L`` (default per dimension) on a grid of exactness ``2L + 4``."""
    L = default_degree(n) if L is None else L
    return build_basis(build_grid(n, 2 * L + 4), L)


def basis_digest(basis: HarmonicBasis) -> str:
    h = hashlib.sha256()
    for arr in (basis.grid.nodes, basis.grid.weights, basis.values):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass
class SphereField:
    """A function on the sphere held as harmonic coefficients.

    ``aliased`` records that the field was built from nodal samples carrying
    content beyond the basis degree.
    """

    basis: HarmonicBasis
    coeffs: np.ndarray
    aliased: bool = False
    alias_residual: float = 0.0
    nodal: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_values(cls, basis: HarmonicBasis, nodal: np.ndarray, tol: float = 1e-9) -> "SphereField":
        nodal = np.asarray(nodal, dtype=float)
        c = basis.analyze(nodal)
        back = basis.synthesize(c)
        scale = max(1.0, float(np.abs(nodal).max()))
        res = float(np.abs(back - nodal).max()) / scale
        return cls(basis, c, aliased=res > tol, alias_residual=res, nodal=nodal.copy())

    @classmethod
    def zeros(cls, basis: HarmonicBasis) -> "SphereField":
        return cls(basis, np.zeros(basis.size))

    @property
    def values(self) -> np.ndarray:
        """Nodal values; exact samples when the field was built from them."""
        if self.nodal is not None:
            return self.nodal
        return self.basis.synthesize(self.coeffs)

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def jets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Values, tangential gradients and tangential Hessians at the grid nodes."""
        b = self.basis
        return (b.values @ self.coeffs, np.einsum("nfi,f->ni", b.grads, self.coeffs),
                np.einsum("nfij,f->nij", b.hessians, self.coeffs))

    def component(self, k: int) -> "SphereField":
        c = np.where(self.basis.degrees == k, self.coeffs, 0.0)
        return SphereField(self.basis, c, self.aliased, self.alias_residual)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def parity_parts(self) -> tuple["SphereField", "SphereField"]:
        even = self.basis.degrees % 2 == 0
        return (SphereField(self.basis, np.where(even, self.coeffs, 0.0)),
                SphereField(self.basis, np.where(even, 0.0, self.coeffs)))

    def __add__(self, other: "SphereField") -> "SphereField":
        return SphereField(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other: "SphereField") -> "SphereField":
        return SphereField(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> "SphereField":
        return SphereField(self.basis, c * self.coeffs)

    __rmul__ = __mul__


def project(fld: SphereField, basis: HarmonicBasis, k: int) -> SphereField:
    """Orthogonal projection onto degree-``k`` harmonics."""
    if fld.basis is not basis:
        fld = SphereField.from_values(basis, fld.values)
    return fld.component(k)


def helmholtz_solve(rhs: SphereField, basis: HarmonicBasis, tol: float = 1e-8) -> SphereField:
    """Solve ``(1/n)(n + Laplacian) phi = rhs`` on the complement of degree 1.

    A degree-1 component of the right-hand side larger than ``tol`` relative
    to its norm (plus an absolute round-off allowance of ``1e-12``) raises.
    """
    n = basis.n
    if rhs.basis is not basis:
        rhs = SphereField.from_values(basis, rhs.values)
    deg1 = basis.degrees == 1
    p1 = float(np.linalg.norm(rhs.coeffs[deg1]))
    total = float(np.linalg.norm(rhs.coeffs))
    if p1 > tol * total + 1e-12:
        raise ConsistencyError(f"right-hand side has a degree-1 component of norm {p1:.3e}")
    mult = np.zeros(basis.size)
    k = basis.degrees[~deg1]
    mult[~deg1] = n / (n - k * (n + k - 1.0))
    return SphereField(basis, mult * rhs.coeffs)


def helmholtz_multiplier(n: int, k: int) -> float:
    return n / (n - k * (n + k - 1.0))
