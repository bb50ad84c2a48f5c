"""Curvature functions of principal curvatures and their matrix extensions.

A curvature function is a symmetric, 1-homogeneous, normalized function on a
permutation-invariant convex cone of eigenvalue tuples. Built-in kinds:

* ``mean``: arithmetic mean, on the first Garding cone (positive trace).
* ``extrinsic``: geometric mean ``(prod l_i)**(1/n)`` on the positive cone.
* ``sigma_quotient``: ``(C * sigma_k / sigma_l)**(1/(k-l))`` on the k-th
  Garding cone, with ``C`` chosen so the all-ones tuple maps to 1.
* ``custom``: an expression in ``l1..ln`` (see :mod:`yespheres.exprs`).

Matrix derivatives use the spectral-function calculus: the gradient is
``Q diag(dK) Q^T`` and the second derivative couples diagonal entries through
the eigenvalue Hessian and off-diagonal entries through divided differences of
the gradient.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import ConfigurationError, DomainError
from .exprs import CompiledExpression

DEGENERATE_GAP = 1e-9


def elementary_symmetric(lam: np.ndarray, kmax: int | None = None) -> np.ndarray:
    """Return ``[sigma_0, ..., sigma_kmax]`` of ``lam`` (last axis)."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    kmax = n if kmax is None else kmax
    sig = np.zeros(lam.shape[:-1] + (kmax + 1,))
    sig[..., 0] = 1.0
    for i in range(n):
        # Multiply the generating polynomial by (1 + lam_i x), top degree first.
        for k in range(min(i + 1, kmax), 0, -1):
            sig[..., k] = sig[..., k] + lam[..., i] * sig[..., k - 1]
    return sig


def _sigma_without(lam: np.ndarray, drop: tuple[int, ...], k: int) -> float:
    if k < 0:
        return 0.0
    keep = np.delete(lam, list(drop))
    if k > keep.size:
        return 0.0
    return float(elementary_symmetric(keep, k)[k])


@dataclass(frozen=True)
class CurvatureSpec:
    """A curvature function paired with its supporting cone.

    Parameters
    ----------
    kind : {'mean', 'extrinsic', 'sigma_quotient', 'custom'}
    n : int
        Number of principal curvatures.
    k, l : int, optional
        Orders of the sigma quotient, ``n >= k > l >= 0``.
    expression : str, optional
        Closed form in ``l1..ln`` for ``kind='custom'``.
    cone : str, optional
        ``'positive'`` (all components positive) or ``'garding:m'`` (the
        first ``m`` elementary symmetric polynomials positive). Each built-in
        kind has a default.
    """

    kind: str
    n: int
    k: int | None = None
    l: int | None = None
    expression: str | None = None
    cone: str | None = None
    _compiled: CompiledExpression | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("dimension n must be positive")
        if self.kind not in ("mean", "extrinsic", "sigma_quotient", "custom"):
            raise ConfigurationError(f"unknown curvature kind {self.kind!r}")
        if self.kind == "sigma_quotient":
            if self.k is None or self.l is None or not (self.n >= self.k > self.l >= 0):
                raise ConfigurationError("sigma_quotient needs n >= k > l >= 0")
        if self.kind == "custom":
            if not self.expression:
                raise ConfigurationError("custom curvature needs an expression")
            names = [f"l{i + 1}" for i in range(self.n)]
            object.__setattr__(self, "_compiled", CompiledExpression(self.expression, names))
        if self.cone is None:
            default = {
                "mean": "garding:1",
                "extrinsic": "positive",
                "sigma_quotient": f"garding:{self.k}",
                "custom": "positive",
            }[self.kind]
            object.__setattr__(self, "cone", default)
        order = self.cone_order
        if not 1 <= order <= self.n:
            raise ConfigurationError(f"invalid cone descriptor {self.cone!r}")

    # -- cone -------------------------------------------------------------
    @property
    def cone_order(self) -> int:
        """Number of elementary symmetric polynomials required positive."""
        if self.cone == "positive":
            return self.n
        if isinstance(self.cone, str) and self.cone.startswith("garding:"):
            try:
                return int(self.cone.split(":", 1)[1])
            except ValueError as exc:
                raise ConfigurationError(f"invalid cone descriptor {self.cone!r}") from exc
        raise ConfigurationError(f"invalid cone descriptor {self.cone!r}")

    def cone_margin(self, lam) -> float:
        """Signed distance-like margin; positive exactly on the open cone."""
        lam = self._check_shape(lam)
        if self.cone == "positive":
            return float(lam.min())
        m = self.cone_order
        sig = elementary_symmetric(lam, m)
        scale = max(1.0, float(np.abs(lam).max()))
        return float(min(sig[j] / scale**j for j in range(1, m + 1)))

    def in_cone(self, lam, closed: bool = False) -> bool:
        margin = self.cone_margin(lam)
        return margin >= 0.0 if closed else margin > 0.0

    def _check_shape(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.n,):
            raise DomainError(f"expected {self.n} eigenvalues, got shape {lam.shape}")
        return lam

    def _require_cone(self, lam: np.ndarray, closed: bool) -> None:
        if self.in_cone(lam, closed=closed):
            return
        where = "closed cone" if closed else "open cone"
        if self.cone == "positive":
            bad = [i for i, v in enumerate(lam) if (v < 0 if closed else v <= 0)]
            raise DomainError(
                f"eigenvalue component {bad[0] + 1} = {lam[bad[0]]!r} is outside the {where}"
            )
        sig = elementary_symmetric(lam, self.cone_order)
        bad = [j for j in range(1, self.cone_order + 1) if (sig[j] < 0 if closed else sig[j] <= 0)]
        raise DomainError(
            f"sigma_{bad[0]}({lam.tolist()}) = {sig[bad[0]]!r} violates the {where} "
            f"{self.cone}"
        )

    # -- evaluation ---------------------------------------------------------
    def _raw(self, lam: np.ndarray) -> float:
        n = self.n
        if self.kind == "mean":
            return float(lam.sum() / n)
        if self.kind == "extrinsic":
            prod = float(np.prod(lam))
            return prod ** (1.0 / n) if prod > 0 else 0.0
        if self.kind == "sigma_quotient":
            k, l = self.k, self.l
            sig = elementary_symmetric(lam, k)
            c = comb(n, l) / comb(n, k)
            q = c * sig[k] / sig[l] if sig[l] != 0 else 0.0
            return float(q ** (1.0 / (k - l))) if q > 0 else 0.0
        return float(self._compiled(lam))

    def eval(self, lam, closed: bool = True) -> float:
        """Evaluate ``K(lam)``; the tuple must lie in the (closed) cone."""
        lam = self._check_shape(lam)
        self._require_cone(lam, closed=closed)
        return self._raw(lam)

    def gradient(self, lam) -> np.ndarray:
        """Gradient of ``K`` at an interior tuple."""
        lam = self._check_shape(lam)
        self._require_cone(lam, closed=False)
        n = self.n
        if self.kind == "mean":
            return np.full(n, 1.0 / n)
        if self.kind == "extrinsic":
            return self._raw(lam) / (n * lam)
        if self.kind == "sigma_quotient":
            val = self._raw(lam)
            gk, gl = self._log_sigma_grads(lam)
            return val * (gk - gl) / (self.k - self.l)
        return np.array([self._compiled.partial(lam, (i,)) for i in range(n)], dtype=float)

    def hessian(self, lam) -> np.ndarray:
        """Hessian of ``K`` in eigenvalue coordinates at an interior tuple."""
        lam = self._check_shape(lam)
        self._require_cone(lam, closed=False)
        n = self.n
        if self.kind == "mean":
            return np.zeros((n, n))
        if self.kind == "extrinsic":
            val = self._raw(lam)
            inv = 1.0 / lam
            return val * (np.outer(inv, inv) / n**2 - np.diag(inv**2) / n)
        if self.kind == "sigma_quotient":
            val = self._raw(lam)
            d = self.k - self.l
            gk, gl = self._log_sigma_grads(lam)
            hk, hl = self._log_sigma_hess(lam, self.k), self._log_sigma_hess(lam, self.l)
            g = (gk - gl) / d
            return val * (np.outer(g, g) + (hk - hl) / d)
        out = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                out[i, j] = out[j, i] = self._compiled.partial(lam, (i, j))
        return out

    def _log_sigma_grads(self, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        out = []
        for order in (self.k, self.l):
            s = _sigma_without(lam, (), order)
            out.append(np.array([_sigma_without(lam, (i,), order - 1) for i in range(self.n)]) / s)
        return out[0], out[1]

    def _log_sigma_hess(self, lam: np.ndarray, order: int) -> np.ndarray:
        n = self.n
        s = _sigma_without(lam, (), order)
        d1 = np.array([_sigma_without(lam, (i,), order - 1) for i in range(n)])
        d2 = np.zeros((n, n))
        for i, j in itertools.combinations(range(n), 2):
            d2[i, j] = d2[j, i] = _sigma_without(lam, (i, j), order - 2)
        return d2 / s - np.outer(d1, d1) / s**2

    # -- matrix extension ---------------------------------------------------
    def matrix_eval(self, a) -> float:
        """``K`` of the eigenvalues of a symmetric matrix."""
        a = _sym(a, self.n)
        return self.eval(np.linalg.eigvalsh(a))

    def matrix_derivative(self, a) -> np.ndarray:
        """Frechet derivative of ``A -> K(eig(A))`` as a symmetric matrix."""
        a = _sym(a, self.n)
        lam, q = np.linalg.eigh(a)
        return (q * self.gradient(lam)) @ q.T

    def matrix_second_derivative(self, a, h1, h2=None) -> float:
        """Second Frechet derivative ``D^2 K(A)(h1, h2)`` (symmetric bilinear)."""
        a = _sym(a, self.n)
        h1 = _sym(h1, self.n)
        h2 = h1 if h2 is None else _sym(h2, self.n)
        lam, q = np.linalg.eigh(a)
        grad = self.gradient(lam)
        hess = self.hessian(lam)
        b1 = q.T @ h1 @ q
        b2 = q.T @ h2 @ q
        d1, d2 = np.diag(b1), np.diag(b2)
        total = float(d1 @ hess @ d2)
        coupling = np.empty((self.n, self.n))
        for i in range(self.n):
            for j in range(self.n):
                gap = lam[i] - lam[j]
                if abs(gap) < DEGENERATE_GAP:
                    coupling[i, j] = hess[i, i] - hess[i, j]
                else:
                    coupling[i, j] = (grad[i] - grad[j]) / gap
        off = b1 * b2
        np.fill_diagonal(off, 0.0)
        return total + float((coupling * off).sum())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "k": self.k,
            "l": self.l,
            "expression": self.expression,
            "cone": self.cone,
        }


def _sym(a, n: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (n, n):
        raise DomainError(f"expected a {n}x{n} matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


def mean_curvature(n: int) -> CurvatureSpec:
    return CurvatureSpec("mean", n)


def extrinsic_curvature(n: int) -> CurvatureSpec:
    return CurvatureSpec("extrinsic", n)


def sigma_quotient(n: int, k: int, l: int) -> CurvatureSpec:
    return CurvatureSpec("sigma_quotient", n, k=k, l=l)


def power_mean(n: int, p: float = 4.0) -> CurvatureSpec:
    """Convex power mean; a smoothed maximum that violates concavity for p > 1."""
    terms = "+".join(f"l{i + 1}**{p}" for i in range(n))
    return CurvatureSpec("custom", n, expression=f"(({terms})/{n})**(1/{p})")


def from_dict(data: dict) -> CurvatureSpec:
    allowed = {"kind", "n", "k", "l", "expression", "cone"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigurationError(f"unknown curvature keys: {sorted(unknown)}")
    return CurvatureSpec(**data)


# -- module-level operations ---------------------------------------------------

def eval(spec: CurvatureSpec, lam) -> float:  # noqa: A001 - mirrors the operation name
    return spec.eval(lam)


def gradient(spec: CurvatureSpec, lam) -> np.ndarray:
    return spec.gradient(lam)


def matrix_eval(spec: CurvatureSpec, a) -> float:
    return spec.matrix_eval(a)


def matrix_derivative(spec: CurvatureSpec, a) -> np.ndarray:
    return spec.matrix_derivative(a)


# -- axiom checks --------------------------------------------------------------

@dataclass
class AxiomResult:
    name: str
    passed: bool
    detail: str = ""
    witness: object = None

    def to_dict(self) -> dict:
        w = self.witness
        if isinstance(w, np.ndarray):
            w = w.tolist()
        elif isinstance(w, tuple):
            w = [x.tolist() if isinstance(x, np.ndarray) else x for x in w]
        return {"name": self.name, "passed": self.passed, "detail": self.detail, "witness": w}


@dataclass
class AxiomReport:
    spec: CurvatureSpec
    samples: int
    seed: int
    results: dict[str, AxiomResult]

    def passed(self, *names: str) -> bool:
        names = names or tuple(self.results)
        return all(self.results[name].passed for name in names)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "samples": self.samples,
            "seed": self.seed,
            "results": {k: v.to_dict() for k, v in self.results.items()},
        }


def sample_interior(spec: CurvatureSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    """Random interior tuples, a mix of near-umbilic and spread-out points."""
    out = []
    n = spec.n
    while len(out) < count:
        scale = rng.choice([0.1, 0.5, 2.0])
        if spec.cone == "positive":
            lam = np.exp(rng.normal(0.0, scale, n) + rng.normal(0.0, 1.0))
        else:
            lam = np.exp(rng.normal(0.0, 1.0)) * (1.0 + scale * rng.normal(size=n))
        if spec.in_cone(lam) and spec.cone_margin(lam) > 1e-6:
            out.append(lam)
    return np.array(out)


def boundary_point(spec: CurvatureSpec, inner: np.ndarray, outer: np.ndarray) -> np.ndarray:
    """Point of the cone boundary on the segment from ``inner`` to ``outer``."""
    if spec.cone == "positive":
        lam = inner.copy()
        lam[np.argmin(lam)] = 0.0
        return lam
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if spec.in_cone(inner + mid * (outer - inner)):
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    return inner + lo * (outer - inner)


def verify_axioms(
    spec: CurvatureSpec,
    samples: int = 200,
    seed: int = 0,
    *,
    growth_factor: float = 10.0,
    growth_scale: float = 1e6,
    concavity_tol: float = 1e-7,
    homogeneity_tol: float = 1e-12,
) -> AxiomReport:
    """Check the curvature-function axioms on random samples.

    Failures are recorded in the report with a concrete witness, never raised.
    """
    if samples < 1:
        raise ConfigurationError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    pts = sample_interior(spec, rng, samples)
    n = spec.n
    res: dict[str, AxiomResult] = {}

    # (i) symmetry
    fail = None
    perms = list(itertools.permutations(range(n))) if n <= 4 else None
    for lam in pts:
        base = spec.eval(lam)
        trial = perms if perms is not None else [rng.permutation(n) for _ in range(100)]
        for perm in trial:
            v = spec.eval(lam[list(perm)])
            if abs(v - base) > 1e-12 * (1 + abs(base)):
                fail = (lam, np.array(perm))
                break
        if fail is not None:
            break
    res["i"] = AxiomResult("symmetry", fail is None, "permutation invariance", fail)

    # (ii) homogeneity
    fail = None
    for lam in pts:
        s = rng.uniform(1e-3, 10.0)
        a, b = spec.eval(s * lam), s * spec.eval(lam)
        if abs(a - b) > homogeneity_tol * max(1.0, s) * (1 + abs(spec.eval(lam))):
            fail = (lam, s)
            break
    res["ii"] = AxiomResult("homogeneity", fail is None, "K(s l) = s K(l)", fail)

    # (iii) normalization
    one = spec.eval(np.ones(n))
    res["iii"] = AxiomResult(
        "normalization", abs(one - 1.0) <= 1e-14, f"K(1,...,1) = {one!r}",
        None if abs(one - 1.0) <= 1e-14 else np.ones(n),
    )

    # (iv) positivity inside, vanishing on the boundary
    fail = None
    for lam in pts:
        if not spec.eval(lam) > 0:
            fail = lam
            break
    if fail is None:
        for lam in pts[: max(1, min(len(pts), 50))]:
            outer = lam - (n + 1.0 + rng.uniform()) * np.abs(lam).max() * np.eye(n)[rng.integers(n)]
            bd = boundary_point(spec, lam, outer)
            val = spec._raw(bd)
            if abs(val) > 1e-4 * max(1.0, np.abs(bd).max()):
                fail = bd
                break
    res["iv"] = AxiomResult("positivity", fail is None, "K > 0 inside, K = 0 on the boundary", fail)

    # (v) strict ellipticity
    fail = None
    for lam in pts:
        if not np.all(spec.gradient(lam) > 0):
            fail = lam
            break
    res["v"] = AxiomResult("ellipticity", fail is None, "all partial derivatives positive", fail)

    # (vi) concavity along random segments (second divided differences)
    fail = None
    for idx in range(len(pts)):
        a = pts[idx]
        b = pts[rng.integers(len(pts))]
        if np.allclose(a, b):
            b = a * rng.uniform(0.5, 2.0, n)
            if not spec.in_cone(b):
                continue
        for s in np.linspace(0.1, 0.9, 5):
            h = 0.1
            p0 = a + (s - h) * (b - a)
            p1 = a + s * (b - a)
            p2 = a + (s + h) * (b - a)
            dd = spec.eval(p0) - 2 * spec.eval(p1) + spec.eval(p2)
            if dd > concavity_tol * (1 + abs(spec.eval(p1))):
                fail = (a, b)
                break
        if fail is not None:
            break
    res["vi"] = AxiomResult("concavity", fail is None, "second differences along segments <= 0", fail)

    # (vii) and (vii)' bounded growth surrogates
    for key, dirs in (("vii", (0,)), ("vii_prime", (0, 1) if n > 1 else (0,))):
        fail = None
        for lam in pts:
            t = growth_scale * float(np.linalg.norm(lam))
            shifted = lam.copy()
            for d in dirs:
                shifted[d] += t
            if not spec.eval(shifted) > growth_factor * spec.eval(lam):
                fail = lam
                break
        res[key] = AxiomResult(
            "unbounded growth" + (" (two directions)" if key == "vii_prime" else ""),
            fail is None,
            f"K(l + T e) > {growth_factor} K(l) at T = {growth_scale:g}|l|",
            fail,
        )
    return AxiomReport(spec, samples, seed, res)
