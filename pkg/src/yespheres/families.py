"""Analytic ambient metrics on a single chart.

Every family is conformally flat, ``g = exp(2u) * delta`` on a chart of
``R^(n+1)``, with

    u(y) = -log(1 + kappa |y|^2 / 4) + sum_k a_k cos(w_k . y + b_k)

or with ``u`` given by a closed-form expression in ``y1..y(n+1)``. The first
term alone is the space form of sectional curvature ``kappa`` (flat for 0,
round of radius ``1/sqrt(kappa)`` for positive, hyperbolic for negative). The
trigonometric modes give smooth non-homogeneous perturbations. For such
metrics the Christoffel map is

    Gamma(a, b) = a (du . b) + b (du . a) - (a . b) du,

so every derivative of the connection reduces to derivatives of ``u``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import pi

import numpy as np

from .errors import CapabilityError, ConfigurationError, DomainError
from .exprs import CompiledExpression

TOPOLOGIES = ("chart", "flat_torus", "round_sphere", "hyperbolic", "conformal_perturbation")


@dataclass(frozen=True)
class MetricFamily:
    """Conformally flat metric family with a prescribing function.

    Parameters
    ----------
    dim : int
        Ambient dimension ``n + 1``.
    kappa : float
        Curvature of the space-form part.
    amplitudes, wavevectors, phases
        Trigonometric perturbation modes of the conformal factor.
    u_expr : str, optional
        Closed-form conformal exponent; replaces kappa and the modes.
    f_expr : str
        Prescribing function in ``y1..y(n+1)``.
    topology : str
        One of :data:`TOPOLOGIES`; drives the injectivity budget.
    periods : tuple of float, optional
        Periods for ``flat_torus``.
    injectivity : float, optional
        Explicit injectivity budget (geodesic length).
    """

    dim: int
    kappa: float = 0.0
    amplitudes: tuple = ()
    wavevectors: tuple = ()
    phases: tuple = ()
    u_expr: str | None = None
    f_expr: str = "0"
    topology: str = "chart"
    periods: tuple | None = None
    injectivity: float | None = None
    name: str = ""
    _u: CompiledExpression | None = field(default=None, repr=False, compare=False)
    _f: CompiledExpression | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigurationError("ambient dimension must be at least 2")
        if self.topology not in TOPOLOGIES:
            raise ConfigurationError(f"unknown topology tag {self.topology!r}")
        m = len(self.amplitudes)
        if len(self.wavevectors) != m or len(self.phases) != m:
            raise ConfigurationError("amplitudes, wavevectors and phases must have equal length")
        for w in self.wavevectors:
            if len(w) != self.dim:
                raise ConfigurationError("each wavevector must have dim components")
        names = self.variables
        if self.u_expr is not None:
            object.__setattr__(self, "_u", CompiledExpression(self.u_expr, names))
        object.__setattr__(self, "_f", CompiledExpression(self.f_expr, names))

    # -- basic attributes ---------------------------------------------------
    @property
    def variables(self) -> list[str]:
        return [f"y{i + 1}" for i in range(self.dim)]

    @property
    def n(self) -> int:
        """Hypersurface dimension."""
        return self.dim - 1

    @property
    def kernel_compatible(self) -> bool:
        """True when the compiled integration kernels support this family."""
        return self.u_expr is None

    def mode_arrays(self) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
        amps = np.asarray(self.amplitudes, dtype=float).reshape(-1)
        waves = np.asarray(self.wavevectors, dtype=float).reshape(len(amps), self.dim)
        phases = np.asarray(self.phases, dtype=float).reshape(-1)
        return float(self.kappa), amps, waves, phases

    def injectivity_budget(self) -> float:
        if self.injectivity is not None:
            return float(self.injectivity)
        if self.topology == "flat_torus" and self.periods:
            return 0.5 * float(min(self.periods))
        if self.topology == "round_sphere" and self.kappa > 0:
            return pi / np.sqrt(self.kappa)
        return np.inf

    def in_domain(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if self.kappa < 0:
            return 1.0 + self.kappa * np.sum(pts**2, axis=-1) / 4.0 > 1e-12
        return np.ones(pts.shape[:-1], dtype=bool)

    def check_domain(self, pts) -> None:
        ok = self.in_domain(pts)
        if not np.all(ok):
            bad = np.asarray(pts)[~ok].reshape(-1, self.dim)[0]
            raise DomainError(f"point {bad.tolist()} lies outside the chart domain")

    # -- conformal exponent -------------------------------------------------
    def u_derivatives(self, pts, order: int = 4) -> list[np.ndarray]:
        """``[u, du, d2u, ...]`` with derivative axes trailing, up to ``order``."""
        pts = np.asarray(pts, dtype=float)
        if order > 4:
            raise CapabilityError("metric derivatives are available to order 4 in u")
        if self._u is not None:
            return [self._u.derivative_tensor(pts, r) for r in range(order + 1)]
        d = self.dim
        kappa, amps, waves, phases = self.mode_arrays()
        eye = np.eye(d)
        q = 1.0 + kappa * np.sum(pts**2, axis=-1) / 4.0
        if np.any(q <= 0):
            raise DomainError("point outside the hyperbolic chart domain")
        # F(q) = -log q with q quadratic: Faa di Bruno with q''' = 0.
        dq = 0.5 * kappa * pts
        ddq = 0.5 * kappa * eye
        f1, f2, f3, f4 = -1.0 / q, 1.0 / q**2, -2.0 / q**3, 6.0 / q**4
        out = [-np.log(q)]
        if order >= 1:
            out.append(f1[..., None] * dq)
        if order >= 2:
            out.append(f2[..., None, None] * np.einsum("...i,...j->...ij", dq, dq)
                       + f1[..., None, None] * ddq)
        if order >= 3:
            qqq = np.einsum("...i,...j,...k->...ijk", dq, dq, dq)
            mix = (np.einsum("ij,...k->...ijk", ddq, dq) + np.einsum("ik,...j->...ijk", ddq, dq)
                   + np.einsum("jk,...i->...ijk", ddq, dq))
            out.append(f3[..., None, None, None] * qqq + f2[..., None, None, None] * mix)
        if order >= 4:
            q4 = np.einsum("...i,...j,...k,...l->...ijkl", dq, dq, dq, dq)
            m3 = np.zeros(q4.shape)
            for (a, b), (c, e) in (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2)),
                                   ((1, 2), (0, 3)), ((1, 3), (0, 2)), ((2, 3), (0, 1))):
                letters = "ijkl"
                s1 = letters[a] + letters[b]
                s2 = "..." + letters[c]
                s3 = "..." + letters[e]
                m3 = m3 + np.einsum(f"{s1},{s2},{s3}->...ijkl", ddq, dq, dq)
            m22 = (np.einsum("ij,kl->ijkl", ddq, ddq) + np.einsum("ik,jl->ijkl", ddq, ddq)
                   + np.einsum("il,jk->ijkl", ddq, ddq))
            out.append(f4[..., None, None, None, None] * q4 + f3[..., None, None, None, None] * m3
                       + f2[..., None, None, None, None] * m22)
        if len(amps):
            phase = np.einsum("...i,mi->...m", pts, waves) + phases
            c, s = np.cos(phase), np.sin(phase)
            trig = (c, -s, -c, s, c)
            out[0] = out[0] + c @ amps
            power = np.ones((len(amps),))
            letters = "ijkl"
            for r in range(1, order + 1):
                power = np.einsum("m...,mi->m...i", power, waves)
                idx = letters[:r]
                out[r] = out[r] + np.einsum(f"...m,m{idx}->...{idx}", trig[r] * amps, power)
        return out

    def conformal_factor(self, pts) -> np.ndarray:
        return np.exp(2.0 * self.u_derivatives(pts, 0)[0])

    def metric(self, pts) -> np.ndarray:
        """Metric tensor at points, shape ``(..., d, d)``."""
        pts = np.asarray(pts, dtype=float)
        g = self.conformal_factor(pts)[..., None, None] * np.eye(self.dim)
        np.linalg.cholesky(g)
        return g

    def christoffel(self, pts) -> np.ndarray:
        """``Gamma[..., k, i, j]`` = Christoffel symbol of the second kind."""
        du = self.u_derivatives(pts, 1)[1]
        return christoffel_from_gradient(du)

    # -- prescribing function -------------------------------------------------
    def f_derivatives(self, pts, order: int = 2) -> list[np.ndarray]:
        pts = np.asarray(pts, dtype=float)
        return [self._f.derivative_tensor(pts, r) for r in range(order + 1)]

    def f(self, pts) -> np.ndarray:
        return self._f(np.asarray(pts, dtype=float))

    # -- validation -------------------------------------------------------------
    def self_test(self, pts, h: float = 1e-4, rtol: float = 1e-6) -> float:
        """Compare analytic ``u`` derivatives with Richardson central differences.

        Returns the worst relative discrepancy; raises if it exceeds ``rtol``.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        worst = 0.0
        for r in range(1, 5):
            ana = self.u_derivatives(pts, r)
            lower = ana[r - 1]
            top = ana[r]

            def fd(step):
                acc = np.zeros_like(top)
                for i in range(self.dim):
                    e = np.zeros(self.dim)
                    e[i] = step
                    plus = self.u_derivatives(pts + e, r - 1)[r - 1]
                    minus = self.u_derivatives(pts - e, r - 1)[r - 1]
                    acc[(...,) + (slice(None),) * (r - 1) + (i,)] = (plus - minus) / (2 * step)
                return acc

            rich = (4 * fd(h) - fd(2 * h)) / 3
            scale = 1.0 + np.abs(top).max()
            worst = max(worst, float(np.abs(rich - top).max() / scale))
            del lower
        if worst > rtol:
            raise ConfigurationError(f"analytic metric derivatives disagree with differences: {worst:.2e}")
        return worst

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "kappa": self.kappa,
            "amplitudes": list(self.amplitudes),
            "wavevectors": [list(w) for w in self.wavevectors],
            "phases": list(self.phases),
            "u_expr": self.u_expr,
            "f_expr": self.f_expr,
            "topology": self.topology,
            "periods": list(self.periods) if self.periods else None,
            "injectivity": self.injectivity,
            "name": self.name,
        }


def christoffel_from_gradient(w: np.ndarray) -> np.ndarray:
    """Conformal Christoffel symbols ``G[..., k, i, j]`` built from a vector ``w``."""
    d = w.shape[-1]
    eye = np.eye(d)
    return (np.einsum("ki,...j->...kij", eye, w) + np.einsum("kj,...i->...kij", eye, w)
            - np.einsum("ij,...k->...kij", eye, w))


# -- constructors --------------------------------------------------------------

def euclidean(dim: int, f_expr: str = "0") -> MetricFamily:
    return MetricFamily(dim=dim, f_expr=f_expr, name="euclidean")


def flat_torus(dim: int, periods, f_expr: str = "0") -> MetricFamily:
    periods = tuple(float(p) for p in periods)
    if len(periods) != dim:
        raise ConfigurationError("one period per coordinate is required")
    return MetricFamily(dim=dim, f_expr=f_expr, topology="flat_torus", periods=periods,
                        name="flat_torus")


def round_sphere(dim: int, radius: float = 1.0, f_expr: str = "0") -> MetricFamily:
    return MetricFamily(dim=dim, kappa=1.0 / radius**2, f_expr=f_expr, topology="round_sphere",
                        name="round_sphere")


def hyperbolic(dim: int, radius: float = 1.0, f_expr: str = "0") -> MetricFamily:
    return MetricFamily(dim=dim, kappa=-1.0 / radius**2, f_expr=f_expr, topology="hyperbolic",
                        injectivity=np.inf, name="hyperbolic")


def conformal_perturbation(
    dim: int,
    seed: int = 0,
    modes: int = 3,
    amplitude: float = 0.05,
    kappa: float = 0.0,
    f_expr: str = "0",
) -> MetricFamily:
    """Seeded random trigonometric perturbation of a space form."""
    rng = np.random.default_rng(seed)
    amps = tuple(float(a) for a in amplitude * rng.uniform(0.5, 1.0, modes) * rng.choice([-1, 1], modes))
    waves = tuple(tuple(float(x) for x in rng.normal(0.0, 1.5, dim)) for _ in range(modes))
    phases = tuple(float(b) for b in rng.uniform(0, 2 * pi, modes))
    return MetricFamily(dim=dim, kappa=kappa, amplitudes=amps, wavevectors=waves, phases=phases,
                        f_expr=f_expr, topology="conformal_perturbation",
                        name=f"conformal_perturbation(seed={seed})")


def from_dict(data: dict) -> MetricFamily:
    allowed = {"dim", "kappa", "amplitudes", "wavevectors", "phases", "u_expr", "f_expr",
               "topology", "periods", "injectivity", "name"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigurationError(f"unknown metric keys: {sorted(unknown)}")
    data = dict(data)
    for key in ("amplitudes", "phases"):
        if key in data:
            data[key] = tuple(data[key])
    if "wavevectors" in data:
        data["wavevectors"] = tuple(tuple(w) for w in data["wavevectors"])
    if data.get("periods") is not None:
        data["periods"] = tuple(data["periods"])
    return MetricFamily(**data)
