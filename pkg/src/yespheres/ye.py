"""Perturbed geodesic spheres of prescribed K-curvature near critical points.

The radius function of a centred sphere is ``t (1 + t^2 phi)``. The closed-form
seed ``phi_0 + t phi_1`` removes the residual through order ``t^3``; Newton
continuation in ``t`` then solves the full equation over the center (``n+1``
translational unknowns in normal coordinates at the critical point) and the
degree-1-free harmonic coefficients of ``phi``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .curvature_functions import CurvatureSpec
from .errors import ConsistencyError, ContinuationError, DomainError
from .families import MetricFamily
from .geometry import CurvatureJet, curvature_jet, exp_and_transport
from .immersion import DEFAULT_STEPS, CenteredSphere, immerse, local_linearization, residual_values
from .spectral import HarmonicBasis, SphereField, helmholtz_solve


# ---------------------------------------------------------------------------
# closed-form seeds
# ---------------------------------------------------------------------------

def phi0_rhs(jet: CurvatureJet, basis: HarmonicBasis) -> SphereField:
    """Right-hand side ``-(1/3) Ric_yy - f(x)`` of the second-order equation."""
    Y = basis.grid.nodes
    ric = np.einsum("pa,ab,pb->p", Y, jet.ricci, Y)
    return SphereField.from_values(basis, -ric / 3 - jet.f_value)


def phi0(jet: CurvatureJet, basis: HarmonicBasis) -> SphereField:
    """Closed-form second-order radius correction (even, degrees 0 and 2)."""
    n = jet.n
    Y = basis.grid.nodes
    ric = np.einsum("pa,ab,pb->p", Y, jet.ricci, Y)
    vals = n / (3 * (n + 2)) * ric - 2 * (n + 1) / (3 * (n + 2)) * jet.scalar - jet.f_value
    return SphereField.from_values(basis, vals)


def phi1_rhs(jet: CurvatureJet, basis: HarmonicBasis) -> SphereField:
    """Right-hand side ``-(1/4) Ric_yy;y + (n+1)/(2(n+3)) R_;y`` of the third-order equation."""
    n = jet.n
    Y = basis.grid.nodes
    ric1 = np.einsum("abc,pa,pb,pc->p", jet.d_ricci, Y, Y, Y)
    return SphereField.from_values(basis, -ric1 / 4 + (n + 1) / (2 * (n + 3)) * (Y @ jet.d_scalar))


def phi1(jet: CurvatureJet, basis: HarmonicBasis, tol: float = 1e-6) -> SphereField:
    """Third-order radius correction (odd, degree 3 only).

    The degree-1 part of the right-hand side cancels by the contracted Bianchi
    identity; a relative remainder above ``tol`` signals an inconsistent jet.
    """
    rhs = phi1_rhs(jet, basis)
    try:
        return helmholtz_solve(rhs, basis, tol=tol)
    except ConsistencyError as exc:
        raise ConsistencyError(f"curvature jet violates the Bianchi cancellation: {exc}") from exc


def degree_one_part(fld: SphereField) -> float:
    return float(np.linalg.norm(fld.coeffs[fld.basis.degrees == 1]))


# ---------------------------------------------------------------------------
# critical points of the modified scalar curvature
# ---------------------------------------------------------------------------

@dataclass
class CriticalPoint:
    """Critical point of ``R_f`` with its Hessian in the chart frame."""

    location: np.ndarray
    grad_residual: float
    hessian: np.ndarray
    morse_index: int
    hess_sign: int
    margin: float
    degenerate: bool
    value: float = 0.0

    def to_dict(self) -> dict:
        return {"location": self.location.tolist(), "grad_residual": self.grad_residual,
                "hessian": self.hessian.tolist(), "morse_index": self.morse_index,
                "hess_sign": self.hess_sign, "margin": self.margin,
                "degenerate": self.degenerate, "value": self.value}

    @classmethod
    def from_dict(cls, d: dict) -> "CriticalPoint":
        return cls(np.asarray(d["location"], float), float(d["grad_residual"]),
                   np.asarray(d["hessian"], float), int(d["morse_index"]), int(d["hess_sign"]),
                   float(d["margin"]), bool(d["degenerate"]), float(d.get("value", 0.0)))


@dataclass
class SearchConfig:
    """Multistart Newton search for critical points.

    ``bounds`` defaults to one period cell on a torus and to ``[-2, 2]^d``
    elsewhere. Starts are a regular lattice of ``starts_per_axis`` points per
    coordinate plus ``random_starts`` seeded uniform samples.
    """

    bounds: tuple[tuple[float, float], ...] | None = None
    starts_per_axis: int = 6
    random_starts: int = 16
    seed: int = 0
    tol: float = 1e-11
    max_iter: int = 60
    merge_radius: float = 1e-5
    degeneracy_floor: float = 1e-4


def _rf(family: MetricFamily, x):
    jet = curvature_jet(family, x)
    return jet.rf_value, jet.rf_grad, jet.rf_hess


def _wrap(family: MetricFamily, x: np.ndarray) -> np.ndarray:
    if family.topology == "flat_torus" and family.periods is not None:
        P = np.asarray(family.periods, float)
        return np.mod(x, P)
    return x


def _distance(family: MetricFamily, a: np.ndarray, b: np.ndarray) -> float:
    d = a - b
    if family.topology == "flat_torus" and family.periods is not None:
        P = np.asarray(family.periods, float)
        d = d - P * np.round(d / P)
    return float(np.linalg.norm(d))


def _newton_critical(family: MetricFamily, x0: np.ndarray, cfg: SearchConfig):
    x = x0.copy()
    for _ in range(cfg.max_iter):
        if not family.in_domain(x):
            return None
        _, g, H = _rf(family, x)
        gn = float(np.linalg.norm(g))
        if gn <= cfg.tol * (1 + np.abs(H).max()):
            return x
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return None
        scale = float(np.exp(-family.u_derivatives(x, 0)[0]))
        lam = 1.0
        while lam > 1e-4:
            xn = _wrap(family, x + lam * scale * step)
            if family.in_domain(xn) and np.linalg.norm(_rf(family, xn)[1]) < gn:
                break
            lam *= 0.5
        else:
            return None
        x = xn
    return None


def classify(family: MetricFamily, x, floor: float = 1e-4) -> CriticalPoint:
    """Hessian data of ``R_f`` at a (putative) critical point."""
    x = np.asarray(x, dtype=float)
    val, g, H = _rf(family, x)
    H = 0.5 * (H + H.T)
    eig = np.linalg.eigvalsh(H)
    scale = float(np.abs(eig).max())
    margin = float(np.abs(eig).min())
    index = int((eig < 0).sum())
    return CriticalPoint(location=x, grad_residual=float(np.linalg.norm(g)), hessian=H,
                         morse_index=index, hess_sign=(-1) ** index, margin=margin,
                         degenerate=bool(scale == 0 or margin < floor * scale), value=float(val))


def critical_points(family: MetricFamily, search: SearchConfig | None = None) -> list[CriticalPoint]:
    """Deduplicated critical points of ``R_f`` found by multistart Newton."""
    cfg = search or SearchConfig()
    d = family.dim
    if cfg.bounds is not None:
        lo = np.array([b[0] for b in cfg.bounds], float)
        hi = np.array([b[1] for b in cfg.bounds], float)
    elif family.topology == "flat_torus" and family.periods is not None:
        lo, hi = np.zeros(d), np.asarray(family.periods, float)
    else:
        lo, hi = -2 * np.ones(d), 2 * np.ones(d)
    axes = [lo[i] + (hi[i] - lo[i]) * (np.arange(cfg.starts_per_axis) + 0.5) / cfg.starts_per_axis
            for i in range(d)]
    starts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    rng = np.random.default_rng(cfg.seed)
    starts = np.vstack([starts, lo + (hi - lo) * rng.uniform(size=(cfg.random_starts, d))])
    found: list[CriticalPoint] = []
    for x0 in starts:
        x = _newton_critical(family, x0, cfg)
        if x is None:
            continue
        if cfg.bounds is not None and (np.any(x < lo - 1e-9) or np.any(x > hi + 1e-9)):
            continue
        if any(_distance(family, x, c.location) < cfg.merge_radius for c in found):
            continue
        found.append(classify(family, x, cfg.degeneracy_floor))
    found.sort(key=lambda c: tuple(np.round(c.location, 9)))
    return found


# ---------------------------------------------------------------------------
# Newton continuation
# ---------------------------------------------------------------------------

@dataclass
class ContinuationConfig:
    t0: float = 1e-3
    ratio: float = 1.3
    min_ratio: float = 1.0 + 1e-4
    max_newton: int = 15
    tol_factor: float = 1e-9
    center_step: float = 1e-4
    steps: int = DEFAULT_STEPS
    transport_atol: float = 1e-13


@dataclass
class BranchPoint:
    """One accepted point ``(t, center, phi)`` on a branch."""

    t: float
    xi: np.ndarray
    x: np.ndarray
    frame: np.ndarray
    phi: SphereField
    residual: float
    iterations: int
    xi_noise: float

    def sphere(self) -> CenteredSphere:
        return CenteredSphere(self.t, self.x, self.phi, self.frame)

    def to_dict(self) -> dict:
        return {"t": self.t, "xi": self.xi.tolist(), "x": self.x.tolist(),
                "frame": self.frame.tolist(), "phi": self.phi.coeffs.tolist(),
                "residual": self.residual, "iterations": self.iterations, "xi_noise": self.xi_noise}


@dataclass
class YeBranch:
    """Continuation branch emanating from a critical point."""

    point: CriticalPoint
    spec: dict
    basis: HarmonicBasis
    seed0: SphereField
    seed1: SphereField
    points: list[BranchPoint] = field(default_factory=list)
    frame: np.ndarray | None = None

    @property
    def t(self) -> np.ndarray:
        return np.array([p.t for p in self.points])

    def drift(self) -> np.ndarray:
        """Geodesic distance ``|x_t - p|`` of every accepted center."""
        return np.array([float(np.linalg.norm(p.xi)) for p in self.points])

    def drift_noise(self) -> np.ndarray:
        return np.array([p.xi_noise for p in self.points])

    def phi_defect(self) -> np.ndarray:
        """``sup |t^2 phi_t - t^2 phi_0 - t^3 phi_1|`` along the branch."""
        out = []
        for p in self.points:
            diff = p.phi.coeffs - self.seed0.coeffs - p.t * self.seed1.coeffs
            out.append(p.t**2 * float(np.abs(self.basis.synthesize(diff)).max()))
        return np.array(out)

    def residuals(self) -> np.ndarray:
        return np.array([p.residual for p in self.points])

    def final(self) -> BranchPoint:
        if not self.points:
            raise ContinuationError("branch has no accepted points", None)
        return self.points[-1]

    def to_dict(self) -> dict:
        return {"critical_point": self.point.to_dict(), "spec": self.spec,
                "basis": {"n": self.basis.n, "L": self.basis.L,
                          "exactness": self.basis.grid.exactness},
                "frame": None if self.frame is None else self.frame.tolist(),
                "points": [p.to_dict() for p in self.points]}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_json(cls, path, family: MetricFamily, basis: HarmonicBasis) -> "YeBranch":
        with open(path) as fh:
            d = json.load(fh)
        cp = CriticalPoint.from_dict(d["critical_point"])
        frame = None if d["frame"] is None else np.asarray(d["frame"], float)
        jet = curvature_jet(family, cp.location)
        br = cls(cp, d["spec"], basis, phi0(jet, basis), phi1(jet, basis), frame=frame)
        for p in d["points"]:
            br.points.append(BranchPoint(p["t"], np.asarray(p["xi"]), np.asarray(p["x"]),
                                         np.asarray(p["frame"]), SphereField(basis, np.asarray(p["phi"])),
                                         p["residual"], p["iterations"], p["xi_noise"]))
        return br


class _Problem:
    """Residual and Jacobian of the prescribed-curvature equation at fixed ``t``."""

    def __init__(self, spec, family, basis, p, frame, cfg):
        self.spec, self.family, self.basis, self.p, self.frame0, self.cfg = spec, family, basis, p, frame, cfg
        self.free = basis.degrees != 1
        self.d = family.dim

    def center(self, xi):
        if not np.any(xi):
            return self.p.copy(), self.frame0.copy()
        tr = exp_and_transport(self.family, self.p, xi, self.frame0, atol=self.cfg.transport_atol)
        return tr.endpoint, tr.frame

    def unpack(self, z):
        xi = z[:self.d]
        c = np.zeros(self.basis.size)
        c[self.free] = z[self.d:]
        return xi, SphereField(self.basis, c)

    def residual_nodes(self, t, z):
        xi, phi = self.unpack(z)
        x, E = self.center(xi)
        imm = immerse(self.family, CenteredSphere(t, x, phi, E), steps=self.cfg.steps, check=False)
        return residual_values(self.spec, self.family, imm)

    def jacobian(self, t, z):
        xi, phi = self.unpack(z)
        x, E = self.center(xi)
        s, gs, hs = CenteredSphere(t, x, phi, E).radius_jets()
        lin = local_linearization(self.spec, self.family, x, E, self.basis.grid.nodes, t, s, gs, hs,
                                  steps=self.cfg.steps)
        cols_phi = t**3 * self.basis.analyze(lin.basis_response(self.basis))[:, self.free]
        h = self.cfg.center_step
        cols_xi = np.empty((self.basis.size, self.d))
        for a in range(self.d):
            dz = np.zeros_like(z)
            dz[a] = h
            rp = self.basis.analyze(self.residual_nodes(t, z + dz))
            rm = self.basis.analyze(self.residual_nodes(t, z - dz))
            cols_xi[:, a] = (rp - rm) / (2 * h)
        return np.hstack([cols_xi, cols_phi]), lin.res


def _newton(prob: _Problem, t: float, z: np.ndarray, cfg: ContinuationConfig):
    """Damped Newton iteration driven to stagnation; returns ``(z, sup residual, its, Jacobian)``."""
    tol = cfg.tol_factor * (1 + t)
    r = prob.residual_nodes(t, z)
    rn = float(np.abs(r).max())
    J = None
    its = 0
    stall = 0
    while its < cfg.max_newton:
        its += 1
        J, _ = prob.jacobian(t, z)
        try:
            dz = -np.linalg.solve(J, prob.basis.analyze(r))
        except np.linalg.LinAlgError:
            dz = -np.linalg.lstsq(J, prob.basis.analyze(r), rcond=None)[0]
        lam, accepted = 1.0, False
        while lam >= 1 / 64:
            zn = z + lam * dz
            try:
                rnew = prob.residual_nodes(t, zn)
            except DomainError:
                lam *= 0.5
                continue
            nn = float(np.abs(rnew).max())
            if nn < rn or (nn <= tol and nn <= 2 * rn):
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            break
        improvement = rn / max(nn, 1e-300)
        z, r, rn = zn, rnew, nn
        if rn <= tol:
            stall = stall + 1 if improvement < 4 else 0
            if stall >= 1 or rn < 1e-14:
                break
    if J is None:
        J, _ = prob.jacobian(t, z)
    return z, rn, its, J


def solve_ye(spec: CurvatureSpec, family: MetricFamily, p: CriticalPoint, t: float,
             basis: HarmonicBasis, continuation: ContinuationConfig | None = None,
             resume: YeBranch | None = None) -> YeBranch:
    """Continue the branch of prescribed-curvature spheres from ``p`` up to scale ``t``.

    Raises
    ------
    DomainError
        If ``p`` is degenerate or ``t`` exceeds the injectivity budget.
    ContinuationError
        If the step ratio shrinks below ``min_ratio``; the exception carries
        the branch accepted so far.
    """
    cfg = continuation or ContinuationConfig()
    if p.degenerate:
        raise DomainError("critical point is degenerate; no branch is constructed")
    if 2 * t >= family.injectivity_budget():
        raise DomainError("target scale exceeds the injectivity budget")
    if spec.n != basis.n or family.dim != basis.n + 1:
        raise DomainError("dimensions of spec, family and basis disagree")
    jet = curvature_jet(family, p.location)
    E = jet.frame
    s0, s1 = phi0(jet, basis), phi1(jet, basis)
    branch = resume or YeBranch(p, spec.to_dict(), basis, s0, s1, frame=E)
    prob = _Problem(spec, family, basis, p.location, E, cfg)
    free = prob.free

    def seed(tt):
        c = (s0.coeffs + tt * s1.coeffs)[free]
        return np.concatenate([np.zeros(family.dim), c])

    eps_res = 64 * np.finfo(float).eps * np.sqrt(basis.size)

    def accept(tt, z, rn, its, J):
        xi, phi = prob.unpack(z)
        x, Ex = prob.center(xi)
        Jinv = np.linalg.inv(J)
        noise = float(np.linalg.norm(Jinv[:family.dim], 2)) * eps_res
        branch.points.append(BranchPoint(tt, xi.copy(), x, Ex, phi, rn, its, noise))

    if branch.points:
        last = branch.points[-1]
        z_prev = np.concatenate([last.xi, last.phi.coeffs[free]])
        t_prev = last.t
    else:
        z0 = seed(cfg.t0)
        z, rn, its, J = _newton(prob, cfg.t0, z0, cfg)
        if rn > cfg.tol_factor * (1 + cfg.t0):
            raise ContinuationError(f"no solution at the initial scale (residual {rn:.3e})", branch)
        accept(cfg.t0, z, rn, its, J)
        z_prev, t_prev = z, cfg.t0
    ratio = cfg.ratio
    z_older, t_older = None, None
    while t_prev < t * (1 - 1e-12):
        t_new = min(t_prev * ratio, t)
        # predictor: correction beyond the seed scales like t^2
        corr = z_prev - seed(t_prev)
        z_pred = seed(t_new) + corr * (t_new / t_prev) ** 2
        try:
            z, rn, its, J = _newton(prob, t_new, z_pred, cfg)
            ok = rn <= cfg.tol_factor * (1 + t_new)
        except DomainError:
            ok = False
        if not ok:
            ratio = np.sqrt(ratio)
            if ratio < cfg.min_ratio:
                raise ContinuationError(f"continuation stalled at t = {t_prev:.4g}", branch)
            continue
        accept(t_new, z, rn, its, J)
        z_prev, t_prev = z, t_new
        ratio = min(cfg.ratio, ratio * ratio)
    return branch
