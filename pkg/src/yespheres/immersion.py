"""Geometry of perturbed geodesic spheres.

A centred sphere ``(t, x, phi)`` is the radial graph

    y -> exp_x(E (s(y) y)),     s = t (1 + t^2 phi(y)),

over the unit sphere of the tangent space at ``x``, where ``E`` is an
orthonormal frame at ``x``. Everything is computed node by node: at a node
``y`` with tangent frame ``e_a``, geodesic normal coordinates on the unit
sphere give ``d_a y = e_a`` and ``d_ab y = -delta_ab y``, so the derivatives of
``v = s y`` are

    d_a v  = s_a y + s e_a,
    d_ab v = s_ab y + s_a e_b + s_b e_a - s delta_ab y,

with ``s_a`` and ``s_ab`` the tangential gradient and Hessian of ``s``. The
first and second differentials of the exponential map (from the variational
kernels) then give the tangent vectors and their ambient covariant
derivatives, hence the second fundamental form without differencing normals.

Rescaled quantities follow the convention in which the unrescaled geodesic
sphere of radius ``t`` is mapped to the unit sphere: the induced metric is
divided by ``t^2``, the second fundamental form by ``t``, and the shape
operator and K-curvature are multiplied by ``t``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .curvature_functions import CurvatureSpec
from .errors import DomainError
from .families import MetricFamily
from .geometry import adapted_frame, base_frame, exp_map_batch
from .spectral import HarmonicBasis, SphereField

DEFAULT_STEPS = 48


@dataclass
class CenteredSphere:
    """Scale, center, frame and perturbation of a radial graph.

    ``phi`` determines the radius ``t (1 + t^2 phi)``. ``frame`` is the
    orthonormal frame at ``x`` in which ``y`` is expressed (default: the chart
    frame at ``x``).
    """

    t: float
    x: np.ndarray
    phi: SphereField
    frame: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.t <= 0:
            raise DomainError("scale t must be positive")

    @property
    def basis(self) -> HarmonicBasis:
        return self.phi.basis

    def radius_jets(self):
        """Radius function and its tangential derivatives at grid nodes."""
        t = self.t
        val, grad, hess = self.phi.jets()
        return t * (1 + t * t * val), t**3 * grad, t**3 * hess

    def degree_one_defect(self) -> float:
        c = self.phi.coeffs[self.basis.degrees == 1]
        return float(np.linalg.norm(c))

    def check(self, gauge_tol: float = 1e-8) -> None:
        s, _, _ = self.radius_jets()
        if np.any(s <= 0):
            raise DomainError("radial graph degenerates: 1 + t^2 phi <= 0 at some node")
        if self.degree_one_defect() > gauge_tol * (1 + self.phi.norm()):
            raise DomainError("phi has a degree-one component above the gauge tolerance")

    def resolved_frame(self, family: MetricFamily) -> np.ndarray:
        return base_frame(family, self.x) if self.frame is None else np.asarray(self.frame, dtype=float)


@dataclass
class ImmersionData:
    """Node-wise geometry of an immersed centred sphere.

    Attributes
    ----------
    positions : (N, d) ambient chart coordinates.
    tangents : (N, d, n) coordinate components of the surface tangent vectors.
    normals : (N, d) outward unit normals (in the ambient metric).
    metric, second_ff, shape : (N, n, n) rescaled induced metric, second
        fundamental form and shape operator ``g^{-1/2} II g^{-1/2}``.
    shape_true : (N, n, n) rescaled ``g^{-1} II`` (not symmetric in general).
    radial_normal : (N,) geometric normal component ``g(dP/ds, N)`` of the radial variation.
    diameter_bound : upper bound ``2 max s`` for the ambient diameter.
    """

    t: float
    nodes: np.ndarray
    frames: np.ndarray
    positions: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    metric: np.ndarray
    second_ff: np.ndarray
    shape: np.ndarray
    shape_true: np.ndarray
    radial_normal: np.ndarray
    radius: np.ndarray
    diameter_bound: float
    exp_jacobian: np.ndarray | None = None

    def normals_in_frame(self) -> np.ndarray:
        """Unit normals pulled back to frame components at the center."""
        return np.linalg.solve(self.exp_jacobian, self.normals[:, :, None])[:, :, 0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.shape)

    def to_csv(self, path, spec: CurvatureSpec | None = None) -> None:
        kvals = k_values(spec, self) if spec is not None else None
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            d = self.positions.shape[1]
            n = self.shape.shape[1]
            head = ["node"] + [f"x{i + 1}" for i in range(d)] + [f"lambda{i + 1}" for i in range(n)]
            if kvals is not None:
                head.append("K")
            w.writerow(head)
            lam = self.eigenvalues()
            for p in range(len(self.positions)):
                row = [p] + [f"{v:.17g}" for v in self.positions[p]] + [f"{v:.17g}" for v in lam[p]]
                if kvals is not None:
                    row.append(f"{kvals[p]:.17g}")
                w.writerow(row)


def _surface_from_flow(family, nodes, tframes, t, s, gs, hs, X, J, H):
    """Surface geometry from exponential-map differentials (no ODE work)."""
    N, d = nodes.shape
    n = d - 1
    e = tframes                                            # (N, d, n)
    sa = np.einsum("pi,pia->pa", gs, e)
    sab = np.einsum("pia,pij,pjb->pab", e, hs, e)
    dv = sa[:, None, :] * nodes[:, :, None] + s[:, None, None] * e          # (N, d, n)
    eye = np.eye(n)
    ddv = (sab[:, None, :, :] * nodes[:, :, None, None]
           + e[:, :, :, None] * sa[:, None, None, :] + e[:, :, None, :] * sa[:, None, :, None]
           - s[:, None, None, None] * eye[None, None] * nodes[:, :, None, None])
    T = np.einsum("pia,pak->pik", J, dv)                                    # (N, d, n)
    ddP = np.einsum("piab,pak,pbl->pikl", H, dv, dv) + np.einsum("pia,pakl->pikl", J, ddv)
    u = family.u_derivatives(X, 1)
    w = u[1]
    conf = np.exp(2 * u[0])
    # Gamma(T_k, T_l) for the conformal connection.
    wT = np.einsum("pi,pik->pk", w, T)
    TT = np.einsum("pik,pil->pkl", T, T)
    gam = (T[:, :, :, None] * wT[:, None, None, :] + T[:, :, None, :] * wT[:, None, :, None]
           - TT[:, None, :, :] * w[:, :, None, None])
    cov = ddP + gam
    # Normal: Euclidean orthogonal complement of the tangents (conformal metric).
    _, _, vt = np.linalg.svd(np.swapaxes(T, 1, 2))
    nu = vt[:, -1, :]
    radial = np.einsum("pia,pa->pi", J, nodes)
    nu = nu * np.sign(np.einsum("pi,pi->p", nu, radial))[:, None]
    nu = nu / (np.exp(u[0]) * np.linalg.norm(nu, axis=1))[:, None]
    G = conf[:, None, None] * TT
    II = -conf[:, None, None] * np.einsum("pikl,pi->pkl", cov, nu)
    II = 0.5 * (II + np.swapaxes(II, 1, 2))
    gl, gq = np.linalg.eigh(G)
    if np.any(gl <= 1e-12 * np.abs(gl).max()):
        raise DomainError("induced metric is degenerate at some node")
    ginvh = np.einsum("pij,pj,pkj->pik", gq, 1.0 / np.sqrt(gl), gq)
    A = np.einsum("pij,pjk,pkl->pil", ginvh, II, ginvh)
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    Atrue = np.linalg.solve(G, II)
    mu = conf * np.einsum("pi,pi->p", radial, nu)
    return dict(positions=X, tangents=T, normals=nu, metric=G / t**2, second_ff=II / t,
                shape=t * A, shape_true=t * Atrue, radial_normal=mu)


def _frames(nodes: np.ndarray) -> np.ndarray:
    return adapted_frame(nodes)[:, :, :-1]


def immerse_radial(
    family: MetricFamily,
    x,
    frame: np.ndarray,
    nodes: np.ndarray,
    t: float,
    s: np.ndarray,
    gs: np.ndarray,
    hs: np.ndarray,
    steps: int = DEFAULT_STEPS,
    flow=None,
) -> ImmersionData:
    """Immerse the radial graph ``exp_x(frame (s(y) y))`` given radius jets at nodes."""
    if np.any(s <= 0):
        raise DomainError("radial graph degenerates: non-positive radius at some node")
    smax = float(np.max(s))
    if smax >= family.injectivity_budget():
        raise DomainError(f"radius {smax:.3g} exceeds the injectivity budget")
    if flow is None:
        flow = exp_map_batch(family, x, s[:, None] * nodes, frame, steps=steps, second=True)
    X, J, H = flow
    family.check_domain(X)
    tf = _frames(nodes)
    geo = _surface_from_flow(family, nodes, tf, t, s, gs, hs, X, J, H)
    return ImmersionData(t=t, nodes=nodes, frames=tf, radius=s, diameter_bound=2 * smax,
                         exp_jacobian=J, **geo)


def immerse(family: MetricFamily, sph: CenteredSphere, grid=None, steps: int = DEFAULT_STEPS,
            check: bool = True) -> ImmersionData:
    """Immerse a centred sphere at the nodes of its basis grid."""
    if grid is not None and grid is not sph.basis.grid:
        raise DomainError("the centred sphere's field lives on a different grid")
    if check:
        sph.check()
    s, gs, hs = sph.radius_jets()
    return immerse_radial(family, sph.x, sph.resolved_frame(family), sph.basis.grid.nodes,
                          sph.t, s, gs, hs, steps=steps)


def k_values(spec: CurvatureSpec, imm: ImmersionData) -> np.ndarray:
    """K-curvature of the rescaled shape operator at every node."""
    A = imm.shape
    n = A.shape[1]
    if spec.n != n:
        raise DomainError(f"curvature spec has n = {spec.n}, surface has n = {n}")
    lam = np.linalg.eigvalsh(A)
    if spec.kind == "mean":
        return lam.sum(axis=1) / n
    out = np.empty(len(lam))
    for p, row in enumerate(lam):
        if not spec.in_cone(row):
            raise DomainError(f"principal curvatures at node {p} leave the cone: {row.tolist()}")
        out[p] = spec._raw(row)
    return out


def k_field(spec: CurvatureSpec, imm: ImmersionData, basis: HarmonicBasis) -> SphereField:
    return SphereField.from_values(basis, k_values(spec, imm))


def residual_values(spec: CurvatureSpec, family: MetricFamily, imm: ImmersionData) -> np.ndarray:
    """``K^{t,x,phi} - (1 + t^2 f(P))`` at the nodes."""
    t = imm.t
    return k_values(spec, imm) - (1.0 + t * t * family.f(imm.positions))


def residual(spec: CurvatureSpec, family: MetricFamily, sph: CenteredSphere,
             steps: int = DEFAULT_STEPS) -> SphereField:
    imm = immerse(family, sph, steps=steps)
    return SphereField.from_values(sph.basis, residual_values(spec, family, imm))


@dataclass
class LocalLinearization:
    """Pointwise linear response of the residual to the radius 2-jet.

    ``D res [h] = c0 h + c1 . grad_S h + <c2, Hess_S h>`` at each node, for a
    variation ``h`` of the radius function ``s``.
    """

    c0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    imm: ImmersionData
    res: np.ndarray

    def apply(self, values, grads, hess) -> np.ndarray:
        """Apply to variations given by node values, gradients and Hessians (trailing axis F)."""
        return (self.c0[:, None] * values + np.einsum("pi,pfi->pf", self.c1, grads)
                + np.einsum("pij,pfij->pf", self.c2, hess))

    def basis_response(self, basis: HarmonicBasis) -> np.ndarray:
        return self.apply(basis.values, basis.grads, basis.hessians)


def local_linearization(
    spec: CurvatureSpec,
    family: MetricFamily,
    x,
    frame,
    nodes,
    t: float,
    s: np.ndarray,
    gs: np.ndarray,
    hs: np.ndarray,
    rel_step: float = 1e-3,
    steps: int = DEFAULT_STEPS,
) -> LocalLinearization:
    """Differentiate the node-wise residual in the radius, slope and Hessian slots.

    Uses fourth-order central differences. The value slot requires re-running
    the exponential-map flow; the derivative slots only re-run the algebra.
    """
    N, d = nodes.shape
    n = d - 1
    flow = exp_map_batch(family, x, s[:, None] * nodes, frame, steps=steps, second=True)
    imm = immerse_radial(family, x, frame, nodes, t, s, gs, hs, steps=steps, flow=flow)
    tf = imm.frames
    fP = family.f(imm.positions)

    def res_alg(gs_, hs_):
        geo = _surface_from_flow(family, nodes, tf, t, s, gs_, hs_, *flow)
        lam = np.linalg.eigvalsh(geo["shape"])
        return _k_from_eigs(spec, lam) - (1 + t * t * fP)

    res0 = res_alg(gs, hs)
    stencil = ((1, 8.0), (-1, -8.0), (2, -1.0), (-2, 1.0))
    h = rel_step * t

    c0 = np.zeros(N)
    for k, wgt in stencil:
        sk = s + k * h
        fl = exp_map_batch(family, x, sk[:, None] * nodes, frame, steps=steps, second=True)
        geo = _surface_from_flow(family, nodes, tf, t, sk, gs, hs, *fl)
        lam = np.linalg.eigvalsh(geo["shape"])
        c0 += wgt * (_k_from_eigs(spec, lam) - (1 + t * t * family.f(geo["positions"])))
    c0 /= 12 * h

    # slope slot: the residual only sees grad_S s through its tangential part
    hg = rel_step * t
    c1 = np.zeros((N, d))
    for a in range(n):
        ea = tf[:, :, a]
        acc = np.zeros(N)
        for k, wgt in stencil:
            acc += wgt * res_alg(gs + k * hg * ea, hs)
        c1 += (acc / (12 * hg))[:, None] * ea
    hh = rel_step * t
    c2 = np.zeros((N, d, d))
    for a in range(n):
        for b in range(a, n):
            ea, eb = tf[:, :, a], tf[:, :, b]
            sym = 0.5 * (ea[:, :, None] * eb[:, None, :] + eb[:, :, None] * ea[:, None, :])
            acc = np.zeros(N)
            for k, wgt in stencil:
                acc += wgt * res_alg(gs, hs + k * hh * sym)
            coef = acc / (12 * hh)
            # off-diagonal entries occupy both (a, b) and (b, a) slots
            c2 += (1.0 if a == b else 2.0) * coef[:, None, None] * sym
    return LocalLinearization(c0=c0, c1=c1, c2=c2, imm=imm, res=res0)


def _k_from_eigs(spec: CurvatureSpec, lam: np.ndarray) -> np.ndarray:
    n = lam.shape[1]
    if spec.kind == "mean":
        return lam.sum(axis=1) / n
    if spec.kind == "extrinsic":
        prod = np.prod(lam, axis=1)
        if np.any(prod <= 0):
            raise DomainError("principal curvatures leave the positive cone")
        return prod ** (1.0 / n)
    return np.array([spec.eval(row) for row in lam])
