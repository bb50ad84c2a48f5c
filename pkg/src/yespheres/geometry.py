"""Ambient geometry: curvature jets, exponential map, transport, pullback metric.

Sign conventions. With ``R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y]`` and

    R_ijkl = < R(d_i, d_j) d_k, d_l >,
    Ric_ij = -(1/n) sum_k R_kikj,      R = (1/(n+1)) sum_k Ric_kk,

the unit round sphere has ``Ric = delta`` and ``R = 1``, and
``R(y, e_i, y, e_j) = -delta_ij`` on unit vectors orthogonal to ``y``.
All tensors in a :class:`CurvatureJet` are expressed in the orthonormal frame
``E = exp(-u(x)) * I`` of the conformal chart at the base point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import CapabilityError, DomainError, IntegrationError
from .families import MetricFamily, christoffel_from_gradient
from .jets import Jet, jeinsum
from .kernels import variations


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------

def base_frame(family: MetricFamily, x) -> np.ndarray:
    """Orthonormal frame at ``x``: columns are coordinate vectors of unit frame vectors."""
    u = family.u_derivatives(np.asarray(x, dtype=float), 0)[0]
    return np.exp(-float(u)) * np.eye(family.dim)


def adapted_frame(y: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal completion ``[e_1, ..., e_n, y]`` of unit vectors.

    ``y`` may be a stack ``(..., d)``; the result has shape ``(..., d, d)``
    with the last column equal to ``y``. The completion comes from a
    Householder QR of ``[y | I]`` with signs fixed so the first column of the
    factor equals ``y``.
    """
    y = np.asarray(y, dtype=float)
    d = y.shape[-1]
    stack = np.concatenate([y[..., :, None], np.broadcast_to(np.eye(d), y.shape[:-1] + (d, d))], axis=-1)
    q, r = np.linalg.qr(stack)
    sign = np.sign(r[..., 0, 0])
    sign = np.where(sign == 0, 1.0, sign)
    q = q * sign[..., None, None]
    return np.concatenate([q[..., :, 1:d], q[..., :, :1]], axis=-1)


# ---------------------------------------------------------------------------
# curvature jets
# ---------------------------------------------------------------------------

@dataclass
class CurvatureJet:
    """Curvature data at a base point in an orthonormal frame.

    Attributes
    ----------
    riemann : (d, d, d, d)
        ``R_abcd``.
    d_riemann : (d, d, d, d, d)
        ``R_abcd;m`` (last axis is the derivative slot).
    dd_riemann : (d, d, d, d, d, d)
        ``R_abcd;mn``.
    ricci, d_ricci : Ricci tensor and its covariant derivative ``Ric_ab;c``.
    dd_ricci : ``Ric_ab;cd``.
    scalar, d_scalar, hess_scalar : scalar curvature jet.
    f_value, f_grad, f_hess : prescribing function jet.
    """

    x: np.ndarray
    frame: np.ndarray
    n: int
    riemann: np.ndarray
    d_riemann: np.ndarray
    dd_riemann: np.ndarray
    ricci: np.ndarray
    d_ricci: np.ndarray
    dd_ricci: np.ndarray
    scalar: float
    d_scalar: np.ndarray
    hess_scalar: np.ndarray
    f_value: float
    f_grad: np.ndarray
    f_hess: np.ndarray

    @property
    def dim(self) -> int:
        return self.n + 1

    @property
    def rf_coefficient(self) -> float:
        n = self.n
        return 2.0 * (n + 3) / (n + 1)

    @property
    def rf_value(self) -> float:
        return self.scalar + self.rf_coefficient * self.f_value

    @property
    def rf_grad(self) -> np.ndarray:
        return self.d_scalar + self.rf_coefficient * self.f_grad

    @property
    def rf_hess(self) -> np.ndarray:
        return self.hess_scalar + self.rf_coefficient * self.f_hess

    # -- contractions with a direction y (frame components) ---------------
    def r_yy(self, y) -> np.ndarray:
        """``R(y, e_i, y, e_j)`` as a matrix over all frame indices."""
        return np.einsum("a,aibj,b->ij", y, self.riemann, y)

    def r_yy_y(self, y) -> np.ndarray:
        """``R(y, e_i, y, e_j; y)``."""
        return np.einsum("a,aibjc,b,c->ij", y, self.d_riemann, y, y)

    def r_yy_yy(self, y) -> np.ndarray:
        """``R(y, e_i, y, e_j; y, y)``."""
        return np.einsum("a,aibjcd,b,c,d->ij", y, self.dd_riemann, y, y, y)

    def ric_yy(self, y) -> float:
        return float(y @ self.ricci @ y)

    def ric_yy_y(self, y) -> float:
        return float(np.einsum("abc,a,b,c->", self.d_ricci, y, y, y))

    def ric_yy_yy(self, y) -> float:
        return float(np.einsum("abcd,a,b,c,d->", self.dd_ricci, y, y, y, y))

    def symmetry_residual(self) -> float:
        """Worst violation of the algebraic symmetries and the second Bianchi identity."""
        R = self.riemann
        res = [
            np.abs(R + R.transpose(1, 0, 2, 3)).max(),
            np.abs(R + R.transpose(0, 1, 3, 2)).max(),
            np.abs(R - R.transpose(2, 3, 0, 1)).max(),
            np.abs(R + R.transpose(1, 2, 0, 3) + R.transpose(2, 0, 1, 3)).max(),
        ]
        dR = self.d_riemann
        # cyclic sum over (i, j, m) of R_ijkl;m
        bian = dR + dR.transpose(1, 4, 2, 3, 0) + dR.transpose(4, 0, 2, 3, 1)
        res.append(np.abs(bian).max())
        return float(max(res))

    def contracted_bianchi_residual(self) -> float:
        """``|div Ric - (n+1)/2 grad R|`` in this normalization."""
        div = np.einsum("pii->p", self.d_ricci)
        return float(np.abs(div - 0.5 * (self.n + 1) * self.d_scalar).max())

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "ricci": self.ricci.tolist(),
            "scalar": self.scalar,
            "d_scalar": self.d_scalar.tolist(),
            "hess_scalar": self.hess_scalar.tolist(),
            "f": [self.f_value, self.f_grad.tolist(), self.f_hess.tolist()],
        }


def _christoffel_jet(udr: list[np.ndarray], order: int) -> Jet:
    """Jet of ``Gamma[k, i, j]`` from derivatives of the conformal exponent."""
    d = udr[1].shape[0]
    eye = np.eye(d)
    parts = []
    for r in range(order + 1):
        w = udr[r + 1]
        parts.append(np.einsum("ki,j...->kij...", eye, w) + np.einsum("kj,i...->kij...", eye, w)
                     - np.einsum("ij,k...->kij...", eye, w))
    return Jet(parts)


def _covariant(tensor: Jet, gamma: Jet, order: int) -> Jet:
    """Covariant derivative of a covariant tensor jet; new slot appended last."""
    rank = tensor.value.ndim
    letters = "abcdefgh"[:rank]
    out = tensor.derivative().truncate(order)
    for slot in range(rank):
        src = letters[:slot] + "p" + letters[slot + 1:]
        term = jeinsum(f"pz{letters[slot]},{src}->{letters}z", gamma, tensor, order)
        out = out - term
    return out


def curvature_jet(family: MetricFamily, x) -> CurvatureJet:
    """Curvature tensor and its first two covariant derivatives at ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (family.dim,):
        raise DomainError(f"point must have {family.dim} coordinates")
    family.check_domain(x)
    try:
        udr = family.u_derivatives(x, 4)
    except CapabilityError:
        raise
    d = family.dim
    n = family.n
    gam = _christoffel_jet(udr, 3)
    dgam = gam.derivative()                      # [l, j, k, i] = d_i Gamma^l_jk
    t1 = dgam.transpose((0, 3, 1, 2))
    t2 = dgam.transpose((0, 1, 3, 2))
    g2 = gam.truncate(2)
    t3 = jeinsum("lim,mjk->lijk", g2, g2)
    t4 = jeinsum("ljm,mik->lijk", g2, g2)
    rup = (t1 - t2 + t3 - t4).truncate(2)        # R^l_ijk with index order [l, i, j, k]
    u0, u1, u2 = udr[0], udr[1], udr[2]
    phi = np.exp(2.0 * u0)
    phijet = Jet([np.asarray(phi), 2 * phi * u1, phi * (2 * u2 + 4 * np.outer(u1, u1))])
    rlow = jeinsum(",lijk->ijkl", phijet, rup)
    d_r = _covariant(rlow, gam.truncate(1), 1)
    dd_r = _covariant(d_r, gam.truncate(0), 0)
    s = np.exp(-u0)
    R = rlow.value * s**4
    dR = d_r.value * s**5
    ddR = dd_r.value * s**6
    ric = -np.einsum("kikj->ij", R) / n
    dric = -np.einsum("kikjc->ijc", dR) / n
    ddric = -np.einsum("kikjcd->ijcd", ddR) / n
    scal = float(np.trace(ric) / (n + 1))
    dscal = np.einsum("kkc->c", dric) / (n + 1)
    hscal = np.einsum("kkcd->cd", ddric) / (n + 1)
    hscal = 0.5 * (hscal + hscal.T)
    fv, fg, fh = _scalar_f(family, x, udr)
    return CurvatureJet(
        x=x.copy(), frame=s * np.eye(d), n=n, riemann=R, d_riemann=dR, dd_riemann=ddR,
        ricci=ric, d_ricci=dric, dd_ricci=ddric, scalar=scal, d_scalar=dscal, hess_scalar=hscal,
        f_value=fv, f_grad=fg, f_hess=fh,
    )


def _scalar_f(family: MetricFamily, x, udr):
    fd = family.f_derivatives(x, 2)
    gam = christoffel_from_gradient(udr[1])
    s = np.exp(-udr[0])
    hess = fd[2] - np.einsum("kij,k->ij", gam, fd[1])
    return float(fd[0]), s * fd[1], s * s * hess


def riemann_at(family: MetricFamily, pts) -> np.ndarray:
    """Coordinate components ``R_ijkl`` at a stack of points (shape ``(..., d, d, d, d)``)."""
    pts = np.asarray(pts, dtype=float)
    u = family.u_derivatives(pts, 2)
    d = family.dim
    eye = np.eye(d)
    gam = christoffel_from_gradient(u[1])                      # [..., k, i, j]
    dgam = (np.einsum("ki,...jm->...kijm", eye, u[2]) + np.einsum("kj,...im->...kijm", eye, u[2])
            - np.einsum("ij,...km->...kijm", eye, u[2]))       # d_m Gamma^k_ij
    rup = (np.einsum("...ljki->...lijk", dgam) - np.einsum("...likj->...lijk", dgam)
           + np.einsum("...lim,...mjk->...lijk", gam, gam) - np.einsum("...ljm,...mik->...lijk", gam, gam))
    conf = np.exp(2 * u[0])
    return conf[..., None, None, None, None] * np.einsum("...lijk->...ijkl", rup)


def scalar_jet(family: MetricFamily, which: str, x) -> tuple[float, np.ndarray, np.ndarray]:
    """``(value, gradient, Hessian)`` of ``f``, ``R`` or ``R_f`` in the frame at ``x``."""
    x = np.asarray(x, dtype=float)
    if which == "f":
        family.check_domain(x)
        return _scalar_f(family, x, family.u_derivatives(x, 1))
    jet = curvature_jet(family, x)
    if which == "R":
        return jet.scalar, jet.d_scalar, jet.hess_scalar
    if which == "R_f":
        return jet.rf_value, jet.rf_grad, jet.rf_hess
    raise ValueError(f"unknown scalar {which!r}; expected 'f', 'R' or 'R_f'")


# ---------------------------------------------------------------------------
# geodesics and transport
# ---------------------------------------------------------------------------

@dataclass
class FrameTransport:
    endpoint: np.ndarray
    frame: np.ndarray
    error_estimate: float
    velocity: np.ndarray


class _StepBudget(Exception):
    pass


def _transport_ivp(family, x, v_coord, frame, atol, rtol, max_steps):
    d = family.dim
    calls = {"n": 0}
    # DOP853 uses 12 evaluations per step.
    max_calls = 12 * max_steps + 100

    def rhs(_, s):
        calls["n"] += 1
        if calls["n"] > max_calls:
            raise _StepBudget
        pos = s[:d]
        vel = s[d:2 * d]
        E = s[2 * d:].reshape(d, d)
        if not family.in_domain(pos):
            raise DomainError("geodesic left the chart domain")
        w = family.u_derivatives(pos, 1)[1]
        acc = -(2 * vel * (w @ vel) - (vel @ vel) * w)
        dE = -(vel[:, None] * (w @ E)[None, :] + np.outer(w @ vel, np.ones(d)) * E
               - np.outer(w, vel @ E))
        return np.concatenate([vel, acc, dE.ravel()])

    s0 = np.concatenate([x, v_coord, frame.ravel()])
    try:
        sol = solve_ivp(rhs, (0.0, 1.0), s0, method="DOP853", atol=atol, rtol=rtol)
    except _StepBudget:
        raise IntegrationError(f"exceeded {max_steps} integration steps", achieved_tol=None)
    if sol.status != 0:
        raise IntegrationError(f"integrator failed: {sol.message}", achieved_tol=atol)
    return sol.y[:, -1]


def exp_and_transport(
    family: MetricFamily,
    x,
    v,
    frame: np.ndarray | None = None,
    atol: float = 1e-10,
    max_steps: int = 100_000,
) -> FrameTransport:
    """Geodesic endpoint ``exp_x(v)`` and parallel transport of a frame.

    ``v`` holds frame components with respect to ``frame`` (default: the
    orthonormal frame of the chart at ``x``).
    """
    x = np.asarray(x, dtype=float)
    E = base_frame(family, x) if frame is None else np.asarray(frame, dtype=float)
    v = np.asarray(v, dtype=float)
    length = float(np.linalg.norm(v))
    if length >= family.injectivity_budget():
        raise DomainError(f"|v| = {length:.3g} exceeds the injectivity budget")
    d = family.dim
    vc = E @ v
    # scipy floors the relative tolerance at 100 machine epsilons
    rfloor = 100 * np.finfo(float).eps
    fine = _transport_ivp(family, x, vc, E, atol / 32, max(atol / 32, rfloor), max_steps)
    coarse = _transport_ivp(family, x, vc, E, atol, max(atol, rfloor), max_steps)
    err = float(np.abs(fine - coarse).max())
    return FrameTransport(endpoint=fine[:d], frame=fine[2 * d:].reshape(d, d),
                          error_estimate=err, velocity=fine[d:2 * d])


def exp_map_batch(family: MetricFamily, x, V_frame, frame=None, steps: int = 48, second: bool = True):
    """Endpoints and first/second differentials of ``v -> exp_x(E v)`` for many ``v``."""
    x = np.asarray(x, dtype=float)
    E = base_frame(family, x) if frame is None else np.asarray(frame, dtype=float)
    V = np.atleast_2d(np.asarray(V_frame, dtype=float)) @ E.T
    return variations(family, x, V, E, steps=steps, second=second)


def pullback_metric(
    family: MetricFamily,
    x,
    t: float,
    y,
    frame: np.ndarray | None = None,
    adapted: bool = True,
    steps: int = 64,
) -> np.ndarray:
    """Rescaled normal-coordinate metric ``g^{t,x}(y) = (exp_x^* g)(t y)``.

    Components are returned in the adapted frame ``(e_1, ..., e_n, y)`` when
    ``adapted`` is true, otherwise in the frame coordinates at ``x``.
    ``y`` may be a stack of unit vectors.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = np.atleast_2d(y)
    if t * 1.0 >= family.injectivity_budget():
        raise DomainError("scale exceeds the injectivity budget")
    X, J, _ = exp_map_batch(family, x, t * Y, frame, steps=steps, second=False)
    family.check_domain(X)
    conf = family.conformal_factor(X)
    g = conf[:, None, None] * np.einsum("pia,pib->pab", J, J)
    if adapted:
        Q = adapted_frame(Y)
        g = np.einsum("pai,pab,pbj->pij", Q, g, Q)
    return g[0] if single else g
