"""Closed-form small-scale expansions and numerical order-of-agreement fits.

Every expansion is stored as a polynomial in ``t`` whose coefficients are
fields of the unit direction ``y`` built from a :class:`CurvatureJet`.
Frame indices refer to the jet's frame at ``x``; matrices over the tangent
space of the unit sphere use the adapted frame ``e_1, ..., e_n`` of
:func:`yespheres.geometry.adapted_frame`, which is also the frame used by the
immersion module. ``y`` may be a single unit vector or a stack ``(N, d)``.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .curvature_functions import CurvatureSpec
from .errors import CapabilityError, DomainError
from .families import MetricFamily, christoffel_from_gradient
from .geometry import CurvatureJet, adapted_frame, exp_map_batch, pullback_metric, riemann_at
from .immersion import DEFAULT_STEPS, CenteredSphere, immerse, immerse_radial, k_values
from .spectral import SphereField


class ExpansionKind(str, enum.Enum):
    METRIC = "metric"
    CURVATURE_W = "curvature_W"
    SECOND_FF = "second_ff"
    SHAPE_OPERATOR = "shape_operator"
    CHRISTOFFEL_DIAG = "christoffel_diag"
    K_CURVATURE = "K_curvature"
    K_PERTURBED = "K_perturbed"


FIFTH_ORDER = (ExpansionKind.METRIC, ExpansionKind.CURVATURE_W, ExpansionKind.SECOND_FF,
               ExpansionKind.SHAPE_OPERATOR, ExpansionKind.K_CURVATURE)


# ---------------------------------------------------------------------------
# contractions
# ---------------------------------------------------------------------------

@dataclass
class _Contractions:
    """Direction contractions of the jet, vectorized over ``y`` (shape ``(N, d)``)."""

    r: np.ndarray          # R(y, i, y, j)
    r1: np.ndarray         # R(y, i, y, j; y)
    r2: np.ndarray         # R(y, i, y, j; y, y)
    q: np.ndarray          # sum_p R(y, i, y, p) R(y, j, y, p)
    e: np.ndarray          # tangent frame (N, d, n)


def _contract(jet: CurvatureJet, Y: np.ndarray) -> _Contractions:
    if jet.dd_riemann is None or jet.d_riemann is None:
        raise CapabilityError("curvature jet lacks the derivative orders this expansion needs")
    r = np.einsum("pa,aibj,pb->pij", Y, jet.riemann, Y)
    r1 = np.einsum("pa,aibjc,pb,pc->pij", Y, jet.d_riemann, Y, Y)
    r2 = np.einsum("pa,aibjcd,pb,pc,pd->pij", Y, jet.dd_riemann, Y, Y, Y)
    q = np.einsum("pik,pjk->pij", r, r)
    e = adapted_frame(Y)[:, :, :-1]
    return _Contractions(r, r1, r2, q, e)


def _tangent(c: _Contractions, M: np.ndarray) -> np.ndarray:
    return np.einsum("pia,pij,pjb->pab", c.e, M, c.e)


def _as_stack(y) -> tuple[np.ndarray, bool]:
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = np.atleast_2d(y)
    if np.abs(np.linalg.norm(Y, axis=1) - 1).max() > 1e-10:
        raise DomainError("directions must be unit vectors")
    return Y, single


def _perturbation_terms(phi: SphereField, Y: np.ndarray) -> np.ndarray:
    """``(1/n)(n + Laplacian) phi`` evaluated at directions ``Y``."""
    basis = phi.basis
    n = basis.n
    vals = basis.evaluate(Y)[0]
    return vals @ ((n + basis.eigenvalues) * phi.coeffs) / n


def coefficients(kind, jet: CurvatureJet, y, phi: SphereField | None = None,
                 spec: CurvatureSpec | None = None) -> dict[int, np.ndarray]:
    """Coefficient fields ``{order: value}`` of an expansion at directions ``y``."""
    kind = ExpansionKind(kind)
    Y, single = _as_stack(y)
    if Y.shape[1] != jet.dim:
        raise DomainError("direction dimension does not match the jet")
    n = jet.n
    c = _contract(jet, Y)
    N, d = Y.shape
    idd = np.broadcast_to(np.eye(d), (N, d, d))
    idn = np.broadcast_to(np.eye(n), (N, n, n))
    if kind is ExpansionKind.METRIC:
        out = {0: idd.copy(), 2: c.r / 3, 3: c.r1 / 6, 4: c.r2 / 20 + 2 * c.q / 45}
    elif kind is ExpansionKind.CURVATURE_W:
        out = {0: np.zeros_like(idd), 2: c.r.copy(), 3: c.r1.copy(), 4: c.r2 / 2 + c.q / 3}
    elif kind is ExpansionKind.SECOND_FF:
        out = {0: idn.copy(), 2: _tangent(c, 2 * c.r / 3), 3: _tangent(c, 5 * c.r1 / 12),
               4: _tangent(c, 3 * c.r2 / 20 + 6 * c.q / 45)}
    elif kind is ExpansionKind.SHAPE_OPERATOR:
        out = {0: idn.copy(), 2: _tangent(c, c.r / 3), 3: _tangent(c, c.r1 / 4),
               4: _tangent(c, c.r2 / 10 - c.q / 45)}
    elif kind is ExpansionKind.CHRISTOFFEL_DIAG:
        # G[k, i] = Gamma^k_ii
        r_yiki = np.einsum("pa,aiki->pki", Y, jet.riemann)
        r_yiki_y = np.einsum("pa,aikic,pc->pki", Y, jet.d_riemann, Y)
        r_yiyi_k = np.einsum("pa,aibik,pb->pki", Y, jet.d_riemann, Y)
        out = {0: np.zeros((N, d, d)), 2: -2 * r_yiki / 3, 3: -r_yiki_y / 2 + r_yiyi_k / 12}
    elif kind is ExpansionKind.K_CURVATURE:
        ric = np.einsum("pa,ab,pb->p", Y, jet.ricci, Y)
        ric1 = np.einsum("abc,pa,pb,pc->p", jet.d_ricci, Y, Y, Y)
        ric2 = np.einsum("abcd,pa,pb,pc,pd->p", jet.dd_ricci, Y, Y, Y, Y)
        qq = np.einsum("pij,pij->p", c.r, c.r)
        rt = _tangent(c, c.r)
        if spec is None:
            raise DomainError("K_curvature needs a curvature spec")
        if spec.n != n:
            raise DomainError("curvature spec dimension does not match the jet")
        ident = np.eye(n)
        d2k = np.array([spec.matrix_second_derivative(ident, m, m) for m in rt])
        out = {0: np.ones(N), 2: -ric / 3, 3: -ric1 / 4, 4: -ric2 / 10 - qq / (45 * n) + d2k / 18}
    else:  # K_PERTURBED
        ric = np.einsum("pa,ab,pb->p", Y, jet.ricci, Y)
        ric1 = np.einsum("abc,pa,pb,pc->p", jet.d_ricci, Y, Y, Y)
        helm = np.zeros(N) if phi is None else _perturbation_terms(phi, Y)
        out = {0: np.ones(N), 2: -(ric / 3 + helm), 3: -ric1 / 4}
    if single:
        out = {k: v[0] for k, v in out.items()}
    return out


def predict(kind, jet: CurvatureJet, t: float, y, phi: SphereField | None = None,
            spec: CurvatureSpec | None = None):
    """Truncated expansion of ``kind`` at scale ``t`` and direction(s) ``y``."""
    coef = coefficients(kind, jet, y, phi=phi, spec=spec)
    return sum(t**k * v for k, v in coef.items())


# ---------------------------------------------------------------------------
# numerical counterparts
# ---------------------------------------------------------------------------

def numeric(kind, family: MetricFamily, jet: CurvatureJet, t: float, y,
            phi: SphereField | None = None, spec: CurvatureSpec | None = None,
            steps: int = DEFAULT_STEPS):
    """Numerically computed quantity matching :func:`predict` for the same inputs.

    For ``K_perturbed`` the directions are ignored and the quantity is
    returned at the nodes of ``phi``'s grid.
    """
    kind = ExpansionKind(kind)
    x, E = jet.x, jet.frame
    if kind is ExpansionKind.K_PERTURBED:
        if phi is None or spec is None:
            raise DomainError("K_perturbed needs a perturbation field and a curvature spec")
        imm = immerse(family, CenteredSphere(t, x, phi, E), steps=steps)
        return k_values(spec, imm)
    Y, single = _as_stack(y)
    if kind is ExpansionKind.METRIC:
        out = pullback_metric(family, x, t, Y, frame=E, adapted=False, steps=steps)
    elif kind in (ExpansionKind.CURVATURE_W, ExpansionKind.CHRISTOFFEL_DIAG):
        X, J, H = exp_map_batch(family, x, t * Y, E, steps=steps,
                                second=kind is ExpansionKind.CHRISTOFFEL_DIAG)
        family.check_domain(X)
        if kind is ExpansionKind.CURVATURE_W:
            R = riemann_at(family, X)
            Jy = np.einsum("pia,pa->pi", J, Y)
            out = t * t * np.einsum("pabcd,pa,pbi,pc,pdj->pij", R, Jy, J, Jy, J)
        else:
            gam = christoffel_from_gradient(family.u_derivatives(X, 1)[1])
            full = H + np.einsum("pkij,pia,pjb->pkab", gam, J, J)
            gt = np.linalg.solve(J, full.reshape(len(Y), family.dim, -1)).reshape(full.shape)
            out = t * np.einsum("pkii->pki", gt)
    else:
        N = len(Y)
        imm = immerse_radial(family, x, E, Y, t, np.full(N, t), np.zeros((N, family.dim)),
                             np.zeros((N, family.dim, family.dim)), steps=steps)
        if kind is ExpansionKind.SECOND_FF:
            out = imm.second_ff
        elif kind is ExpansionKind.SHAPE_OPERATOR:
            out = imm.shape
        else:
            if spec is None:
                raise DomainError("K_curvature needs a curvature spec")
            out = k_values(spec, imm)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# order fits
# ---------------------------------------------------------------------------

@dataclass
class OrderFit:
    """Log-log fit of ``sup |numeric - oracle|`` against ``t``."""

    t: np.ndarray
    residual: np.ndarray
    noise: np.ndarray
    used: np.ndarray
    slope: float
    intercept: float
    correlation: float
    window: tuple[float, float] | None
    inconclusive: bool
    truncated: bool
    label: str = ""
    meta: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [{"label": self.label, "t": float(t), "residual": float(r), "noise": float(z),
                 "used": bool(u), "slope": self.slope}
                for t, r, z, u in zip(self.t, self.residual, self.noise, self.used)]

    def to_csv(self, path) -> None:
        write_fits_csv(path, [self])

    def to_dict(self) -> dict:
        return {"label": self.label, "t": self.t.tolist(), "residual": self.residual.tolist(),
                "noise": self.noise.tolist(), "used": self.used.tolist(), "slope": self.slope,
                "correlation": self.correlation, "window": self.window,
                "inconclusive": self.inconclusive, "truncated": self.truncated, **self.meta}


def write_fits_csv(path, fits: Sequence[OrderFit]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["label", "t", "residual", "noise", "used", "slope"])
        w.writeheader()
        for f in fits:
            w.writerows(f.rows())


def default_samples(count: int = 8) -> np.ndarray:
    return np.logspace(-1.5, -0.5, count)


def order_fit(numeric: Callable[[float], np.ndarray], oracle: Callable[[float], np.ndarray],
              t_samples: Sequence[float] | None = None,
              noise_floor: float | Callable[[float], float] | None = None,
              label: str = "") -> OrderFit:
    """Estimate ``p`` in ``sup |numeric(t) - oracle(t)| = C t^p``.

    Only samples whose residual exceeds ten times the noise floor enter the
    fit. The default floor is ``1e3`` machine epsilons relative to the size of
    the oracle. If fewer than two samples survive the result is flagged
    inconclusive with a NaN slope.
    """
    ts = np.asarray(default_samples() if t_samples is None else t_samples, dtype=float)
    if len(ts) < 4:
        raise DomainError("an order fit needs at least four samples")
    if ts.min() <= 0 or ts.max() / ts.min() < 10 * (1 - 1e-12):
        raise DomainError("samples must be positive and span at least one decade")
    ts = np.sort(ts)
    res = np.empty(len(ts))
    noise = np.empty(len(ts))
    for i, t in enumerate(ts):
        num = np.asarray(numeric(t), dtype=float)
        orc = np.asarray(oracle(t), dtype=float)
        res[i] = float(np.abs(num - orc).max())
        if noise_floor is None:
            noise[i] = 1e3 * np.finfo(float).eps * max(1.0, float(np.abs(orc).max()))
        elif callable(noise_floor):
            noise[i] = float(noise_floor(t))
        else:
            noise[i] = float(noise_floor)
    used = res > 10 * noise
    truncated = bool((~used).any())
    if used.sum() < 2:
        return OrderFit(ts, res, noise, used, float("nan"), float("nan"), float("nan"), None,
                        True, truncated, label)
    lt, lr = np.log(ts[used]), np.log(res[used])
    slope, intercept = np.polyfit(lt, lr, 1)
    corr = float(np.corrcoef(lt, lr)[0, 1])
    window = (float(ts[used].min()), float(ts[used].max()))
    return OrderFit(ts, res, noise, used, float(slope), float(intercept), corr, window,
                    False, truncated, label)


def expansion_fit(kind, family: MetricFamily, jet: CurvatureJet, y,
                  t_samples: Sequence[float] | None = None, phi: SphereField | None = None,
                  spec: CurvatureSpec | None = None, steps: int = DEFAULT_STEPS) -> OrderFit:
    """Order fit of an expansion against its numerical counterpart.

    The noise floor at each ``t`` is the change of the numerical quantity when
    the integrator step count is doubled, plus a round-off allowance.
    """
    kind = ExpansionKind(kind)
    if kind is ExpansionKind.K_PERTURBED:
        if phi is None:
            raise DomainError("K_perturbed needs a perturbation field")
        nodes = phi.basis.grid.nodes
        oracle = lambda t: predict(kind, jet, t, nodes, phi=phi, spec=spec)  # noqa: E731
    else:
        oracle = lambda t: predict(kind, jet, t, y, phi=phi, spec=spec)  # noqa: E731
    num = lambda t: numeric(kind, family, jet, t, y, phi=phi, spec=spec, steps=steps)  # noqa: E731

    def noise(t):
        a = num(t)
        b = numeric(kind, family, jet, t, y, phi=phi, spec=spec, steps=2 * steps)
        return float(np.abs(a - b).max()) + 1e3 * np.finfo(float).eps * max(1.0, float(np.abs(a).max()))

    fit = order_fit(num, oracle, t_samples, noise_floor=noise, label=kind.value)
    fit.meta["kind"] = kind.value
    return fit
