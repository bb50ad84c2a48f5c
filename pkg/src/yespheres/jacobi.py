"""Rescaled Jacobi operators of centred spheres: assembly, spectrum, signature.

The operator acts on normal variations. A normal displacement ``psi`` (in
rescaled length) of a radial graph corresponds, to first order, to the radius
variation ``psi / mu`` where ``mu`` is the normal component of the unit radial
vector. The rescaled residual is ``t`` times the geometric one, so

    J_t psi = t * D(residual)[psi / mu],

which on the Euclidean unit sphere reduces to ``-(1/n)(n + Laplacian)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import schur

from .curvature_functions import CurvatureSpec
from .errors import AssemblyError, DomainError
from .expansions import OrderFit, order_fit
from .families import MetricFamily
from .geometry import curvature_jet
from .immersion import DEFAULT_STEPS, CenteredSphere, local_linearization
from .spectral import HarmonicBasis, SphereField
from .ye import (ContinuationConfig, CriticalPoint, SearchConfig, YeBranch, critical_points,
                 phi0, phi1, solve_ye)


@dataclass
class JacobiMatrix:
    """Matrix of ``J_t`` on the harmonic basis (column ``j`` is the image of ``h_j``)."""

    matrix: np.ndarray
    t: float
    rel_step: float
    sphere: CenteredSphere
    basis: HarmonicBasis
    mu: np.ndarray
    consistency: float = float("nan")

    @property
    def n(self) -> int:
        return self.basis.n


def _jacobi(spec, family, sph, basis, rel_step, steps):
    s, gs, hs = sph.radius_jets()
    lin = local_linearization(spec, family, sph.x, sph.resolved_frame(family), basis.grid.nodes,
                              sph.t, s, gs, hs, rel_step=rel_step, steps=steps)
    mu = lin.imm.radial_normal
    if np.any(mu <= 0):
        raise AssemblyError("radial direction is tangent to the surface at some node")
    w = basis.grid.weights
    B = basis.analyze(lin.basis_response(basis))
    M = np.einsum("pi,p,pj->ij", basis.values, w / mu, basis.values)
    return sph.t * B @ M, mu


def assemble_J(spec: CurvatureSpec, family: MetricFamily, sph: CenteredSphere,
               basis: HarmonicBasis | None = None, rel_step: float = 1e-3,
               steps: int = DEFAULT_STEPS, check: bool = True) -> JacobiMatrix:
    """Assemble ``J_t`` by differentiating the residual of the centred sphere.

    With ``check`` the assembly is repeated at twice the differencing step;
    a relative discrepancy above ``1e-6`` raises :class:`AssemblyError`.
    """
    basis = basis or sph.basis
    if basis is not sph.basis:
        raise DomainError("the Jacobi matrix must be assembled on the sphere's own basis")
    mat, mu = _jacobi(spec, family, sph, basis, rel_step, steps)
    cons = float("nan")
    if check:
        alt, _ = _jacobi(spec, family, sph, basis, 2 * rel_step, steps)
        cons = float(np.abs(alt - mat).max() / max(1.0, np.abs(mat).max()))
        if not np.isfinite(cons) or cons > 1e-6:
            raise AssemblyError(f"finite-difference response is not smooth (discrepancy {cons:.2e})")
    return JacobiMatrix(mat, sph.t, rel_step, sph, basis, mu, cons)


def flat_operator(basis: HarmonicBasis) -> np.ndarray:
    """Analytic matrix of ``-(1/n)(n + Laplacian)``."""
    n = basis.n
    return np.diag(-(n + basis.eigenvalues) / n)


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------

@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    negative_count: int
    signature: int
    zero_tol: float
    degenerate: bool
    near_kernel: np.ndarray | None
    gap_ok: bool
    gap_ratio: float
    near_kernel_eigs: np.ndarray | None = None
    conditioning: float = float("nan")

    def to_dict(self) -> dict:
        ev = self.eigenvalues
        return {"eigenvalues_real": ev.real.tolist(), "eigenvalues_imag": ev.imag.tolist(),
                "negative_count": self.negative_count, "signature": self.signature,
                "zero_tol": self.zero_tol, "degenerate": self.degenerate,
                "near_kernel": None if self.near_kernel is None else self.near_kernel.tolist(),
                "gap_ok": self.gap_ok, "gap_ratio": self.gap_ratio,
                "conditioning": self.conditioning}


def count_negative(eigs: np.ndarray, zero_tol: float) -> tuple[int, bool]:
    """Strictly negative real eigenvalues (with multiplicity) and a zero-eigenvalue flag."""
    eigs = np.asarray(eigs, dtype=complex)
    real = np.abs(eigs.imag) <= zero_tol
    neg = int(np.sum(real & (eigs.real < -zero_tol)))
    zero = bool(np.any(np.abs(eigs) <= zero_tol))
    return neg, zero


def signature_of(eigs: np.ndarray, zero_tol: float = 0.0) -> int:
    return (-1) ** count_negative(eigs, zero_tol)[0]


def default_zero_tol(t: float, hess: np.ndarray | None) -> float:
    """Scale-aware zero tolerance ``1e-3 t^4 |Hess R_f|``."""
    if hess is None:
        return 1e-10
    return 1e-3 * t**4 * float(np.linalg.norm(hess, 2))


def near_kernel_block(jm: JacobiMatrix | np.ndarray, basis: HarmonicBasis | None = None,
                      gap_factor: float = 10.0):
    """Matrix of ``J_t`` on the invariant subspace continuing degree 1.

    Returns ``(a_t, gap_ok, gap_ratio, conditioning)``. The subspace is
    spanned by the ``n + 1`` Schur vectors of smallest ``|lambda|`` and
    is expressed in the basis obtained by projecting onto degree 1.
    """
    if isinstance(jm, JacobiMatrix):
        A, basis = jm.matrix, jm.basis
    else:
        A = np.asarray(jm, dtype=float)
    k = basis.n + 1
    mags = np.sort(np.abs(np.linalg.eigvals(A)))
    small, big = mags[k - 1], mags[k]
    ratio = float(big / max(small, 1e-300))
    thresh = np.sqrt(small * big) if small > 0 else 0.5 * big
    T, Z, sdim = schur(A, output="real", sort=lambda x, y: np.hypot(x, y) < thresh)
    if sdim != k:
        return None, False, ratio, float("inf")
    P1Q1 = Z[basis.indices(1), :k]
    cond = float(np.linalg.cond(P1Q1))
    a = P1Q1 @ T[:k, :k] @ np.linalg.inv(P1Q1)
    return a, bool(ratio >= gap_factor), ratio, cond


def spectrum(jm: JacobiMatrix, zero_tol: float | None = None) -> SpectrumReport:
    eigs = np.linalg.eigvals(jm.matrix)
    tol = 1e-10 if zero_tol is None else float(zero_tol)
    neg, zero = count_negative(eigs, tol)
    a, ok, ratio, cond = near_kernel_block(jm)
    return SpectrumReport(eigenvalues=eigs, negative_count=neg, signature=(-1) ** neg, zero_tol=tol,
                          degenerate=zero, near_kernel=a, gap_ok=ok, gap_ratio=ratio,
                          near_kernel_eigs=None if a is None else np.linalg.eigvals(a),
                          conditioning=cond)


# ---------------------------------------------------------------------------
# signature theorem
# ---------------------------------------------------------------------------

def predicted_signature(n: int, p: CriticalPoint) -> int:
    return -((-1) ** (n + 1)) * p.hess_sign


def fourth_order_prediction(n: int, p: CriticalPoint) -> np.ndarray:
    """``(n+1)/(2(n+3)) Hess R_f(p)``."""
    return (n + 1) / (2 * (n + 3)) * p.hessian


def _relative_eig_error(a: np.ndarray, ref: np.ndarray) -> float:
    ea = np.sort(np.linalg.eigvals(a).real)
    er = np.sort(np.linalg.eigvalsh(ref))
    return float(np.max(np.abs(ea - er) / np.abs(er)))


@dataclass
class Probe:
    t: float
    report: SpectrumReport
    norm: float
    noise: float


@dataclass
class SignatureVerdict:
    """Outcome of a signature check at one critical point."""

    point: CriticalPoint
    predicted: int
    computed: int | None
    t_used: float | None
    agree: bool | None
    inconclusive: bool
    eig_rel_error: float | None
    decay: OrderFit | None
    probes: list[Probe] = field(default_factory=list)
    eig_rel_error_flipped: float | None = None

    def to_dict(self) -> dict:
        return {"location": self.point.location.tolist(), "morse_index": self.point.morse_index,
                "predicted": self.predicted, "computed": self.computed, "t_used": self.t_used,
                "agree": self.agree, "inconclusive": self.inconclusive,
                "eig_rel_error": self.eig_rel_error,
                "eig_rel_error_flipped": self.eig_rel_error_flipped,
                "decay_slope": None if self.decay is None else self.decay.slope,
                "probes": [{"t": q.t, "norm": q.norm, "noise": q.noise,
                            "signature": q.report.signature, "gap_ok": q.report.gap_ok}
                           for q in self.probes]}


def probe_spheres(branch: YeBranch, t_min: float = 0.0) -> list:
    return [bp for bp in branch.points if bp.t >= t_min]


def signature_check(spec: CurvatureSpec, family: MetricFamily, branch: YeBranch, p: CriticalPoint,
                    t_min: float = 0.0, max_probes: int = 8, steps: int = DEFAULT_STEPS) -> SignatureVerdict:
    """Compare the computed signature along a branch with the Morse prediction.

    Probes up to ``max_probes`` accepted branch points with ``t >= t_min``
    (log-spaced). The signature is taken at the largest probed ``t`` with a
    valid spectral gap. The decay of ``|a_t|`` is fitted against ``t`` with a
    noise floor from step-doubled assembly.
    """
    n = spec.n
    pred = predicted_signature(n, p)
    pts = probe_spheres(branch, t_min)
    if len(pts) > max_probes:
        idx = np.unique(np.round(np.linspace(0, len(pts) - 1, max_probes)).astype(int))
        pts = [pts[i] for i in idx]
    probes: list[Probe] = []
    for bp in pts:
        sph = bp.sphere()
        jm = assemble_J(spec, family, sph, check=False, steps=steps)
        rep = spectrum(jm, default_zero_tol(bp.t, p.hessian))
        alt = assemble_J(spec, family, sph, rel_step=2 * jm.rel_step, check=False, steps=steps)
        a2, _, _, _ = near_kernel_block(alt)
        if rep.near_kernel is None or a2 is None:
            probes.append(Probe(bp.t, rep, float("nan"), float("inf")))
            continue
        noise = float(np.abs(rep.near_kernel - a2).max()) + 1e-13
        probes.append(Probe(bp.t, rep, float(np.abs(rep.near_kernel).max()), noise))
    valid = [q for q in probes if q.report.gap_ok and not q.report.degenerate]
    if not valid:
        return SignatureVerdict(p, pred, None, None, None, True, None, None, probes)
    top = valid[-1]
    small = valid[0]
    scaled = small.report.near_kernel / small.t**4
    err = _relative_eig_error(scaled, fourth_order_prediction(n, p))
    err_flip = _relative_eig_error(scaled, -fourth_order_prediction(n, p))
    decay = None
    fit_pts = [q for q in valid if np.isfinite(q.norm)]
    if len(fit_pts) >= 4 and fit_pts[-1].t / fit_pts[0].t >= 10 * (1 - 1e-9):
        table = {q.t: q for q in fit_pts}
        decay = order_fit(lambda t: table[t].norm, lambda t: 0.0, list(table),
                          noise_floor=lambda t: table[t].noise, label="near_kernel")
    return SignatureVerdict(p, pred, top.report.signature, top.t, top.report.signature == pred,
                            False, err, decay, probes, err_flip)


# ---------------------------------------------------------------------------
# census
# ---------------------------------------------------------------------------

@dataclass
class CensusReport:
    verdicts: list[SignatureVerdict]
    predicted_sum: int
    computed_sum: int | None
    euler_characteristic: int
    expected_sum: int
    agree: bool

    def to_dict(self) -> dict:
        return {"verdicts": [v.to_dict() for v in self.verdicts], "predicted_sum": self.predicted_sum,
                "computed_sum": self.computed_sum, "euler_characteristic": self.euler_characteristic,
                "expected_sum": self.expected_sum, "agree": self.agree}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["point", "location", "morse_index", "predicted", "computed", "verdict"])
            for i, v in enumerate(self.verdicts):
                verdict = "inconclusive" if v.inconclusive else ("pass" if v.agree else "fail")
                w.writerow([i, " ".join(f"{c:.12g}" for c in v.point.location), v.point.morse_index,
                            v.predicted, v.computed, verdict])


def euler_census(spec: CurvatureSpec, family: MetricFamily, search: SearchConfig | None,
                 t_probe: float, basis: HarmonicBasis, continuation: ContinuationConfig | None = None,
                 t_min: float = 0.0, points: list[CriticalPoint] | None = None) -> CensusReport:
    """Sum of computed signatures over all critical points of ``R_f``.

    Raises
    ------
    DomainError
        If any critical point is degenerate (the offender is named).
    """
    cps = points if points is not None else critical_points(family, search)
    for c in cps:
        if c.degenerate:
            raise DomainError(f"degenerate critical point at {c.location.tolist()}; census aborted")
    n = spec.n
    verdicts = []
    for c in cps:
        br = solve_ye(spec, family, c, t_probe, basis, continuation)
        verdicts.append(signature_check(spec, family, br, c, t_min=t_min, max_probes=3))
    chi = int(sum(c.hess_sign for c in cps))
    expected = -((-1) ** (n + 1)) * chi
    pred_sum = int(sum(v.predicted for v in verdicts))
    comp = None if any(v.computed is None for v in verdicts) else int(sum(v.computed for v in verdicts))
    return CensusReport(verdicts, pred_sum, comp, chi, expected,
                        bool(comp == expected and all(v.agree for v in verdicts)))


# ---------------------------------------------------------------------------
# second-order action on degree 1
# ---------------------------------------------------------------------------

@dataclass
class SecondOrderCheck:
    degree_one: float
    relative_error: float
    coefficient: np.ndarray
    prediction: np.ndarray


def second_order_action(spec: CurvatureSpec, family: MetricFamily, x, basis: HarmonicBasis,
                        t_samples=(0.01, 0.015, 0.02, 0.025, 0.03), steps: int = DEFAULT_STEPS):
    """Extract the ``t^2`` coefficient of ``J_t`` on degree 1 and compare with the prediction.

    Uses seeded spheres ``(t, x, phi_0 + t phi_1)`` and a polynomial fit in
    ``t`` of ``J_t h`` for each degree-1 basis function ``h``. The prediction
    is ``-(4(n+3)/(3(n+2))) Pi_3(Ric_yy h)``.
    """
    n = basis.n
    jet = curvature_jet(family, x)
    s0, s1 = phi0(jet, basis), phi1(jet, basis)
    i1 = basis.indices(1)
    cols = []
    ts = np.asarray(t_samples, float)
    for t in ts:
        sph = CenteredSphere(t, jet.x, s0 + t * s1, jet.frame)
        jm = assemble_J(spec, family, sph, check=False, steps=steps)
        cols.append(jm.matrix[:, i1])
    cols = np.array(cols)                                     # (T, F, n+1)
    # J_t h = t^2 A2 h + t^3 A3 h + ... on degree 1
    V = np.stack([ts**k for k in range(2, 2 + len(ts))], 1)
    coef = np.linalg.solve(V, cols.reshape(len(ts), -1))[0].reshape(cols.shape[1:])
    Y = basis.grid.nodes
    ric = np.einsum("pa,ab,pb->p", Y, jet.ricci, Y)
    prod = basis.analyze(ric[:, None] * basis.values[:, i1])
    pred = np.where((basis.degrees == 3)[:, None], prod, 0.0) * (-4 * (n + 3) / (3 * (n + 2)))
    deg1 = float(np.abs(coef[i1]).max())
    # the prediction vanishes identically when Ric is pure trace (n = 1)
    scale = max(float(np.abs(pred).max()), 4 * (n + 3) / (3 * (n + 2)) * float(np.abs(jet.ricci).max()),
                1e-300)
    rel = float(np.abs(coef - pred).max() / scale)
    return SecondOrderCheck(deg1, rel, coef, pred)
