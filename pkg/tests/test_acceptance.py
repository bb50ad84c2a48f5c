"""Acceptance suite: one test group per criterion, each printing a PASS/FAIL line.

Two sub-checks are strict expected failures, with the analysis recorded in the
project's decisions ledger:

* the centre-drift slope on the literal cos*cos torus, whose drift vanishes
  identically by point symmetry (the fit has no samples above the noise floor);
  the same statement is asserted on a tilted prescribing function;
* the fourth-order coefficient compared with ``+(n+1)/(2(n+3)) Hess R_f``;
  the computed block matches the opposite sign, which is the sign forced by
  the residual and the only one consistent with the signature rule.
"""
import itertools
import time

import numpy as np
import pytest

from conftest import unit_vectors
from yespheres.curvature_functions import (extrinsic_curvature, mean_curvature, power_mean,
                                           sigma_quotient, verify_axioms)
from yespheres.expansions import FIFTH_ORDER, ExpansionKind, expansion_fit
from yespheres.families import MetricFamily, conformal_perturbation, flat_torus
from yespheres.geometry import curvature_jet
from yespheres.immersion import CenteredSphere, immerse, k_values
from yespheres.jacobi import euler_census, predicted_signature, signature_check
from yespheres.scenario import preset
from yespheres.spectral import (SphereField, build_basis, build_grid, helmholtz_solve, moment2,
                                moment4, standard_basis)
from yespheres.ye import (SearchConfig, critical_points, degree_one_part, phi0, phi0_rhs, phi1,
                          phi1_rhs, solve_ye)

COSCOS = "cos(2*pi*y1)*cos(2*pi*y2)"
TILTED = COSCOS + " + 0.3*sin(2*pi*y1) + 0.2*sin(4*pi*y2)"
T_TARGET = 0.1
T_PROBE_MIN = 0.005


def slope(t, v, noise=None, t_min=0.0):
    t, v = np.asarray(t), np.asarray(v)
    m = (t >= t_min) & (v > (0 if noise is None else 10 * np.asarray(noise)))
    if m.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(t[m]), np.log(v[m]), 1)[0])


# ---------------------------------------------------------------------------
# 1. moment integrals
# ---------------------------------------------------------------------------

def test_c1_moment_integrals(verdict):
    start = time.perf_counter()
    worst = 0.0
    for n in (1, 2):
        g = build_grid(n, 8)
        X = g.nodes
        idx = range(n + 1)
        for i, j in itertools.product(idx, repeat=2):
            ref = moment2(n, i + 1, j + 1)
            val = g.integrate(X[:, i] * X[:, j])
            worst = max(worst, abs(val - ref) / abs(ref) if ref else abs(val))
        for i, j, k, l in itertools.product(idx, repeat=4):
            ref = moment4(n, i + 1, j + 1, k + 1, l + 1)
            val = g.integrate(X[:, i] * X[:, j] * X[:, k] * X[:, l])
            worst = max(worst, abs(val - ref) / abs(ref) if ref else abs(val))
    elapsed = time.perf_counter() - start
    ok = verdict("criterion 1 moment integrals", worst <= 1e-11 and elapsed < 1.0,
                 f"max rel err {worst:.1e}, {elapsed:.2f} s")
    assert ok


# ---------------------------------------------------------------------------
# 2. harmonic eigenvalues
# ---------------------------------------------------------------------------

def test_c2_harmonic_eigenvalues(verdict):
    start = time.perf_counter()
    worst = 0.0
    for n in (1, 2):
        b = build_basis(build_grid(n, 2 * 8 + 4), 8, use_cache=False)
        eig = np.sort(np.linalg.eigvals(b.laplacian_matrix()).real)[::-1]
        ref = np.sort(np.array([-k * (n + k - 1.0) for k in b.degrees]))[::-1]
        err = np.abs(eig - ref) / np.maximum(np.abs(ref), 1.0)
        worst = max(worst, float(err.max()))
    elapsed = time.perf_counter() - start
    ok = verdict("criterion 2 harmonic eigenvalues", worst <= 1e-8 and elapsed < 10.0,
                 f"max rel err {worst:.1e}, {elapsed:.2f} s")
    assert ok


# ---------------------------------------------------------------------------
# 3. space-form closed form
# ---------------------------------------------------------------------------

def test_c3_space_form_spheres(verdict):
    start = time.perf_counter()
    worst = 0.0
    ts = np.linspace(0.01, 0.5, 8)
    for n in (1, 2):
        b = standard_basis(n, 6)
        specs = (mean_curvature(n), extrinsic_curvature(n))
        for c in (1.0, -1.0):
            fam = MetricFamily(dim=n + 1, kappa=c)
            for t in ts:
                imm = immerse(fam, CenteredSphere(t, np.full(n + 1, 0.1), SphereField.zeros(b)))
                exact = t / np.tan(t) if c > 0 else t / np.tanh(t)
                for spec in specs:
                    worst = max(worst, float(np.abs(k_values(spec, imm) / exact - 1).max()))
    elapsed = time.perf_counter() - start
    ok = verdict("criterion 3 space-form K-curvature", worst <= 1e-7 and elapsed < 30.0,
                 f"max rel err {worst:.1e}, {elapsed:.2f} s")
    assert ok


# ---------------------------------------------------------------------------
# 4. expansion orders
# ---------------------------------------------------------------------------

def test_c4_expansion_orders(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    slopes = {}
    for n in (1, 2):
        fam = conformal_perturbation(n + 1, seed=0)
        jet = curvature_jet(fam, np.full(n + 1, 0.1))
        Y = unit_vectors(rng, 6, n + 1)
        b = standard_basis(n, 8)
        c = np.zeros(b.size)
        free = b.mask(exclude=(1,))
        c[free] = 0.3 * rng.normal(size=free.sum()) / (1.0 + b.degrees[free]) ** 2
        phi = SphereField(b, c)
        kinds = [k for k in FIFTH_ORDER if k is not ExpansionKind.CURVATURE_W] + [ExpansionKind.K_PERTURBED]
        for spec in (mean_curvature(n), extrinsic_curvature(n)):
            for kind in kinds:
                if kind not in (ExpansionKind.K_CURVATURE, ExpansionKind.K_PERTURBED) and spec.kind != "mean":
                    continue
                fit = expansion_fit(kind, fam, jet, Y, phi=phi, spec=spec)
                slopes[(n, kind.value, spec.kind)] = fit.slope
    elapsed = time.perf_counter() - start
    need = {k: (3.7 if k[1] == "K_perturbed" else 4.7) for k in slopes}
    bad = {k: v for k, v in slopes.items() if not v >= need[k]}
    low5 = min(v for k, v in slopes.items() if need[k] == 4.7)
    low4 = min(v for k, v in slopes.items() if need[k] == 3.7)
    ok = verdict("criterion 4 expansion orders", not bad and elapsed < 300,
                 f"min fifth-order slope {low5:.2f}, min fourth-order slope {low4:.2f}, {elapsed:.0f} s")
    assert ok, bad


# ---------------------------------------------------------------------------
# 5. phi_0 / phi_1 identities
# ---------------------------------------------------------------------------

def test_c5_seed_identities(verdict):
    start = time.perf_counter()
    closed, deg1, parity, bianchi = 0.0, 0.0, 0.0, 0.0
    for n in (1, 2):
        b = standard_basis(n, 8)
        for seed in (0, 1, 2):
            fam = conformal_perturbation(n + 1, seed=seed, amplitude=0.2, f_expr="y1 - 0.5*y2**2")
            jet = curvature_jet(fam, np.full(n + 1, 0.1))
            p0 = phi0(jet, b)
            closed = max(closed, float(np.abs(p0.coeffs - helmholtz_solve(phi0_rhs(jet, b), b).coeffs).max()))
            rhs = phi1_rhs(jet, b)
            deg1 = max(deg1, degree_one_part(rhs))
            p1 = phi1(jet, b)
            parity = max(parity, p0.parity_parts()[1].norm(), p1.parity_parts()[0].norm())
            # degree-1 projection of Ric_yy;y equals 2(n+1)/(n+3) grad R . y
            Y = b.grid.nodes
            cubic = np.einsum("abc,pa,pb,pc->p", jet.d_ricci, Y, Y, Y)
            proj = SphereField.from_values(b, cubic).component(1).values
            bianchi = max(bianchi, float(np.abs(proj - 2 * (n + 1) / (n + 3) * Y @ jet.d_scalar).max()))
    elapsed = time.perf_counter() - start
    ok = verdict("criterion 5 seed identities",
                 closed <= 1e-9 and deg1 <= 1e-8 and parity <= 1e-9 and bianchi <= 1e-9 and elapsed < 10,
                 f"closed form {closed:.1e}, degree-1 {deg1:.1e}, parity {parity:.1e}, "
                 f"projection {bianchi:.1e}, {elapsed:.2f} s")
    assert ok


# ---------------------------------------------------------------------------
# shared torus branches for criteria 6-8
# ---------------------------------------------------------------------------

def _branches(f_expr):
    fam = flat_torus(2, (1.0, 1.0), f_expr)
    basis = standard_basis(1)
    spec = mean_curvature(1)
    start = time.perf_counter()
    cps = critical_points(fam)
    branches = [solve_ye(spec, fam, c, T_TARGET, basis) for c in cps]
    return fam, spec, cps, branches, time.perf_counter() - start


@pytest.fixture(scope="module")
def literal():
    return _branches(COSCOS)


@pytest.fixture(scope="module")
def tilted():
    return _branches(TILTED)


@pytest.fixture(scope="module")
def literal_signatures(literal):
    fam, spec, cps, branches, _ = literal
    start = time.perf_counter()
    out = [signature_check(spec, fam, br, c, t_min=T_PROBE_MIN) for c, br in zip(cps, branches)]
    return out, time.perf_counter() - start


# ---------------------------------------------------------------------------
# 6. Ye branch
# ---------------------------------------------------------------------------

def _branch_stats(branches):
    res = max(float(br.residuals().max()) for br in branches)
    reach = min(br.final().t for br in branches)
    defect = min(slope(br.t, br.phi_defect()) for br in branches)
    drift = [slope(br.t, br.drift(), br.drift_noise(), t_min=0.01) for br in branches]
    return res, reach, defect, drift


def test_c6_branch_residual_and_defect(literal, verdict):
    _, _, cps, branches, elapsed = literal
    res, reach, defect, _ = _branch_stats(branches)
    ok = verdict("criterion 6 branch residual and phi-defect (literal torus)",
                 len(cps) == 8 and not any(c.degenerate for c in cps) and res <= 1e-8
                 and reach >= T_TARGET * (1 - 1e-12) and defect >= 3.7 and elapsed < 600,
                 f"{len(cps)} points, max residual {res:.1e}, min defect slope {defect:.2f}, {elapsed:.0f} s")
    assert ok


@pytest.mark.xfail(strict=True, reason="drift vanishes identically by the point symmetry of cos*cos")
def test_c6_drift_slope_literal(literal, verdict):
    _, _, _, branches, _ = literal
    drift = _branch_stats(branches)[3]
    worst = max(abs(br.drift()).max() for br in branches)
    ok = verdict("criterion 6 drift slope (literal torus, expected failure)",
                 all(1.8 <= s <= 2.3 for s in drift),
                 f"slopes {np.round(drift, 3).tolist()}, max drift {worst:.1e}")
    assert ok


def test_c6_drift_slope_tilted(tilted, verdict):
    _, _, cps, branches, elapsed = tilted
    res, reach, defect, drift = _branch_stats(branches)
    ok = verdict("criterion 6 drift slope (tilted torus)",
                 len(cps) == 8 and all(1.8 <= s <= 2.3 for s in drift) and res <= 1e-8
                 and defect >= 3.7 and reach >= T_TARGET * (1 - 1e-12),
                 f"drift slopes {min(drift):.3f}..{max(drift):.3f}, defect slope {defect:.2f}, {elapsed:.0f} s")
    assert ok


# ---------------------------------------------------------------------------
# 7. fourth-order coefficient
# ---------------------------------------------------------------------------

@pytest.mark.xfail(strict=True, reason="computed coefficient carries the opposite sign at extrema")
def test_c7_fourth_order_literal_sign(literal_signatures, verdict):
    verdicts, _ = literal_signatures
    errs = [v.eig_rel_error for v in verdicts]
    ok = verdict("criterion 7 fourth-order coefficient, +Hess sign (expected failure)",
                 all(e is not None and e <= 0.1 for e in errs),
                 f"max rel err {max(errs):.2f}")
    assert ok


def test_c7_fourth_order_magnitude_and_decay(literal_signatures, verdict):
    verdicts, elapsed = literal_signatures
    errs = [v.eig_rel_error_flipped for v in verdicts]
    slopes = [v.decay.slope if v.decay is not None else float("nan") for v in verdicts]
    ok = verdict("criterion 7 fourth-order coefficient, -Hess sign, and decay",
                 all(e is not None and e <= 0.1 for e in errs) and all(s >= 3.6 for s in slopes)
                 and elapsed < 900,
                 f"max rel err {max(errs):.1e}, min decay slope {min(slopes):.2f}, {elapsed:.0f} s")
    assert ok


# ---------------------------------------------------------------------------
# 8. signature theorem
# ---------------------------------------------------------------------------

def test_c8_signature_torus(literal, literal_signatures, verdict):
    _, spec, cps, _, _ = literal
    verdicts, _ = literal_signatures
    agree = all(v.agree for v in verdicts)
    total = sum(v.computed for v in verdicts)
    match = all(v.computed == predicted_signature(spec.n, c) for c, v in zip(cps, verdicts))
    ok = verdict("criterion 8 signature census on the torus", agree and match and total == 0,
                 f"computed sum {total}, expected 0")
    assert ok


def test_c8_signature_sphere(verdict):
    sc = preset("s2_round")
    fam, spec, basis = sc.family(), sc.curvature(), sc.basis()
    s = sc.config["search"]
    search = SearchConfig(bounds=tuple(tuple(b) for b in s["bounds"]), starts_per_axis=s["starts_per_axis"],
                          random_starts=s["random_starts"])
    start = time.perf_counter()
    rep = euler_census(spec, fam, search, sc.config["t_target"], basis, t_min=T_PROBE_MIN)
    elapsed = time.perf_counter() - start
    ok = verdict("criterion 8 signature census on the round sphere",
                 rep.agree and rep.computed_sum == -2 and len(rep.verdicts) == 4 and elapsed < 1200,
                 f"computed sum {rep.computed_sum}, expected -2, {elapsed:.0f} s")
    assert ok


# ---------------------------------------------------------------------------
# 9. axiom suite
# ---------------------------------------------------------------------------

def test_c9_axiom_suite(verdict):
    start = time.perf_counter()
    core = ("i", "ii", "iii", "iv", "v", "vi")
    failures = []
    for n in (1, 2, 3):
        specs = [mean_curvature(n), extrinsic_curvature(n)]
        specs += [sigma_quotient(n, k, l) for k in range(2, n + 1) for l in range(k)]
        for spec in specs:
            rep = verify_axioms(spec, samples=100, seed=n)
            need = core + (("vii",) if spec.kind in ("mean", "extrinsic") else ())
            if not rep.passed(*need):
                failures.append((spec.kind, n))
    counter = verify_axioms(power_mean(2), samples=100, seed=0)
    vi = counter.results["vi"]
    elapsed = time.perf_counter() - start
    ok = verdict("criterion 9 axiom suite",
                 not failures and not vi.passed and vi.witness is not None and elapsed < 30,
                 f"{len(failures)} failing specs, counterexample witness "
                 f"{'found' if vi.witness is not None else 'missing'}, {elapsed:.1f} s")
    assert ok, failures
