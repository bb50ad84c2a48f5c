import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from yespheres.errors import DomainError
from yespheres.families import (MetricFamily, conformal_perturbation, euclidean, flat_torus,
                                hyperbolic, round_sphere)
from yespheres.geometry import (adapted_frame, curvature_jet, exp_and_transport, pullback_metric,
                                riemann_at, scalar_jet)


def space_form_riemann(d, c):
    eye = np.eye(d)
    return c * (np.einsum("jk,il->ijkl", eye, eye) - np.einsum("ik,jl->ijkl", eye, eye))


def symbolic_curvature(u_text, x):
    """Ricci and scalar curvature of exp(2u) delta by brute-force symbolic Christoffels."""
    d = len(x)
    ys = sp.symbols(" ".join(f"y{i + 1}" for i in range(d)), real=True)
    u = sp.sympify(u_text, locals={f"y{i + 1}": ys[i] for i in range(d)})
    g = sp.exp(2 * u) * sp.eye(d)
    gi = sp.exp(-2 * u) * sp.eye(d)
    gam = [[[sum(gi[k, l] * (sp.diff(g[l, i], ys[j]) + sp.diff(g[l, j], ys[i]) - sp.diff(g[i, j], ys[l]))
                 for l in range(d)) / 2 for j in range(d)] for i in range(d)] for k in range(d)]
    ric = sp.zeros(d, d)
    for i in range(d):
        for j in range(d):
            ric[i, j] = sum(sp.diff(gam[k][i][j], ys[k]) - sp.diff(gam[k][i][k], ys[j])
                            + sum(gam[k][k][l] * gam[l][i][j] - gam[k][j][l] * gam[l][i][k]
                                  for l in range(d)) for k in range(d))
    scal = sum(gi[i, i] * ric[i, i] for i in range(d))
    sub = dict(zip(ys, x))
    R = sp.lambdify(ys, scal)
    grad = [sp.lambdify(ys, sp.diff(scal, y)) for y in ys]
    return (np.array(ric.subs(sub).evalf(), dtype=float), float(scal.subs(sub).evalf()),
            float(u.subs(sub).evalf()), R, grad)


@pytest.mark.parametrize("d,c", [(2, 1.0), (3, 1.0), (3, -1.0), (4, 0.25), (3, 0.0)])
def test_space_form_jets(d, c):
    fam = MetricFamily(dim=d, kappa=c)
    x = np.full(d, 0.15)
    jet = curvature_jet(fam, x)
    np.testing.assert_allclose(jet.riemann, space_form_riemann(d, c), atol=1e-13)
    np.testing.assert_allclose(jet.ricci, c * np.eye(d), atol=1e-13)
    assert jet.scalar == pytest.approx(c, abs=1e-13)
    assert np.abs(jet.d_riemann).max() < 1e-12
    assert np.abs(jet.dd_riemann).max() < 1e-11


@pytest.mark.parametrize("u_text,x", [
    ("0.2*cos(y1 + 2*y2) - 0.1*sin(y2)", [0.3, -0.2]),
    ("0.15*cos(y1 - y3) + 0.1*sin(2*y2 + y1)", [0.1, 0.2, -0.3]),
])
def test_curvature_against_symbolic_oracle(u_text, x):
    x = np.array(x)
    d = len(x)
    n = d - 1
    ric_std, scal_std, u0, _, grad = symbolic_curvature(u_text, x)
    jet = curvature_jet(MetricFamily(dim=d, u_expr=u_text), x)
    # orthonormal frame e^{-u} d_i, Ricci divided by n, scalar by n (n + 1)
    np.testing.assert_allclose(jet.ricci, np.exp(-2 * u0) * ric_std / n, atol=1e-11)
    assert jet.scalar == pytest.approx(scal_std / (n * (n + 1)), abs=1e-11)
    g_std = np.array([gf(*x) for gf in grad]) / (n * (n + 1))
    np.testing.assert_allclose(jet.d_scalar, np.exp(-u0) * g_std, atol=1e-10)


def test_mode_family_matches_expression_family():
    fam = conformal_perturbation(3, seed=2, amplitude=0.2)
    terms = [f"{a}*cos({w[0]}*y1 + {w[1]}*y2 + {w[2]}*y3 + {b})"
             for a, w, b in zip(fam.amplitudes, fam.wavevectors, fam.phases)]
    twin = MetricFamily(dim=3, u_expr=" + ".join(terms))
    x = np.array([0.1, -0.1, 0.2])
    a, b = curvature_jet(fam, x), curvature_jet(twin, x)
    np.testing.assert_allclose(a.dd_riemann, b.dd_riemann, atol=1e-9)


@given(st.integers(0, 30))
def test_symmetries_and_bianchi(seed):
    fam = conformal_perturbation(3, seed=seed, amplitude=0.2)
    jet = curvature_jet(fam, np.array([0.1, 0.05, -0.1]))
    scale = 1 + np.abs(jet.d_riemann).max()
    assert jet.symmetry_residual() < 1e-11 * scale
    assert jet.contracted_bianchi_residual() < 1e-11 * scale


def test_riemann_at_matches_jet(rng):
    fam = conformal_perturbation(3, seed=1, amplitude=0.3)
    x = rng.uniform(-0.3, 0.3, 3)
    u = fam.u_derivatives(x, 0)[0]
    R = riemann_at(fam, x[None])[0] * np.exp(-4 * u)
    np.testing.assert_allclose(R, curvature_jet(fam, x).riemann, atol=1e-13)


def test_hessian_of_f_is_covariant():
    fam = round_sphere(2, f_expr="y1**2 + 3*y2")
    x = np.array([0.4, -0.3])
    val, g, H = scalar_jet(fam, "f", x)
    assert val == pytest.approx(0.16 - 0.9)
    np.testing.assert_allclose(H, H.T, atol=1e-14)
    with pytest.raises(ValueError):
        scalar_jet(fam, "Q", x)


def test_rf_jet_combines_scalar_and_f():
    fam = conformal_perturbation(2, seed=0, f_expr="y1*y2")
    x = np.array([0.2, 0.1])
    jet = curvature_jet(fam, x)
    v, g, H = scalar_jet(fam, "R_f", x)
    c = jet.rf_coefficient
    assert c == pytest.approx(4.0)
    assert v == pytest.approx(jet.scalar + c * jet.f_value)
    np.testing.assert_allclose(H, jet.hess_scalar + c * jet.f_hess)


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1))
def test_adapted_frame_orthonormal(v):
    y = np.array(v) / np.linalg.norm(v)
    Q = adapted_frame(y)
    np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-14)
    np.testing.assert_allclose(Q[:, -1], y, atol=1e-15)


@pytest.mark.parametrize("length", [0.3, 1.0, 2.5])
def test_round_sphere_geodesic_from_origin(length):
    # stereographic chart of the unit sphere: |y| = 2 tan(L/2) along a ray from the origin
    fam = round_sphere(3)
    v = length * np.array([0.6, 0.0, 0.8])
    tr = exp_and_transport(fam, np.zeros(3), v)
    expected = 2 * np.tan(length / 2) * v / length
    np.testing.assert_allclose(tr.endpoint, expected, atol=1e-9)
    # transported frame remains orthonormal in the endpoint metric
    g = fam.metric(tr.endpoint)
    np.testing.assert_allclose(tr.frame.T @ g @ tr.frame, np.eye(3), atol=1e-9)
    assert tr.error_estimate < 1e-8


def test_hyperbolic_geodesic_from_origin():
    fam = hyperbolic(2)
    L = 1.2
    tr = exp_and_transport(fam, np.zeros(2), [L, 0.0])
    assert tr.endpoint[0] == pytest.approx(2 * np.tanh(L / 2), abs=1e-9)


def test_flat_exp_and_transport():
    fam = euclidean(2)
    tr = exp_and_transport(fam, [1.0, 2.0], [0.3, -0.4])
    np.testing.assert_allclose(tr.endpoint, [1.3, 1.6], atol=1e-14)
    np.testing.assert_allclose(tr.frame, np.eye(2), atol=1e-14)


def test_injectivity_guard():
    with pytest.raises(DomainError):
        exp_and_transport(flat_torus(2, (1.0, 1.0)), [0, 0], [0.6, 0.0])


def test_pullback_metric_space_form(rng):
    # normal coordinates on S^3: g_yy = 1, tangential block sin(t)^2/t^2
    fam = round_sphere(3)
    y = rng.normal(size=(4, 3))
    y /= np.linalg.norm(y, axis=1)[:, None]
    t = 0.4
    g = pullback_metric(fam, np.array([0.2, 0.0, -0.1]), t, y)
    expected = np.diag([(np.sin(t) / t) ** 2] * 2 + [1.0])
    for gi in g:
        np.testing.assert_allclose(gi, expected, atol=1e-9)
