import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from yespheres.curvature_functions import extrinsic_curvature, mean_curvature
from yespheres.families import MetricFamily, conformal_perturbation, euclidean, flat_torus
from yespheres.immersion import CenteredSphere
from yespheres.jacobi import (assemble_J, count_negative, flat_operator, fourth_order_prediction,
                              near_kernel_block, predicted_signature, second_order_action,
                              signature_check, signature_of, spectrum)
from yespheres.spectral import SphereField, sphere_volume, standard_basis
from yespheres.ye import classify, critical_points, solve_ye


def test_signature_counting():
    assert signature_of(np.array([-2.0, -1.0, 3.0])) == 1
    assert signature_of(np.array([-2.0, 1.0, 3.0])) == -1
    # a complex pair with negative real part does not count
    eigs = np.array([-1 + 2j, -1 - 2j, 3.0])
    assert count_negative(eigs, 1e-12) == (0, False)
    assert signature_of(eigs) == 1
    neg, zero = count_negative(np.array([1e-14, -1.0]), 1e-10)
    assert neg == 1 and zero


@pytest.mark.parametrize("n,L", [(1, 12), (2, 6)])
@pytest.mark.parametrize("which", ["mean", "extrinsic"])
def test_flat_limit(n, L, which):
    b = standard_basis(n, L)
    spec = mean_curvature(n) if which == "mean" else extrinsic_curvature(n)
    jm = assemble_J(spec, euclidean(n + 1), CenteredSphere(0.3, np.zeros(n + 1), SphereField.zeros(b)))
    np.testing.assert_allclose(jm.matrix, flat_operator(b), atol=1e-9)
    assert jm.consistency < 1e-6


@pytest.mark.parametrize("n,L", [(1, 16), (2, 6)])
@pytest.mark.parametrize("c", [1.0, -1.0])
def test_near_kernel_vanishes_in_space_form(n, L, c):
    b = standard_basis(n, L)
    const = np.where(b.degrees == 0, -c / 3 * np.sqrt(sphere_volume(n)), 0.0)
    sph = CenteredSphere(0.2, np.full(n + 1, 0.1), SphereField(b, const))
    jm = assemble_J(mean_curvature(n), MetricFamily(dim=n + 1, kappa=c), sph)
    a, ok, ratio, _ = near_kernel_block(jm)
    assert ok and ratio > 1e6
    assert np.abs(a).max() < 1e-9


# distinct eigenvalues: a defective double eigenvalue is only sqrt(eps)-conditioned
@given(st.lists(st.floats(-1, 1).filter(lambda v: abs(v) > 0.05), min_size=2, max_size=2)
       .filter(lambda v: abs(v[0] - v[1]) > 0.1), st.integers(0, 100))
def test_near_kernel_block_recovers_small_block(small, seed):
    b = standard_basis(1, 6)
    rng = np.random.default_rng(seed)
    D = flat_operator(b).copy()
    i1 = b.indices(1)
    block = 1e-4 * np.array([[small[0], 0.3 * small[1]], [0.0, small[1]]])
    D[np.ix_(i1, i1)] = block
    S = np.eye(b.size) + 0.05 * rng.normal(size=(b.size, b.size))
    A = S @ D @ np.linalg.inv(S)
    a, ok, _, _ = near_kernel_block(A, b)
    assert ok
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(a).real), np.sort(np.linalg.eigvals(block).real),
                               rtol=1e-6, atol=1e-12)


def test_predicted_signature_rule():
    fam = flat_torus(2, (1.0, 1.0), "cos(2*pi*y1)*cos(2*pi*y2)")
    mx = classify(fam, np.zeros(2))
    sd = classify(fam, np.array([0.25, 0.25]))
    assert predicted_signature(1, mx) == -1 and predicted_signature(1, sd) == 1
    assert predicted_signature(2, mx) == 1
    np.testing.assert_allclose(fourth_order_prediction(1, mx), mx.hessian / 4)


def test_signature_on_torus_saddle(basis1):
    fam = flat_torus(2, (1.0, 1.0), "cos(2*pi*y1)*cos(2*pi*y2)")
    p = classify(fam, np.array([0.25, 0.25]))
    br = solve_ye(mean_curvature(1), fam, p, 0.08, basis1)
    v = signature_check(mean_curvature(1), fam, br, p, t_min=0.005, max_probes=5)
    assert v.agree and not v.inconclusive
    assert v.computed == predicted_signature(1, p)
    assert v.decay is not None and v.decay.slope >= 3.6
    # at a saddle the literal and the sign-flipped coefficient share eigenvalues
    assert v.eig_rel_error < 0.1 and v.eig_rel_error_flipped < 0.1
    rep = spectrum(assemble_J(mean_curvature(1), fam, br.final().sphere(), check=False))
    assert rep.to_dict()["gap_ok"]


def test_second_order_action_n1(basis1):
    fam = conformal_perturbation(2, seed=0, amplitude=0.2)
    chk = second_order_action(mean_curvature(1), fam, np.full(2, 0.1), basis1)
    assert chk.degree_one < 1e-5
    assert chk.relative_error < 1e-4
