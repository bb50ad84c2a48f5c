import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from yespheres.errors import ConfigurationError, DomainError
from yespheres.families import (MetricFamily, conformal_perturbation, euclidean, flat_torus,
                                from_dict, hyperbolic, round_sphere)


def sample_points(rng, dim, count=4, scale=0.5):
    return rng.uniform(-scale, scale, size=(count, dim))


@pytest.mark.parametrize("make", [
    lambda: round_sphere(3),
    lambda: hyperbolic(3),
    lambda: conformal_perturbation(2, seed=3),
    lambda: conformal_perturbation(3, seed=1, kappa=0.5),
    lambda: MetricFamily(dim=2, u_expr="0.1*sin(y1)*cos(2*y2)"),
])
def test_analytic_derivatives_pass_self_test(make, rng):
    fam = make()
    assert fam.self_test(sample_points(rng, fam.dim)) < 1e-6


def test_space_form_conformal_factor():
    fam = round_sphere(2, radius=2.0)
    y = np.array([0.3, -0.4])
    assert fam.conformal_factor(y) == pytest.approx((1 + 0.25 * 0.25 / 4) ** -2)


def test_christoffel_is_levi_civita(rng):
    # Gamma^k_ij from the metric by finite differences of g
    fam = conformal_perturbation(3, seed=5, amplitude=0.2)
    x = rng.uniform(-0.5, 0.5, 3)
    h = 1e-5
    dg = np.stack([(fam.metric(x + h * e) - fam.metric(x - h * e)) / (2 * h) for e in np.eye(3)], -1)
    ginv = np.linalg.inv(fam.metric(x))
    # dg[a, b, m] = d_m g_ab
    ref = 0.5 * (np.einsum("kl,ljm->kmj", ginv, dg) + np.einsum("kl,lmj->kmj", ginv, dg)
                 - np.einsum("kl,mjl->kmj", ginv, dg))
    np.testing.assert_allclose(fam.christoffel(x), ref, atol=1e-8)


def test_hyperbolic_domain():
    fam = hyperbolic(2)
    assert fam.in_domain(np.array([1.0, 1.0]))
    assert not fam.in_domain(np.array([2.0, 0.5]))
    with pytest.raises(DomainError):
        fam.check_domain(np.array([[0.0, 0.0], [3.0, 0.0]]))


def test_injectivity_budgets():
    assert flat_torus(2, (1.0, 2.0)).injectivity_budget() == 0.5
    assert round_sphere(2, 2.0).injectivity_budget() == pytest.approx(2 * np.pi)
    assert np.isinf(euclidean(3).injectivity_budget())


def test_validation_errors():
    with pytest.raises(ConfigurationError):
        MetricFamily(dim=1)
    with pytest.raises(ConfigurationError):
        MetricFamily(dim=2, topology="klein_bottle")
    with pytest.raises(ConfigurationError):
        MetricFamily(dim=2, amplitudes=(0.1,), wavevectors=((1.0, 2.0, 3.0),), phases=(0.0,))
    with pytest.raises(ConfigurationError):
        flat_torus(2, (1.0,))


def test_seeded_family_deterministic():
    a, b = conformal_perturbation(3, seed=7), conformal_perturbation(3, seed=7)
    assert a.amplitudes == b.amplitudes and a.wavevectors == b.wavevectors
    assert conformal_perturbation(3, seed=8).amplitudes != a.amplitudes


@given(st.integers(0, 50))
def test_dict_round_trip(seed):
    fam = conformal_perturbation(2, seed=seed, f_expr="y1*y2")
    again = from_dict(fam.to_dict())
    p = np.array([0.2, -0.1])
    assert again.u_derivatives(p, 2)[2] == pytest.approx(fam.u_derivatives(p, 2)[2])
    assert again.f(p) == pytest.approx(fam.f(p))


def test_from_dict_rejects_unknown():
    with pytest.raises(ConfigurationError, match="unknown"):
        from_dict({"dim": 2, "kapa": 1.0})
