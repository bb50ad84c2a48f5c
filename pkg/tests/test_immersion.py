import numpy as np
import pytest

from yespheres.curvature_functions import extrinsic_curvature, mean_curvature, sigma_quotient
from yespheres.errors import DomainError
from yespheres.families import MetricFamily, conformal_perturbation, flat_torus
from yespheres.geometry import base_frame
from yespheres.immersion import (CenteredSphere, immerse, immerse_radial, k_field, k_values,
                                 local_linearization, residual, residual_values)
from yespheres.spectral import SphereField


def space_form_k(t, c):
    if c > 0:
        r = np.sqrt(c) * t
        return r / np.tan(r)
    if c < 0:
        r = np.sqrt(-c) * t
        return r / np.tanh(r)
    return 1.0


def random_phi(basis, seed, scale=0.2):
    rng = np.random.default_rng(seed)
    c = scale * rng.normal(size=basis.size) / (1.0 + basis.degrees) ** 2
    c[basis.indices(1)] = 0
    return SphereField(basis, c)


@pytest.mark.parametrize("c", [1.0, -1.0, 0.5])
@pytest.mark.parametrize("t", [0.01, 0.2, 0.5])
def test_space_form_geodesic_spheres(c, t, basis2):
    fam = MetricFamily(dim=3, kappa=c)
    imm = immerse(fam, CenteredSphere(t, np.array([0.1, -0.2, 0.05]), SphereField.zeros(basis2)))
    target = space_form_k(t, c)
    for spec in (mean_curvature(2), extrinsic_curvature(2), sigma_quotient(2, 2, 1)):
        np.testing.assert_allclose(k_values(spec, imm), target, rtol=1e-9)
    np.testing.assert_allclose(imm.metric, np.broadcast_to(
        (np.sin(np.sqrt(c + 0j) * t) / (np.sqrt(c + 0j) * t)).real ** 2 * np.eye(2), imm.metric.shape),
        rtol=1e-9, atol=1e-11)


def test_shape_conjugate_has_true_eigenvalues(basis2):
    fam = conformal_perturbation(3, seed=0, amplitude=0.2)
    imm = immerse(fam, CenteredSphere(0.3, np.full(3, 0.1), random_phi(basis2, 0)))
    a = np.linalg.eigvalsh(imm.shape)
    b = np.sort(np.linalg.eigvals(imm.shape_true).real, axis=1)
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(imm.shape, imm.shape.transpose(0, 2, 1), atol=1e-14)


def test_frame_covariance(basis2):
    # rotating the frame and the nodes together leaves K unchanged
    fam = conformal_perturbation(3, seed=1, amplitude=0.3)
    x = np.array([0.1, 0.0, -0.1])
    E = base_frame(fam, x)
    theta = 0.7
    Q = np.array([[np.cos(theta), -np.sin(theta), 0], [np.sin(theta), np.cos(theta), 0], [0, 0, 1.0]])
    sph = CenteredSphere(0.2, x, SphereField.zeros(basis2), E)
    rot = CenteredSphere(0.2, x, SphereField.zeros(basis2), E @ Q)
    a = immerse(fam, sph)
    b = immerse(fam, rot)
    spec = mean_curvature(2)
    # node y in the rotated frame is the physical direction Q y in the original one
    ka = k_values(spec, a)
    kb = k_values(spec, b)
    nodes = basis2.grid.nodes @ Q.T
    s = np.full(len(nodes), 0.2)
    z = np.zeros((len(nodes), 3))
    c = immerse_radial(fam, x, E, nodes, 0.2, s, z, np.zeros((len(nodes), 3, 3)))
    np.testing.assert_allclose(kb, k_values(spec, c), atol=1e-11)
    np.testing.assert_allclose(b.positions, c.positions, atol=1e-13)
    assert np.abs(ka - kb).max() > 0  # the metric is not homogeneous


def test_diameter_bound(basis2):
    fam = conformal_perturbation(3, seed=2)
    t = 0.3
    sph = CenteredSphere(t, np.zeros(3), random_phi(basis2, 3, 0.1))
    imm = immerse(fam, sph)
    assert imm.diameter_bound <= 2.2 * t
    assert np.all(imm.radial_normal > 0)


def test_normal_expansion_order(basis2):
    fam = conformal_perturbation(3, seed=0)
    x = np.full(3, 0.1)
    phi = random_phi(basis2, 0)
    gphi = phi.jets()[1]
    ts = np.logspace(-1.5, -0.5, 6)
    err = []
    for t in ts:
        imm = immerse(fam, CenteredSphere(t, x, phi, base_frame(fam, x)))
        err.append(np.abs(imm.normals_in_frame() - (basis2.grid.nodes - t * t * gphi)).max())
    assert np.polyfit(np.log(ts), np.log(err), 1)[0] >= 2.7


@pytest.mark.parametrize("n", [1, 2])
def test_linearization_matches_finite_differences(n, bases):
    b = bases[n]
    fam = conformal_perturbation(n + 1, seed=0, f_expr="y1*y2")
    x = np.full(n + 1, 0.1)
    E = base_frame(fam, x)
    t = 0.2
    phi = random_phi(b, 0)
    sph = CenteredSphere(t, x, phi, E)
    s, gs, hs = sph.radius_jets()
    spec = mean_curvature(n)
    lin = local_linearization(spec, fam, x, E, b.grid.nodes, t, s, gs, hs)
    resp = lin.basis_response(b)
    j = b.indices(2)[0]
    eps = 2e-5

    def res(e):
        c = phi.coeffs.copy()
        c[j] += e / t**3
        return residual_values(spec, fam, immerse(fam, CenteredSphere(t, x, SphereField(b, c), E), check=False))

    fd = (res(eps) - res(-eps)) / (2 * eps)
    assert np.abs(fd - resp[:, j]).max() <= 1e-5 * np.abs(fd).max()


def test_residual_field_and_domain_errors(basis1_small):
    fam = flat_torus(2, (1.0, 1.0), "cos(2*pi*y1)")
    sph = CenteredSphere(0.1, np.zeros(2), SphereField.zeros(basis1_small))
    r = residual(mean_curvature(1), fam, sph)
    # flat circle of radius t: rescaled curvature is exactly 1
    np.testing.assert_allclose(r.values, -0.01 * np.cos(2 * np.pi * 0.1 * basis1_small.grid.nodes[:, 0]),
                               atol=1e-12)
    with pytest.raises(DomainError):
        immerse(fam, CenteredSphere(0.6, np.zeros(2), SphereField.zeros(basis1_small)))
    with pytest.raises(DomainError):
        CenteredSphere(-1.0, np.zeros(2), SphereField.zeros(basis1_small))
    bad = np.zeros(basis1_small.size)
    bad[basis1_small.indices(1)[0]] = 1.0
    with pytest.raises(DomainError, match="degree-one"):
        immerse(fam, CenteredSphere(0.1, np.zeros(2), SphereField(basis1_small, bad)))


def test_k_field_wrong_dimension(basis2):
    imm = immerse(MetricFamily(dim=3), CenteredSphere(0.1, np.zeros(3), SphereField.zeros(basis2)))
    with pytest.raises(DomainError):
        k_values(mean_curvature(1), imm)
    assert k_field(mean_curvature(2), imm, basis2).values == pytest.approx(1.0)


def test_csv_export(tmp_path, basis1_small):
    imm = immerse(MetricFamily(dim=2), CenteredSphere(0.1, np.zeros(2), SphereField.zeros(basis1_small)))
    path = tmp_path / "imm.csv"
    imm.to_csv(path, mean_curvature(1))
    lines = path.read_text().splitlines()
    assert len(lines) == basis1_small.grid.size + 1
