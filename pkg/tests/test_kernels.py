import numpy as np
import pytest

from yespheres import _config
from yespheres.families import MetricFamily, conformal_perturbation, round_sphere
from yespheres.geometry import base_frame
from yespheres.kernels import variations


@pytest.mark.parametrize("fam", [round_sphere(3), conformal_perturbation(3, seed=2, amplitude=0.2),
                                 conformal_perturbation(2, seed=4, kappa=-0.5)])
def test_numba_matches_numpy(fam, rng):
    x = rng.uniform(-0.3, 0.3, fam.dim)
    E = base_frame(fam, x)
    V = 0.3 * rng.normal(size=(7, fam.dim))
    a = variations(fam, x, V, E, steps=32, force_backend="numba")
    b = variations(fam, x, V, E, steps=32, force_backend="numpy")
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=0, atol=1e-13)


def test_expression_family_uses_numpy_path(rng):
    fam = MetricFamily(dim=2, u_expr="0.1*cos(y1)*sin(y2)")
    assert not fam.kernel_compatible
    x = np.array([0.1, 0.0])
    X, J, H = variations(fam, x, 0.2 * rng.normal(size=(3, 2)), base_frame(fam, x), steps=16)
    assert X.shape == (3, 2) and J.shape == (3, 2, 2) and H.shape == (3, 2, 2, 2)


def test_jacobian_agrees_with_endpoint_differences(rng):
    fam = conformal_perturbation(3, seed=0, amplitude=0.3)
    x = np.array([0.1, 0.2, -0.1])
    E = base_frame(fam, x)
    v = 0.4 * rng.normal(size=3)
    X, J, H = variations(fam, x, v[None] @ E.T, E, steps=64)
    h = 1e-5
    fd = np.stack([(variations(fam, x, (v + h * e)[None] @ E.T, E, steps=64, second=False)[0][0]
                    - variations(fam, x, (v - h * e)[None] @ E.T, E, steps=64, second=False)[0][0])
                   / (2 * h) for e in np.eye(3)], 1)
    np.testing.assert_allclose(J[0], fd, atol=1e-8)
    fd2 = np.stack([(variations(fam, x, (v + h * e)[None] @ E.T, E, steps=64, second=False)[1][0]
                     - variations(fam, x, (v - h * e)[None] @ E.T, E, steps=64, second=False)[1][0])
                    / (2 * h) for e in np.eye(3)], -1)
    np.testing.assert_allclose(H[0], fd2, atol=1e-7)


def test_backend_switch(monkeypatch):
    monkeypatch.setenv("YESPHERES_BACKEND", "numpy")
    assert _config.backend() == "numpy"
    monkeypatch.setenv("YESPHERES_BACKEND", "NUMBA")
    assert _config.backend() == "numba"
    monkeypatch.setenv("YESPHERES_BACKEND", "fortran")
    with pytest.raises(ValueError):
        _config.backend()


def test_cache_dir(monkeypatch, tmp_path):
    monkeypatch.delenv("YESPHERES_CACHE_DIR", raising=False)
    assert _config.cache_dir() is None
    monkeypatch.setenv("YESPHERES_CACHE_DIR", str(tmp_path / "c"))
    assert _config.cache_dir().is_dir()


def test_immersion_identical_across_backends(monkeypatch, basis2):
    from yespheres.curvature_functions import mean_curvature
    from yespheres.immersion import CenteredSphere, immerse, k_values
    from yespheres.spectral import SphereField

    fam = conformal_perturbation(3, seed=0)
    sph = CenteredSphere(0.2, np.full(3, 0.1), SphereField.zeros(basis2))
    out = {}
    for name in ("numba", "numpy"):
        monkeypatch.setenv("YESPHERES_BACKEND", name)
        out[name] = k_values(mean_curvature(2), immerse(fam, sph))
    np.testing.assert_allclose(out["numba"], out["numpy"], rtol=0, atol=1e-13)
