import numpy as np
import pytest

from alignlab.errors import InvalidGridError
from alignlab.torus import (
    CommunicationKernel,
    Mollifier,
    TorusGeometry,
    bochner_square,
    constant_kernel,
    cosine_kernel,
    inverse_power_kernel,
    kernel_eval,
    mollifier_eval,
    periodic_displacement,
    periodic_distance,
)

G1 = TorusGeometry(1, 1.0)
G2 = TorusGeometry(2, 1.0)


def test_geometry_validation():
    with pytest.raises(ValueError):
        TorusGeometry(3, 1.0)
    with pytest.raises(ValueError):
        TorusGeometry(1, -1.0)
    assert TorusGeometry(2, (1.0, 2.0)).half_diameter == pytest.approx(np.hypot(0.5, 1.0))


def test_minimal_image_displacement():
    # a - b modulo the lattice, reduced to (-period/2, period/2]
    assert periodic_displacement(0.1, 0.9, G1) == pytest.approx(0.2)
    assert periodic_distance(0.1, 0.9, G1) == pytest.approx(0.2)
    assert periodic_displacement(0.4, 0.4, G1) == 0.0
    d = periodic_distance(np.array([0.1, 0.1]), np.array([0.9, 0.9]), G2)
    assert d == pytest.approx(np.sqrt(0.08))
    # componentwise half-open convention: exactly half a period maps to +1/2
    assert periodic_displacement(0.5, 0.0, G1) == pytest.approx(0.5)
    assert periodic_displacement(0.0, 0.5, G1) == pytest.approx(0.5)


def test_inverse_power_kernel_values():
    k = inverse_power_kernel(40.0, geom=G1)
    assert kernel_eval(k, 0.3, 0.3, G1) == pytest.approx(1.0)
    assert kernel_eval(k, 0.0, 0.5, G1) == pytest.approx(1.25 ** -40)
    assert k.c0 == pytest.approx(1.25 ** -40)


def test_constant_kernel():
    k = constant_kernel(0.7)
    rng = np.random.default_rng(0)
    a, b = rng.random(10), rng.random(10)
    assert np.allclose(kernel_eval(k, a, b, G1), 0.7)


def test_kernel_symmetry_and_translation_invariance():
    k = inverse_power_kernel(40.0, geom=G2)
    rng = np.random.default_rng(1)
    a = rng.random((50, 2))
    b = rng.random((50, 2))
    t = rng.random(2)
    assert np.allclose(kernel_eval(k, a, b, G2), kernel_eval(k, b, a, G2))
    assert np.allclose(kernel_eval(k, a + t, b + t, G2), kernel_eval(k, a, b, G2))


def test_profile_nonincreasing_up_to_half_diameter():
    for k in (inverse_power_kernel(40.0, geom=G1), cosine_kernel(1.0, 0.5)):
        r = np.linspace(0.0, G1.half_diameter, 200)
        vals = k.profile(r)
        assert np.all(np.diff(vals) <= 1e-12)
        assert np.all(vals >= k.c0 - 1e-12)


def test_bochner_square_constants():
    phi = bochner_square(constant_kernel(1.0), G1, resolution=256)
    r = np.linspace(0, 0.5, 17)
    assert np.allclose(phi.profile(r), 1.0, atol=1e-12)


def test_bochner_square_fourier_mode_oracle():
    # convolution multiplies Fourier coefficients: psi = 1 + cos/2 -> 1 + cos/8
    psi = cosine_kernel(1.0, 0.5)
    phi = bochner_square(psi, G1, resolution=256)
    x = np.arange(256) / 256.0
    r = np.minimum(x, 1.0 - x)
    expected = 1.0 + np.cos(2 * np.pi * x) / 8.0
    assert np.max(np.abs(phi.profile(r) - expected)) < 1e-10


def test_bochner_square_mass_and_lower_bound():
    # integral phi = (integral psi)^2 by Fubini
    psi = cosine_kernel(1.3, 0.5)
    phi = bochner_square(psi, G1, resolution=2048)
    x = np.arange(4096) / 4096.0
    mass_phi = np.mean(phi.profile(np.minimum(x, 1 - x)))
    mass_psi = np.mean(psi.profile(np.minimum(x, 1 - x)))
    assert mass_phi == pytest.approx(mass_psi ** 2, rel=1e-8)
    assert phi.c0 >= (1.3 - 0.5) ** 2 - 1e-12


def test_bochner_square_rejects_bad_input():
    with pytest.raises(InvalidGridError):
        bochner_square(constant_kernel(1.0), G1, resolution=3)
    with pytest.raises(InvalidGridError):
        bochner_square(constant_kernel(1.0), G2)


def test_mollifier_normalization_and_support():
    m = Mollifier(delta=0.1, geom=G1)
    x = np.arange(4000) / 4000.0
    integral = np.mean(mollifier_eval(m, x))
    assert integral == pytest.approx(1.0, abs=1e-10)
    assert mollifier_eval(m, 0.2) == 0.0  # outside the support radius
    assert mollifier_eval(m, 0.95) > 0.0  # minimal image wraps


def test_mollifier_peak_scaling():
    # halving delta doubles the peak in 1d, quadruples it in 2d
    peak1 = mollifier_eval(Mollifier(0.1, G1), 0.0)
    peak2 = mollifier_eval(Mollifier(0.05, G1), 0.0)
    assert peak2 / peak1 == pytest.approx(2.0)
    p1 = mollifier_eval(Mollifier(0.1, G2), np.zeros(2))
    p2 = mollifier_eval(Mollifier(0.05, G2), np.zeros(2))
    assert p2 / p1 == pytest.approx(4.0)


def test_custom_kernel_without_descriptor():
    k = CommunicationKernel(profile=lambda r: np.exp(-np.asarray(r) ** 2))
    assert k.descriptor is None
    assert kernel_eval(k, 0.0, 0.25, G1) == pytest.approx(np.exp(-0.0625))
