import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dolbeault import geometry as geo
from dolbeault import products as pr
from dolbeault import spectral as sp
from dolbeault import operators as op
from dolbeault.errors import HypothesisError, ScenarioError


@pytest.mark.parametrize("m", [0.5, -0.5, 1.5, -2.5])
def test_sector_dirac_levels(m):
    sec = pr.SphereSector(m, 1.0, 6)
    lam = np.sort(np.abs(np.linalg.eigvalsh(sec.dirac())))
    expected = np.repeat(abs(m) + 0.5 + np.arange(6), 2)
    assert np.abs(lam - expected).max() < 1e-10


@pytest.mark.parametrize("m", [0.5, 1.5, -1.5])
def test_eth_bar_is_minus_adjoint_of_eth(m):
    sec = pr.SphereSector(m, 1.0, 8)
    assert np.abs(sec.eth_bar_matrix() + sec.eth_matrix.conj().T).max() < 1e-12
    assert sec.eth_defect < 1e-10  # eth maps the truncated basis into the truncated basis


def test_basis_is_orthonormal():
    th, w = pr.theta_quadrature(80)
    b = pr.SpinWeightedBasis(1.5, 0.5, 10, th, w)
    assert np.abs(b.gram(b) - np.eye(10)).max() < 1e-12


def test_half_integer_labels_required():
    th, w = pr.theta_quadrature(20)
    with pytest.raises(ValueError):
        pr.SpinWeightedBasis(1.0, 0.5, 4, th, w)


@pytest.mark.parametrize("radius", [1.0, 2.0])
def test_round_sphere_spectrum(radius):
    f = pr.sphere_spectrum(radius, 4)
    assert np.allclose(f.levels, np.arange(1, 5) / radius, atol=1e-10)
    assert list(f.multiplicity) == [4, 8, 12, 16]
    assert f.kernel_dim == 0
    assert f.s_min == pytest.approx(2 / radius ** 2)


@pytest.mark.parametrize("m", [0.5, -1.5])
def test_collocation_oracle_agrees_at_two_resolutions(m):
    sec = pr.SphereSector(m, 1.0, 8)
    gal = np.sort(np.linalg.eigvalsh(sec.dirac()))
    gal = gal[np.argsort(np.abs(gal), kind="stable")][:6]
    for n in (12, 24):
        col = pr.sphere_oracle(1.0, m, n)[:6]
        assert np.abs(np.sort(col) - np.sort(gal)).max() < 1e-8


def test_torus_factor():
    f = pr.torus_spectrum(modes=2)
    assert f.kernel_dim == 2 and f.levels[0] == 0.0
    assert f.levels[1] == pytest.approx(1.0)
    assert f.multiplicity[1] == 8  # four unit momenta, two components


def test_s2_times_s2_limiting():
    s = pr.sphere_spectrum(1.0, 3)
    p = pr.assemble_product(s, s)
    assert p.lambda_sq_min == pytest.approx(2.0, abs=1e-12)
    assert p.k == pytest.approx(4.0)
    assert abs(p.thm3_gap) <= 1e-8
    assert p.multiplicity[0] == 16
    assert p.warnings == []


def test_t2_times_s2_limiting():
    p = pr.assemble_product(pr.torus_spectrum(modes=2), pr.sphere_spectrum(1.0, 3))
    assert p.lambda_sq_min == pytest.approx(1.0, abs=1e-12)
    assert p.k == pytest.approx(2.0)
    assert abs(p.thm3_gap) <= 1e-8


def test_unequal_spheres_still_limiting():
    p = pr.assemble_product(pr.sphere_spectrum(1.0, 3), pr.sphere_spectrum(2.0, 3))
    assert p.lambda_sq_min == pytest.approx(1.25)
    assert p.k == pytest.approx(2.5)
    assert abs(p.thm3_gap) <= 1e-12


def test_truncation_edge_warning():
    p = pr.assemble_product(pr.sphere_spectrum(1.0, 1), pr.sphere_spectrum(1.0, 1))
    assert p.warnings


def test_lattice_torus_product_matches_lattice_spectrum():
    ch = geo.LatticeChart.cube(4)
    st = op.Stencils(geo.compute_tables(ch, geo.MetricField.flat(ch)))
    lat = sp.low_spectrum(op.build_dolbeault(st), 60, chirality=-1).values
    f = pr.torus_spectrum(modes=0, spacing=ch.spacing[:2])
    p = pr.assemble_product(f, f)
    assembled = np.repeat(p.lambda_sq, p.multiplicity)
    # the Sigma_+ block carries half of the spinor components
    assembled = np.sort(assembled)[::2][:60]
    assert np.abs(np.sort(lat) - assembled).max() < 1e-8


def test_curvature_engine_round_product():
    fn = pr.curvature_engine("sphere")
    th = np.linspace(0.2, 3.0, 7)
    z = np.zeros_like(th)
    s, s_star = fn(th, z, z, z, z, z, z, 1.0, 1.0, 1.0)
    assert np.allclose(s, 4.0) and np.allclose(s_star, 4.0)
    s, _ = fn(th, z, z, z, z, z, z, 2.0, 1.0, 1.0)
    assert np.allclose(s, 2 / 4 + 2)


def test_curvature_engine_matches_sphere_formula():
    h = pr.Profile("0.2*cos(2*theta)")
    th = np.linspace(0.2, 3.0, 9)
    fn = pr.curvature_engine("torus")
    z = np.zeros_like(th)
    s, s_star = fn(th, h(th), h(th, 1), h(th, 2), z, z, z, 1.0, 1.0, 1.0)
    assert np.abs(s - pr.sphere_scalar_curvature(1.0, h, th)).max() < 1e-12
    assert np.abs(s_star - s).max() < 1e-12  # Kaehler: s* = s


def test_profile_rejects_singular_and_unknown():
    with pytest.raises(ScenarioError):
        pr.Profile("sin(theta)")  # odd at the poles: a cone point
    with pytest.raises(ScenarioError):
        pr.Profile("cos(phi)")


def test_conformal_sphere_keeps_no_kernel_and_respects_baer_bound():
    f = pr.axisym_conformal_sphere(1.0, "0.3*cos(theta)", 3)
    lam1 = f.levels[0]
    area = 2 * np.pi * 2 * np.sinh(0.3) / 0.3  # area of e^h round for h = 0.3 cos(theta)
    assert lam1 ** 2 >= 4 * np.pi / area - 1e-10
    assert f.kernel_dim == 0


def test_conformal_sphere_zero_profile_is_round():
    f = pr.axisym_conformal_sphere(1.0, "0*theta", 3)
    assert np.abs(f.levels[:3] - [1, 2, 3]).max() < 1e-10


def test_rescaling_requires_positive_curvature():
    with pytest.raises(HypothesisError):
        pr.RescaledProduct(1.0, pr.Profile("3*cos(2*theta)"), second="torus")


def test_base_product_is_kaehler_with_k_equal_s():
    g = pr.RescaledProduct(1.0, pr.Profile("0.05*cos(2*theta)"), rescale=False)
    th, _ = pr.theta_quadrature(30)
    c = g.curvature(th)
    assert np.abs(c["k"] - g.base_s(th)).max() < 1e-12


def test_base_twistor_spinor():
    g = pr.RescaledProduct(1.0, pr.Profile("0.05*cos(2*theta)"), rescale=False)
    assert g.twistor_residual(exponent=False)["relative"] < 1e-6
    assert g.twistor_residual(exponent=False, base_exponent=0.0)["relative"] > 1e-3


def test_unperturbed_rescaling_is_constant():
    g = pr.RescaledProduct(1.0, pr.Profile("0*theta"))
    assert g.low_spectrum(2, 2)["lambda_sq_min"] == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("second", ["sphere", "torus"])
def test_limiting_run(second):
    r = pr.section4_limiting_run(second=second)
    assert r["k_tilde_max_dev"] <= 1e-3
    assert r["lambda_sq_dev"] <= 1e-3
    assert r["twistor_residual"] <= 1e-6
    assert r["twistor_residual_no_exponent"] > 100 * r["twistor_residual"]
    assert r["warnings"] == []


def test_limiting_run_converges():
    a = pr.section4_limiting_run(resolution=4)
    b = pr.section4_limiting_run(resolution=8)
    assert b["k_tilde_max_dev"] < a["k_tilde_max_dev"] / 100


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.3, 3.0))
def test_sphere_products_are_limiting_for_any_radii(r1, r2):
    p = pr.assemble_product(pr.sphere_spectrum(r1, 2), pr.sphere_spectrum(r2, 2))
    assert p.lambda_sq_min == pytest.approx(1 / r1 ** 2 + 1 / r2 ** 2, rel=1e-10)
    assert p.k == pytest.approx(2 / r1 ** 2 + 2 / r2 ** 2, rel=1e-12)
    assert abs(p.thm3_gap) <= 1e-8 * p.k
