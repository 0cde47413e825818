import numpy as np
import pytest

from dolbeault import geometry as geo
from dolbeault.clifford import OMEGA
from dolbeault.errors import MetricError, ScenarioError

T_VALUES = (-3, -1, 0, 1)


@pytest.fixture(scope="module")
def chart8():
    return geo.LatticeChart.cube(8)


@pytest.fixture(scope="module")
def random_tables(chart8):
    return geo.compute_tables(chart8, geo.random_hermitian(chart8, seed=1))


def slab(n):
    """Chart whose fields only vary along x1 and x3; cheap to refine."""
    return geo.LatticeChart((n, 4, n, 4))


def slab_metric(chart, derivatives="central"):
    return geo.hermitian_from_expressions(chart, "1+0.1*sin(x1+x3)", "1+0.1*cos(x1)", "0.1*sin(x3)",
                                          "0.1*cos(x1-x3)", derivatives=derivatives)


def test_chart_validation():
    with pytest.raises(ValueError):
        geo.LatticeChart((8, 8, 8, 2))
    with pytest.raises(ValueError):
        geo.LatticeChart((8, 8, 8), (1.0, 1.0, 1.0))
    ch = geo.LatticeChart((4, 6, 8, 10), (1.0, 2.0, 3.0, 4.0))
    assert np.allclose(ch.spacing, [0.25, 1 / 3, 0.375, 0.4])
    assert ch.refine().dims == (8, 12, 16, 20)


def test_spectral_derivative_is_exact_on_trig(chart8):
    x = chart8.coordinates()
    F = np.sin(x[0] + 2 * x[3])
    d = geo.Differ(chart8, "spectral")
    assert np.abs(d(F, 3) - 2 * np.cos(x[0] + 2 * x[3])).max() < 1e-12
    c = geo.Differ(chart8, "central")
    h = chart8.spacing[0]
    assert np.allclose(c(F, 0), np.sin(h) / h * np.cos(x[0] + 2 * x[3]))


def test_rejects_indefinite_metric(chart8):
    with pytest.raises(MetricError, match="positive definite") as info:
        geo.MetricField(chart8, -np.broadcast_to(np.eye(4), chart8.dims + (4, 4)).copy())
    assert "grid index" in str(info.value)


def test_rejects_incompatible_metric(chart8):
    g = np.broadcast_to(np.diag([1.0, 2.0, 1.0, 1.0]), chart8.dims + (4, 4)).copy()
    with pytest.raises(MetricError, match="compatible"):
        geo.MetricField(chart8, g)


def test_bad_expression(chart8):
    with pytest.raises(ScenarioError):
        geo.conformally_flat(chart8, "sin(y)")
    with pytest.raises(ScenarioError):
        geo.metric_from_spec(chart8, {"nonsense": 1})


def test_flat_tables_vanish(chart8):
    T = geo.compute_tables(chart8, geo.MetricField.flat(chart8))
    for name in ("s", "s_star", "k", "delta_theta"):
        assert np.abs(getattr(T, name)).max() == 0
    assert np.abs(T.lee_form).max() == 0


def test_frame_orthonormal_and_hermitian(random_tables):
    E, g = random_tables.frame, random_tables.metric.g
    gram = np.einsum("...ia,...ab,...jb->...ij", E, g, E)
    assert np.abs(gram - np.eye(4)).max() < 1e-13
    JE = np.einsum("ab,...ib->...ia", geo.J, E)
    assert np.abs(JE[..., 0, :] - E[..., 1, :]).max() < 1e-14
    assert np.abs(JE[..., 2, :] - E[..., 3, :]).max() < 1e-14


def test_levi_civita_metric_compatible(random_tables):
    w = random_tables.omega
    assert np.abs(w + np.swapaxes(w, -1, -2)).max() < 1e-15


def test_conformally_flat_lee_form_is_df():
    errs = []
    for n in (8, 16):
        ch = slab(n)
        m = geo.conformally_flat(ch, "0.3*sin(x1)+0.2*cos(x3-x1)")
        T = geo.compute_tables(ch, m)
        x = ch.coordinates()
        df = np.zeros(ch.dims + (4,))
        df[..., 0] = 0.3 * np.cos(x[0]) + 0.2 * np.sin(x[2] - x[0])
        df[..., 2] = -0.2 * np.sin(x[2] - x[0])
        errs.append(np.abs(T.lee_form_coord - df).max())
    assert errs[1] < errs[0] / 3.5


def test_kaehler_potential_has_vanishing_lee_form():
    ch = slab(16)
    T = geo.compute_tables(ch, geo.kahler_potential(ch, "0.2*sin(x1)*cos(x3)"))
    assert np.abs(T.lee_form).max() < 1e-3
    assert np.abs(T.s - T.s_star).max() < 2e-3 * np.abs(T.s).max() + 1e-3


def test_kaehler_lee_form_converges():
    vals = []
    for n in (8, 16):
        ch = slab(n)
        T = geo.compute_tables(ch, geo.kahler_potential(ch, "0.2*sin(x1)*cos(x3)"))
        vals.append(np.abs(T.lee_form).max())
    assert np.log2(vals[0] / vals[1]) > 1.8


def test_kaehler_spectral_derivatives_are_kaehler_to_roundoff():
    ch = slab(16)
    T = geo.compute_tables(ch, geo.kahler_potential(ch, "0.2*sin(x1)*cos(x3)", derivatives="spectral"))
    assert np.abs(T.lee_form).max() < 1e-8


def test_lee_identity_is_discrete_identity(random_tables):
    assert np.abs(geo.lee_identity_residual(random_tables)).max() < 1e-13


def test_k_definition(random_tables):
    T = random_tables
    assert np.array_equal(T.k, (3 * T.s_star - T.s) / 2)


def test_curvature_converges_to_second_order_on_slab():
    prev = None
    slopes = []
    for n in (16, 32):
        ch = slab(n)
        T = geo.compute_tables(ch, slab_metric(ch))
        oracle = geo.compute_tables(ch, slab_metric(ch, "spectral"))
        res = np.array([geo.volume_rms(T, geo.lee_identity_residual_against(T, oracle)),
                        geo.volume_rms(T, geo.d_omega_residual(T)),
                        np.abs(geo.coordinate_riemann(T) - T.riemann).max()])
        if prev is not None:
            slopes = np.log2(prev / res)
        prev = res
    assert np.all(slopes > 1.8), slopes


def test_pair_symmetry_small(random_tables):
    R = random_tables.riemann
    assert np.abs(R - np.einsum("...cdab->...abcd", R)).max() < 5e-3
    assert np.abs(R + np.swapaxes(R, -1, -2)).max() < 1e-14


def test_constant_conformal_scaling(chart8):
    base = geo.random_hermitian(chart8, seed=4, derivatives="spectral")
    T0 = geo.compute_tables(chart8, base)
    T1 = geo.compute_tables(chart8, geo.conformal_rescale(chart8, base, "0.7"))
    assert np.allclose(T1.s, np.exp(-0.7) * T0.s, atol=1e-10)
    assert np.allclose(T1.k, np.exp(-0.7) * T0.k, atol=1e-10)


def test_conformal_change_of_k_and_theta():
    """k~ = e^{-f} k and theta~ = theta + df at second order."""
    errs = []
    for n in (16, 32):
        ch = slab(n)
        base = slab_metric(ch)
        T0 = geo.compute_tables(ch, base)
        f = "0.2*sin(x3)+0.1*cos(x1)"
        T1 = geo.compute_tables(ch, geo.conformal_rescale(ch, base, f))
        fv = geo.expressions.evaluate(f, ch)
        df = geo.Differ(ch, "spectral").grad(fv)
        errs.append([np.abs(T1.k - np.exp(-fv) * T0.k).max(),
                     np.abs(T1.lee_form_coord - T0.lee_form_coord - df).max()])
    errs = np.array(errs)
    assert np.all(np.log2(errs[0] / errs[1]) > 1.8)


def test_zero_rescale_is_identity(chart8):
    base = geo.random_hermitian(chart8, seed=2)
    T0 = geo.compute_tables(chart8, base)
    T1 = geo.compute_tables(chart8, geo.conformal_rescale(chart8, base, "0"))
    assert np.array_equal(T0.s, T1.s)


@pytest.mark.parametrize("t", T_VALUES)
def test_hermitian_connection_properties(random_tables, t):
    w = geo.connection_coefficients(t, random_tables)
    # metric
    assert np.abs(w + np.swapaxes(w, -1, -2)).max() < 1e-14
    # Omega and J parallel
    J = geo.J
    nabla_Om = -np.einsum("...ijm,mk->...ijk", w, J) - np.einsum("...ikm,jm->...ijk", w, J)
    assert np.abs(nabla_Om).max() < 1e-14
    G = geo.spinor_connection(t, random_tables)
    assert np.abs(G @ OMEGA - OMEGA @ G).max() < 1e-14


@pytest.mark.parametrize("t", T_VALUES)
def test_spinor_connection_is_lift_of_tangent_connection(random_tables, t):
    lift = geo.spin_lift(geo.connection_coefficients(t, random_tables))
    assert np.abs(lift - geo.spinor_connection(t, random_tables)).max() < 1e-14


@pytest.mark.parametrize("t", T_VALUES)
def test_sigma0_specialization(random_tables, t):
    th = random_tables.lee_form
    full = geo.hermitian_spin_correction(t, th)[..., :, 0]
    assert np.abs(full - geo.sigma0_connection_term(t, th)).max() < 1e-15


def test_kaehler_connection_is_levi_civita(chart8):
    T = geo.compute_tables(chart8, geo.MetricField.flat(chart8))
    for t in T_VALUES:
        assert np.array_equal(geo.connection_coefficients(t, T), T.omega)


def test_chern_pattern():
    theta = np.array([0.3, -0.2, 0.5, 0.1])
    A = geo.tangent_torsion(1.0, theta)
    # at t = 1 the (t-1)/4 terms drop out
    ref = (-0.5 * np.einsum("j,ik->ijk", theta, np.eye(4))
           - 0.5 * np.einsum("i,kj->ijk", theta @ geo.J, geo.J)
           + 0.5 * np.einsum("ij,k->ijk", np.eye(4), theta))
    assert np.allclose(A, ref)


def test_levi_civita_lift_commutator(random_tables):
    from dolbeault.clifford import GAMMA
    G = geo.levi_civita_spin(random_tables)
    lhs = np.einsum("...iab,jbc->...ijac", G, GAMMA) - np.einsum("jab,...ibc->...ijac", GAMMA, G)
    rhs = np.einsum("...ijk,kac->...ijac", random_tables.omega, GAMMA)
    assert np.abs(lhs - rhs).max() < 1e-14


def test_summary_keys(random_tables):
    summ = random_tables.summary()
    assert {"s", "s_star", "k", "residuals"} <= set(summ)
    assert summ["residuals"]["lee_identity_max"] < 1e-13
