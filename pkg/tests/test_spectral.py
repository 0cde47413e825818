import numpy as np
import pytest

from dolbeault import geometry as geo
from dolbeault import operators as op
from dolbeault import spectral as sp
from dolbeault.clifford import CHIRALITY, LEVEL_OF_INDEX
from dolbeault.errors import HypothesisError, SolverError


@pytest.fixture(scope="module")
def flat4():
    ch = geo.LatticeChart.cube(4)
    return op.Stencils(geo.compute_tables(ch, geo.MetricField.flat(ch)))


@pytest.fixture(scope="module")
def flat6():
    ch = geo.LatticeChart.cube(6)
    return geo.compute_tables(ch, geo.MetricField.flat(ch))


@pytest.fixture(scope="module")
def flat6_report(flat6):
    return sp.spectrum_report(flat6)


def test_flat_kernel_and_index(flat6_report):
    r = flat6_report
    assert (r.kernel_dim, r.kernel_dim_plus, r.kernel_dim_minus, r.index) == (4, 2, 2, 0)
    assert not r.indeterminate
    # every kernel direction of a centred stencil comes with 15 lattice tastes
    assert r.doublers == {"plus": 30, "minus": 30}


def test_flat_torus_is_limiting_for_scalar_bound(flat6_report):
    r = flat6_report
    assert r.lambda_sq_min == 0.0
    assert r.bound_thm2["inf_s"] == 0.0
    assert r.bound_thm2["equality_gap"] == 0.0
    assert r.bound_thm3 is None
    assert r.violations == []


def test_flat_first_nonzero_eigenvalue(flat6):
    st = op.Stencils(flat6)
    spec = sp.low_spectrum(op.build_dolbeault(st), 48, chirality=-1)
    nonzero = spec.values[spec.values > sp.kernel_threshold(st.chart)]
    assert nonzero[0] == pytest.approx(sp.flat_next_eigenvalue(st.chart), abs=1e-9)


def test_residuals_checked_through_raw_operator(flat4):
    spec = sp.low_spectrum(op.build_dolbeault(flat4), 10, tol=1e-10, chirality=1)
    assert spec.residuals.max() <= 2e-10
    assert spec.meta["max_residual"] <= 2e-10


def test_eigenvectors_are_orthonormal(flat4):
    spec = sp.low_spectrum(op.build_dolbeault(flat4), 40, chirality=-1)
    G = spec.vectors.conj().T @ spec.vectors
    assert np.abs(G - np.eye(G.shape[0])).max() < 1e-10


def test_arpack_and_block_lanczos_agree():
    ch = geo.LatticeChart.cube(4)
    st = op.Stencils(geo.compute_tables(ch, geo.random_hermitian(ch, seed=3)))
    box = op.build_dolbeault(st)
    # 32 near-zero tastes plus one complete pair: the count must not split a cluster
    a = sp.low_spectrum(box, 34, chirality=-1, method="arpack")
    b = sp.low_spectrum(box, 34, chirality=-1, method="lanczos")
    assert np.abs(a.values - b.values).max() < 1e-8


def test_dense_oracle_on_small_grid():
    ch = geo.LatticeChart.cube(4)
    st = op.Stencils(geo.compute_tables(ch, geo.random_hermitian(ch, seed=4)))
    box = op.build_dolbeault(st)
    M = box.matrix().toarray()
    plus = np.where(np.tile(CHIRALITY == -1, st.chart.npoints))[0]
    block = M[:, plus].conj().T @ M[:, plus]
    dense = np.linalg.eigvalsh(block)
    spec = sp.low_spectrum(box, 34, chirality=-1)
    assert np.abs(dense[:34] - spec.values).max() < 1e-8


def test_rejects_non_self_adjoint_handle(flat4):
    with pytest.raises(ValueError, match="self-adjoint"):
        sp.low_spectrum(op.build_dirac_t(0.0, flat4), 4)


def test_rejects_unknown_method(flat4):
    with pytest.raises(ValueError):
        sp.low_spectrum(op.build_dolbeault(flat4), 4, method="power")


def test_signed_spectrum_is_symmetric():
    ch = geo.LatticeChart.cube(4)
    st = op.Stencils(geo.compute_tables(ch, geo.random_hermitian(ch, seed=1)))
    box = op.build_dolbeault(st)
    # 64 near-zero tastes over both chiralities, then 4-fold clusters
    spec = sp.low_spectrum(box, 72)
    signed = sp.signed_values(box, spec)
    assert len(signed) == 68
    assert np.abs(np.sort(signed) + np.sort(signed)[::-1]).max() < 1e-8
    assert np.sum(signed > 0.1) == 2


def test_signed_values_needs_a_complete_cluster(flat4):
    box = op.build_dolbeault(flat4)
    with pytest.raises(ValueError):
        sp.signed_values(box, sp.low_spectrum(box, 8, chirality=-1))


def test_chirality_exchange_required():
    ch = geo.LatticeChart.cube(4)
    st = op.Stencils(geo.compute_tables(ch, geo.MetricField.flat(ch)))
    mixed = op.build_dirac_t(0.5, st)  # zeroth-order theta terms vanish on flat input; relabel as Hermitian
    mixed = op.LinearOperatorHandle("mix", st, lambda u: u + mixed.apply_weighted(u), True,
                                    zeroth=np.broadcast_to(np.eye(4), st.dims + (4, 4)).astype(complex))
    with pytest.raises(ValueError, match="chiralit"):
        sp.low_spectrum(mixed, 4, chirality=-1)


def test_kernel_threshold_scaling():
    a = sp.kernel_threshold(geo.LatticeChart.cube(8))
    b = sp.kernel_threshold(geo.LatticeChart.cube(16))
    assert a / b == pytest.approx(4.0)


def test_clusters_group_equal_values():
    groups = sp.clusters(np.array([0.0, 0.0, 1.0, 1.0 + 1e-9, 2.0]), atol=1e-12)
    assert [list(g) for g in groups] == [[0, 1], [2, 3], [4]]


def test_smooth_content_separates_doublers(flat4):
    n = flat4.chart.npoints
    const = np.zeros((n, 4), complex)
    const[:, 0] = 1 / np.sqrt(n)
    x = flat4.chart.coordinates()
    stag = np.zeros((n, 4), complex)
    stag[:, 0] = np.exp(1j * np.pi * x[0] / flat4.chart.spacing[0]).reshape(-1) / np.sqrt(n)
    content = sp.smooth_content(flat4, np.stack([const.reshape(-1), stag.reshape(-1)], 1))
    assert content == pytest.approx([1.0, 0.0], abs=1e-12)


def test_parallel_sigma_plus_spinor_on_flat_torus(flat6_report, flat6):
    st = op.Stencils(flat6)
    ki = sp.kernel_and_index(st)
    basis = ki["plus"].smooth_basis
    assert basis.shape[1] == 2
    for j in range(2):
        u = basis[:, j].reshape(st.dims + (4,))
        assert np.abs(u[..., CHIRALITY == 1]).max() < 1e-12  # Sigma_+ only
        assert sp.parallel_residual(st, basis[:, j]) <= 1e-9


def test_bound_verdicts_gate_on_conformal_curvature():
    v = sp.bound_verdicts(0.7, 0, inf_s=3.0, inf_k=-1.0)
    assert v["bound_thm2"] is None and v["bound_thm3"] is None
    with pytest.raises(HypothesisError):
        sp.bound_verdicts(0.7, 0, inf_s=3.0, inf_k=-1.0, theorem3=True)


def test_bound_verdicts_positive_case():
    v = sp.bound_verdicts(2.0, 0, inf_s=4.0, inf_k=4.0)
    assert v["bound_thm2"]["equality_gap"] == pytest.approx(2 - 4 / 6)
    assert v["bound_thm3"]["equality_gap"] == pytest.approx(0.0)
    assert v["violations"] == []


def test_bound_verdicts_flag_violations():
    v = sp.bound_verdicts(0.1, 0, inf_s=4.0, inf_k=4.0)
    assert len(v["violations"]) == 2
    v = sp.bound_verdicts(None, 2, inf_s=1.0, inf_k=0.0)
    assert any("harmonic" in m for m in v["violations"])


def test_eigenfield_split_on_flat_plane_wave(flat4):
    ch = flat4.chart
    box = op.build_dolbeault(flat4)
    x = ch.coordinates()
    wave = np.exp(1j * x[0])
    p0 = np.zeros(ch.dims + (4,), complex)
    p0[..., 0] = wave
    p2 = np.zeros_like(p0)
    p2[..., 3] = 0.5 * wave
    lam = float(np.sqrt(np.sin(ch.spacing[0]) ** 2 / ch.spacing[0] ** 2))
    psi = p0 + p2 + (box.apply(p0) + box.apply(p2)) / lam
    phi0, phi2 = sp.lemma1_decompose(box.apply, psi, lam, 1e-12)
    assert np.abs(phi0 + phi2 - psi).max() < 1e-12
    assert np.abs(phi0[..., LEVEL_OF_INDEX == 2]).max() < 1e-12
    assert np.abs(phi2[..., LEVEL_OF_INDEX == 0]).max() < 1e-12


def test_eigenfield_split_rejects_zero_eigenvalue_and_non_eigenfields(flat4):
    box = op.build_dolbeault(flat4)
    psi = op.band_limited_spinor(flat4.chart, seed=1)
    with pytest.raises(ValueError):
        sp.lemma1_decompose(box.apply, psi, 0.0, 1e-10)
    with pytest.raises(ValueError):
        sp.lemma1_decompose(box.apply, psi, 1.0, 1e-10)


def test_eigenfield_split_rejects_field_without_extreme_levels(flat4):
    # a Sigma_1 field that is an eigenfield only up to tolerance: no Sigma_0 or Sigma_2 part
    box = op.LinearOperatorHandle("id", flat4, lambda u: u, True)
    psi = np.zeros(flat4.dims + (4,), complex)
    psi[..., 1] = 1.0
    with pytest.raises(SolverError):
        sp.lemma1_decompose(box.apply, psi, 1.0, 1e-10)


def test_persistent_values_drop_lattice_artifacts():
    out = sp.persistent_values([1.0, 5.0], [1.001, 3.0], h=0.1)
    assert [p["value"] for p in out["persistent"]] == [1.0]
    assert [p["value"] for p in out["excluded"]] == [5.0]


def test_conformal_rescaling_keeps_index():
    ch = geo.LatticeChart.cube(6)
    tables = geo.compute_tables(ch, geo.conformally_flat(ch, "0.3*sin(x1)+0.2*cos(x2+x3)"))
    ki = sp.kernel_and_index(tables)
    assert ki["index"] == 0
    assert (ki["kernel_dim_plus"], ki["kernel_dim_minus"]) == (2, 2)
