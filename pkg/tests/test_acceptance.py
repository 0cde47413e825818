"""Acceptance criteria 1-10, one recorded PASS/FAIL line each.

Criteria that cannot be met as stated are marked ``xfail(strict=True)``:
they keep the stated tolerances, record a FAIL line and would turn the
suite red if they started passing.  The reasons are given in each marker.
"""
import time
from functools import _lru_cache_wrapper

import numpy as np
import pytest

from dolbeault import clifford
from dolbeault import geometry as geo
from dolbeault import operators as op
from dolbeault import products as pr
from dolbeault import spectral as sp
from dolbeault import studies
from dolbeault.clifford import CHIRALITY

EXACT = 1e-12  # "zero residual" for floating-point stencils
SLOPE = 1.8
CONFORMAL_METRICS = [{"conformal_factor": studies.DEFAULT_CONFORMAL}, {"conformal_factor": "0.3*sin(x1)+0.2*cos(x3)"}]


def fmt(values):
    return "[" + ", ".join(f"{v:.3g}" for v in values) + "]"


# ----------------------------------------------------------------------------
# 1


def test_criterion_1_exact_algebra(verdict):
    for obj in vars(clifford).values():  # time a cold run
        if isinstance(obj, _lru_cache_wrapper):
            obj.cache_clear()
    start = time.perf_counter()
    suite = clifford.identity_suite()
    elapsed = time.perf_counter() - start
    failed = sum(v["failed"] for v in suite.values())
    checked = sum(v["checked"] for v in suite.values())
    ok = failed == 0 and elapsed < 1.0
    verdict(1, ok, f"{checked} exact identity instances, {failed} failed, {elapsed:.2f} s (< 1 s)")
    assert ok


# ----------------------------------------------------------------------------
# 2


def test_criterion_2_curvature_relations(verdict):
    metric = {"random_hermitian": {"seed": 0}}
    ch = studies.chart_for(8)
    theta = geo.compute_tables(ch, geo.metric_from_spec(ch, metric)).lee_form
    study = studies.geometry_study(metric, [8, 16])
    exact = max(study["discrete_identity_max"])
    ok = (np.abs(theta).max() > 1e-2 and min(study["lee_slopes"] + study["d_omega_slopes"]) >= SLOPE
          and exact <= EXACT)
    verdict(2, ok, f"Lee-form identity slope {study['lee_slopes'][0]:.3f}, dOmega slope "
                   f"{study['d_omega_slopes'][0]:.3f} (>= {SLOPE}); discrete k identity {exact:.1e}; "
                   f"max|theta| {np.abs(theta).max():.2f}")
    assert ok


# ----------------------------------------------------------------------------
# 3


def test_criterion_3_operator_relations(verdict):
    ch = geo.LatticeChart.cube(4)
    rel = op.check_operator_relations(geo.compute_tables(ch, geo.random_hermitian(ch, seed=3)))
    kaehler = []
    for chart, metric in [
        (ch, geo.hermitian_from_expressions(ch, "1.3", "0.8", "0.2", "0.1")),
        (geo.LatticeChart((16, 4, 16, 4)), None),
    ]:
        if metric is None:
            metric = geo.kahler_potential(chart, "0.2*sin(x1)*cos(x3)", derivatives="spectral")
        st = op.Stencils(geo.compute_tables(chart, metric))
        psi = op.band_limited_spinor(chart, seed=4)
        diff = op.build_dolbeault(st).apply(psi) - op.build_dirac(st).apply(psi)
        kaehler.append(float(np.abs(diff).max() / np.abs(psi).max()))
    worst = max(rel.values())
    ok = worst <= EXACT and max(kaehler) <= EXACT
    verdict(3, ok, f"{len(rel)} stencil relations incl. grading and j, max residual {worst:.1e}; "
                   f"Box - D on Kaehler inputs {fmt(kaehler)} (<= {EXACT:.0e})")
    assert ok


# ----------------------------------------------------------------------------
# 4


@pytest.mark.xfail(strict=True, reason="8^4 -> 16^4 is pre-asymptotic for the second-order stencils "
                                       "(slope 1.39, then 1.84 and 1.96 under further refinement)")
def test_criterion_4_weitzenboeck(verdict):
    parts, ok = [], True
    for metric in CONFORMAL_METRICS:
        s = studies.weitzenboeck_study(metric, [8, 16])
        ctrl = min(v[-1] for v in s["negative_control"].values())
        ok &= s["residual"][-1] <= 1e-2 and s["slopes"][0] >= SLOPE and ctrl >= 0.1
        parts.append(f"{metric['conformal_factor']}: residual {s['residual'][-1]:.3g} (<= 1e-2), "
                     f"slope {s['slopes'][0]:.2f} (>= {SLOPE}), t != -1 control {ctrl:.3g} (>= 0.1)")
    verdict(4, ok, "; ".join(parts))
    assert ok


def test_weitzenboeck_negative_control_is_order_one():
    for metric in CONFORMAL_METRICS:
        s = studies.weitzenboeck_study(metric, [16])
        assert min(v[-1] for v in s["negative_control"].values()) >= 0.1
        assert min(v[-1] for v in s["negative_control"].values()) >= 3 * s["residual"][-1]


# ----------------------------------------------------------------------------
# 5


@pytest.mark.xfail(strict=True, reason="8^4 -> 16^4 is pre-asymptotic for t in {-1, 0, 1} "
                                       "(slopes 1.2-1.6, reaching 1.84-1.90 and 1.96-1.98 on finer slabs)")
def test_criterion_5_twistor_norm_identity(verdict):
    s = studies.lemma2_study(CONFORMAL_METRICS[0], [8, 16])
    final = {t: v[-1] for t, v in s["relative"].items()}
    slopes = {t: v[0] for t, v in s["slopes"].items()}
    ok = max(final.values()) <= 1e-2 and min(slopes.values()) >= SLOPE
    verdict(5, ok, "relative residual at 16^4 " + ", ".join(f"t={t}: {v:.2e}" for t, v in final.items())
            + " (<= 1e-2); slopes " + ", ".join(f"t={t}: {v:.2f}" for t, v in slopes.items()) + f" (>= {SLOPE})")
    assert ok


def test_twistor_norm_identity_magnitude_at_16():
    s = studies.lemma2_study(CONFORMAL_METRICS[0], [16])
    assert max(v[-1] for v in s["relative"].values()) <= 1e-2


# ----------------------------------------------------------------------------
# 6


def _report(n, metric):
    ch = studies.chart_for(n)
    T = geo.compute_tables(ch, geo.metric_from_spec(ch, metric))
    return T, sp.spectrum_report(T)


def test_criterion_6_kernel_and_index(verdict):
    _, flat = _report(8, "flat")
    flat_ok = (flat.kernel_dim, flat.kernel_dim_plus, flat.kernel_dim_minus, flat.index) == (4, 2, 2, 0)
    rescaled = [(8, CONFORMAL_METRICS[0]), (6, {"conformal_factor": geo.random_scalar_expression(5)})]
    indices, implication, positive = [], True, 0
    for n, metric in rescaled:
        T, rep = _report(n, metric)
        indices.append(rep.index)
        if T.s.min() > sp.grid_tolerance(T):
            positive += 1
            implication &= rep.kernel_dim == 0
        implication &= not any("harmonic" in v for v in rep.violations)
    # positive scalar curvature on the spectral side: round and conformally deformed spheres
    for factors in [(pr.sphere_spectrum(1.0, 3),) * 2,
                    (pr.sphere_spectrum(1.0, 3), pr.axisym_conformal_sphere(1.0, "0.3*cos(theta)", 3))]:
        implication &= factors[0].kernel_dim * factors[1].kernel_dim == 0 and factors[0].s_min > 0
    # the gate itself: a kernel under grid-min s > 0 must be reported as a violation
    gate = bool(sp.bound_verdicts(None, 2, inf_s=0.5, inf_k=1.0, grid_tol=0.1)["violations"])
    ok = flat_ok and indices == [0, 0] and implication and gate
    verdict(6, ok, f"flat 8^4 kernel {flat.kernel_dim_plus}+{flat.kernel_dim_minus}, index {flat.index}; "
                   f"rescaled tori index {indices}; s > 0 implies kernel 0 on S^2 x S^2 factors and via the "
                   f"report gate ({positive} lattice scenarios reach grid-min s > 0, as T^4 admits none)")
    assert ok


# ----------------------------------------------------------------------------
# 7


def test_criterion_7_flat_torus_limiting(verdict):
    T, rep = _report(8, "flat")
    st = op.Stencils(T)
    ki = sp.kernel_and_index(st)
    basis = ki["plus"].smooth_basis
    parallel = max(sp.parallel_residual(st, basis[:, j], -1.0) for j in range(basis.shape[1]))
    leak = max(np.abs(basis[:, j].reshape(st.dims + (4,))[..., CHIRALITY == 1]).max() for j in range(basis.shape[1]))
    tol = rep.solver_meta["tol"]
    ok = (rep.lambda_sq_min == 0.0 and T.s.min() == 0.0 and rep.bound_thm2["equality_gap"] == 0.0
          and parallel <= tol and leak <= EXACT and not rep.violations)
    verdict(7, ok, f"lambda = {rep.lambda_sq_min}, inf s = {T.s.min()}, gap {rep.bound_thm2['equality_gap']}; "
                   f"{basis.shape[1]} Sigma_+ fields with nabla^-1 residual {parallel:.1e} (<= tol {tol:.0e})")
    assert ok


# ----------------------------------------------------------------------------
# 8


def test_criterion_8_kaehler_products(verdict):
    s2 = pr.sphere_spectrum(1.0, 4)
    a = pr.assemble_product(s2, s2)
    b = pr.assemble_product(pr.torus_spectrum(modes=3), s2)
    oracle = []
    for m in (0.5, -0.5, 1.5, -2.5):
        gal = np.linalg.eigvalsh(pr.SphereSector(m, 1.0, 10).dirac())
        gal = np.sort(gal[np.argsort(np.abs(gal), kind="stable")][:6])
        for n in (12, 24):
            oracle.append(float(np.abs(np.sort(pr.sphere_oracle(1.0, m, n)[:6]) - gal).max()))
    ok = (abs(a.lambda_sq_min - 2) <= 1e-8 and abs(a.k - 4) <= 1e-8 and abs(a.thm3_gap) <= 1e-8
          and abs(b.lambda_sq_min - 1) <= 1e-8 and abs(b.k - 2) <= 1e-8 and abs(b.thm3_gap) <= 1e-8
          and max(oracle) <= 1e-8 and s2.s_min == pytest.approx(2.0))
    verdict(8, ok, f"S2xS2 min lambda^2 {a.lambda_sq_min}, k {a.k}, gap {a.thm3_gap:.1e}; T2xS2 min lambda^2 "
                   f"{b.lambda_sq_min}, k {b.k}, gap {b.thm3_gap:.1e}; oracle at n=12,24 within {max(oracle):.1e}")
    assert ok


# ----------------------------------------------------------------------------
# 9


@pytest.fixture(scope="module")
def limiting_run():
    return pr.section4_limiting_run(), pr.section4_limiting_run(resolution=2 * pr.DEFAULT_RESOLUTION)


@pytest.mark.xfail(strict=True, reason="with eps = 1e-2 the rescaling is e^f = 1 + O(eps), so the residual "
                                       "without the exponent is O(eps) (2.6e-3), not O(1)")
def test_criterion_9_non_kaehler_limiting_reproduction(verdict, limiting_run):
    a, b = limiting_run
    parts = {
        "max|k~-1|": (a["k_tilde_max_dev"] <= 1e-3 and b["k_tilde_max_dev"] < a["k_tilde_max_dev"]),
        "|min lambda^2-1/2|": (a["lambda_sq_dev"] <= 1e-3 and b["lambda_sq_dev"] < a["lambda_sq_dev"]),
        "twistor with exponent": a["twistor_residual"] <= 1e-3,
        "twistor without exponent O(1)": a["twistor_residual_no_exponent"] >= 0.1,
    }
    ok = all(parts.values())
    verdict(9, ok, f"max|k~-1| {a['k_tilde_max_dev']:.1e} -> {b['k_tilde_max_dev']:.1e}, |min lambda^2 - 1/2| "
                   f"{a['lambda_sq_dev']:.1e} -> {b['lambda_sq_dev']:.1e} (<= 1e-3, improving); t=-3 residual "
                   f"{a['twistor_residual']:.1e} (<= 1e-3), without exponent {a['twistor_residual_no_exponent']:.1e} "
                   f"(O(1) means >= 0.1); failing: {[k for k, v in parts.items() if not v]}")
    assert ok


def test_limiting_run_parts_other_than_negative_control(limiting_run):
    a, b = limiting_run
    assert a["k_tilde_max_dev"] <= 1e-3 and b["k_tilde_max_dev"] < a["k_tilde_max_dev"]
    assert a["lambda_sq_dev"] <= 1e-3 and b["lambda_sq_dev"] < a["lambda_sq_dev"]
    assert a["twistor_residual"] <= 1e-3
    # without the exponent the defect is O(1) per unit gradient of the rescaling
    assert a["twistor_residual_no_exponent_per_dF"] >= 0.1
    assert a["twistor_residual_no_exponent"] >= 100 * a["twistor_residual"]


# ----------------------------------------------------------------------------
# 10


def test_criterion_10_transported_twistor_spinor(verdict):
    s = studies.lemma4_study(geo.random_scalar_expression(5), [8, 16])
    parts, ok = [], True
    for t, vals in s["residual"].items():
        if max(vals) <= 1e-13:
            parts.append(f"t={t}: exact ({max(vals):.1e} at both grids)")
        else:
            sl = s["slopes"][t][0]
            ok &= sl >= SLOPE
            parts.append(f"t={t}: slope {sl:.3f}")
    verdict(10, ok, "; ".join(parts) + f" (>= {SLOPE}); without exponent at 16^4 "
                    + fmt([v[-1] for v in s["no_exponent"].values()]))
    assert ok
