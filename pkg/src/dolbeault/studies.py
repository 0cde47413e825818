"""Refinement studies shared by the scenario runner and the acceptance suite.

Each study evaluates one residual on a sequence of grids (each twice as
fine as the previous one) and reports the values with the measured
convergence slopes ``log2(r_coarse / r_fine)``.  Test fields are
band-limited and seeded, so the same continuum field is sampled on every
grid.
"""
from typing import Optional, Sequence

import numpy as np

from . import conformal as cf
from . import geometry as geo
from . import operators as op

#: the default test metric for refinement studies: conformally flat and non-Kaehler
DEFAULT_CONFORMAL = "0.3*sin(x1)+0.2*cos(x2+x3)"


def slopes(values: Sequence[float], grids: Sequence[int]) -> list:
    """Observed orders ``log(r_i / r_{i+1}) / log(n_{i+1} / n_i)``."""
    v = np.asarray(values, dtype=float)
    n = np.asarray(grids, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return [float(x) for x in np.log(v[:-1] / v[1:]) / np.log(n[1:] / n[:-1])]


def chart_for(n, periods=None) -> geo.LatticeChart:
    dims = tuple(n) if isinstance(n, (list, tuple)) else (int(n),) * 4
    return geo.LatticeChart(dims, tuple(periods) if periods else (2 * np.pi,) * 4)


def _tables(n, metric, periods=None, derivatives="central"):
    ch = chart_for(n, periods)
    return geo.compute_tables(ch, geo.metric_from_spec(ch, metric, derivatives))


def _grid_label(n):
    return n if isinstance(n, int) else list(n)


def geometry_study(metric, grids: Sequence, periods=None) -> dict:
    """Lee-form identity against a spectral oracle table, and ``d Omega - theta ^ Omega``, in volume RMS."""
    lee, dom, exact = [], [], []
    for n in grids:
        T = _tables(n, metric, periods)
        oracle = _tables(n, metric, periods, "spectral")
        lee.append(geo.volume_rms(T, geo.lee_identity_residual_against(T, oracle)))
        dom.append(geo.volume_rms(T, geo.d_omega_residual(T)))
        r = geo.curvature_residuals(T)
        exact.append(max(r["lee_identity_max"], r["k_definition_max"]))
    sizes = [n if isinstance(n, int) else n[0] for n in grids]
    return {"grids": [_grid_label(n) for n in grids], "lee_identity_rms": lee, "d_omega_rms": dom,
            "discrete_identity_max": exact, "lee_slopes": slopes(lee, sizes), "d_omega_slopes": slopes(dom, sizes)}


def weitzenboeck_study(metric, grids: Sequence, seed: int = 0, t_control: Sequence[float] = (0.0, 1.0),
                       periods=None, kmax: int = 1) -> dict:
    """Relative Weitzenboeck residual with the t = -1 Laplacian, and with other t as negative controls."""
    res, ctrl = [], {str(t): [] for t in t_control}
    for n in grids:
        T = _tables(n, metric, periods)
        st = op.Stencils(T)
        psi = op.band_limited_spinor(st.chart, seed=seed, kmax=kmax)
        res.append(op.weitzenboeck_residual(st, psi, -1.0))
        for t in t_control:
            ctrl[str(t)].append(op.weitzenboeck_residual(st, psi, t))
    sizes = [n if isinstance(n, int) else n[0] for n in grids]
    return {"grids": [_grid_label(n) for n in grids], "residual": res, "slopes": slopes(res, sizes),
            "negative_control": ctrl}


def lemma2_study(metric, grids: Sequence, t_values: Sequence[float] = (-3, -1, 0, 1), seed: int = 0,
                 periods=None, kmax: int = 1) -> dict:
    """``|lhs - rhs| / max(|lhs|, h^2)`` of the integrated twistor-norm identity for each t."""
    out = {str(t): [] for t in t_values}
    terms = {str(t): [] for t in t_values}
    for n in grids:
        T = _tables(n, metric, periods)
        st = op.Stencils(T)
        psi0 = op.band_limited_spinor(st.chart, seed=seed, kmax=kmax, levels=(0,))
        h = float(np.max(st.chart.spacing))
        for t in t_values:
            L = op.lemma2_identity_check(t, st, psi0)
            out[str(t)].append(L.relative(h))
            terms[str(t)].append({"lhs": L.lhs, "rhs": L.rhs})
    sizes = [n if isinstance(n, int) else n[0] for n in grids]
    return {"grids": [_grid_label(n) for n in grids], "relative": out,
            "slopes": {k: slopes(v, sizes) for k, v in out.items()}, "sides": terms}


def lemma4_study(f_expr: str, grids: Sequence, t_values: Sequence[float] = (-3, 0, 1), metric="flat",
                 periods=None) -> dict:
    """Twistor residual of the transported constant spinor on a flat (Kaehler) torus, with and without the exponent."""
    res = {str(t): [] for t in t_values}
    ctrl = {str(t): [] for t in t_values}
    for n in grids:
        ch = chart_for(n, periods)
        pair = cf.ConformalPair.build(ch, geo.metric_from_spec(ch, metric), f_expr)
        psi0 = cf.constant_spinor(ch)
        for t in t_values:
            res[str(t)].append(cf.lemma4_transport(pair, t, psi0)["residual"])
            ctrl[str(t)].append(cf.lemma4_transport(pair, t, psi0, exponent=False)["residual"])
    sizes = [n if isinstance(n, int) else n[0] for n in grids]
    return {"grids": [_grid_label(n) for n in grids], "residual": res,
            "slopes": {k: slopes(v, sizes) for k, v in res.items()}, "no_exponent": ctrl}


def transport_study(metric, f_expr: str, grids: Sequence, t_values: Sequence[float] = (-3, -1, 0, 1),
                    seed: int = 0, periods=None) -> dict:
    """Two-path residuals of the Levi-Civita and Hermitian transports under ``g -> e^f g``."""
    lc, herm, k_cov = [], {str(t): [] for t in t_values}, []
    for n in grids:
        ch = chart_for(n, periods)
        pair = cf.ConformalPair.build(ch, geo.metric_from_spec(ch, metric), f_expr)
        psi = op.band_limited_spinor(ch, seed=seed)
        psi0 = op.band_limited_spinor(ch, seed=seed + 1, levels=(0,))
        lc.append(cf.transport_levi_civita(pair, psi)["residual"])
        for t in t_values:
            herm[str(t)].append(cf.transport_hermitian_t(pair, t, psi0)["residual"])
        k_cov.append(pair.k_covariance_residual())
    sizes = [n if isinstance(n, int) else n[0] for n in grids]
    return {"grids": [_grid_label(n) for n in grids], "levi_civita": lc, "levi_civita_slopes": slopes(lc, sizes),
            "hermitian": herm, "hermitian_slopes": {k: slopes(v, sizes) for k, v in herm.items()},
            "k_covariance": k_cov}
