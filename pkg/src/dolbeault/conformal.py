"""Conformal changes ``g~ = e^f g`` of lattice metrics and spinor transport under them.

In the trivialized lattice gauge the spinor identification is the
identity on component arrays: the frame of ``g~`` is ``e^{-f/2}`` times
the frame of ``g`` (the Hermitian Gram-Schmidt frame is homogeneous), so a
component array describes the same spinor for both metrics.  All
conformal content sits in the frame rescaling and in the zeroth-order
terms of the transport formulas

    nabla~_X psi    = nabla_X psi - (1/4) X.df.psi - (1/4) X(f) psi,
    nabla~^t_X psi0 = nabla^t_X psi0 - ((t+1)/4) i (J df)(X) psi0   (psi0 in Sigma_0).

Both are checked here as two-path identities: the left side from the
rescaled tables, the right side from the base tables.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import expressions
from . import geometry as geo
from . import operators as op
from .clifford import GAMMA, cl
from .errors import HypothesisError

J = geo.J


@dataclass
class ConformalPair:
    """A base metric, its rescaling ``e^f g`` and both sets of geometry tables.

    Parameters
    ----------
    base : GeometryTables
    rescaled : GeometryTables
    f : ndarray
        The conformal exponent on the grid.
    """

    base: geo.GeometryTables
    rescaled: geo.GeometryTables
    f: np.ndarray

    @classmethod
    def build(cls, chart: geo.LatticeChart, metric: geo.MetricField, f) -> "ConformalPair":
        if not isinstance(f, np.ndarray):
            f = expressions.evaluate(f, chart)
        f = np.broadcast_to(np.asarray(f, dtype=float), chart.dims).copy()
        base = geo.compute_tables(chart, metric)
        rescaled = geo.compute_tables(chart, metric.rescaled(f))
        pair = cls(base, rescaled, f)
        defect = pair.identification_defect()
        if defect > 1e-12:
            raise ValueError(f"rescaled frame is not e^(-f/2) times the base frame (defect {defect:.2e})")
        return pair

    @property
    def chart(self) -> geo.LatticeChart:
        return self.base.chart

    @property
    def df(self) -> np.ndarray:
        """Base-frame components ``E_i(f)`` from the base derivative scheme."""
        return self.base.e(self.f)

    # ----- bookkeeping invariants -------------------------------------------------
    def identification_defect(self) -> float:
        """``max |E~_i - e^{-f/2} E_i|``, zero when the identification is the identity on components."""
        E, Et = self.base.frame, self.rescaled.frame
        return float(np.abs(Et - np.exp(-self.f / 2)[..., None, None] * E).max())

    def kaehler_form_defect(self) -> float:
        """``max |Omega~ - e^f Omega|`` in coordinates."""
        return float(np.abs(self.rescaled.kaehler_form
                            - np.exp(self.f)[..., None, None] * self.base.kaehler_form).max())

    def vector_defect(self, X: np.ndarray) -> float:
        """``max |g~(X~, X~) - g(X, X)|`` for a coordinate vector field X and ``X~ = e^{-f/2} X``."""
        gb, gt = self.base.metric.g, self.rescaled.metric.g
        Xt = np.exp(-self.f / 2)[..., None] * X
        lhs = np.einsum("...a,...ab,...b->...", Xt, gt, Xt)
        rhs = np.einsum("...a,...ab,...b->...", X, gb, X)
        return float(np.abs(lhs - rhs).max())

    def norm_bookkeeping(self, psi: np.ndarray) -> dict:
        """``||psi~||^2`` under g~ against ``sum e^{2f} |psi|^2 dvol_g`` by midpoint quadrature."""
        st_t = op.Stencils(self.rescaled)
        lhs = op.weighted_norm(st_t, psi) ** 2
        dens = np.sum(np.abs(psi) ** 2, axis=-1)
        rhs = float(np.sum(np.exp(2 * self.f) * self.base.sqrt_det * dens) * self.chart.cell_volume)
        return {"rescaled_norm_sq": lhs, "weighted_base_norm_sq": rhs,
                "relative": abs(lhs - rhs) / max(abs(rhs), 1e-300)}

    def k_covariance_residual(self) -> float:
        """Volume-weighted RMS of ``k~ - e^{-f} k``, relative to the RMS of k unless k vanishes."""
        k, kt = self.base.k, self.rescaled.k
        scale = geo.volume_rms(self.base, k)
        return geo.volume_rms(self.base, kt - np.exp(-self.f) * k) / (scale if scale > 1e-12 else 1.0)


def _select(T: np.ndarray, X: Optional[np.ndarray]) -> np.ndarray:
    """Contract a 1-form valued field (frame axis -2) with base-frame components of X."""
    if X is None:
        return T
    return np.einsum("...i,...ia->...a", X, T)


def transport_levi_civita(pair: ConformalPair, psi: np.ndarray, X: Optional[np.ndarray] = None) -> dict:
    """``nabla~_X psi~`` directly from the rescaled tables and through the base connection.

    Parameters
    ----------
    psi : ndarray
        Spinor field (component array, the same for both metrics).
    X : ndarray, optional
        Base-frame components of the direction field; by default all four
        base frame directions are returned along axis -2.

    Returns
    -------
    dict
        ``direct``, ``transported`` and the relative ``residual`` between them.
    """
    st_b, st_t = op.Stencils(pair.base), op.Stencils(pair.rescaled)
    half = np.exp(pair.f / 2)[..., None, None]
    # nabla~ along E_i = e^{f/2} E~_i
    direct = half * st_t.covariant(st_t.to_weighted(psi), None) / st_t.half[..., None, None]
    nab = st_b.covariant(st_b.to_weighted(psi), None) / st_b.half[..., None, None]
    dfc = cl(pair.df)  # Clifford multiplication by df
    Xdf = np.einsum("iab,...bc,...c->...ia", GAMMA, dfc, psi)
    transported = nab - 0.25 * Xdf - 0.25 * pair.df[..., :, None] * psi[..., None, :]
    direct, transported = _select(direct, X), _select(transported, X)
    return {"direct": direct, "transported": transported,
            "residual": float(np.linalg.norm(direct - transported) / max(np.linalg.norm(direct), 1e-300))}


def transport_hermitian_t(pair: ConformalPair, t: float, psi0: np.ndarray, X: Optional[np.ndarray] = None) -> dict:
    """``nabla~^t_X psi0~`` from the rescaled tables and from the base connection plus ``-(t+1)/4 i (J df)(X)``."""
    op.require_sigma0(psi0, "transport_hermitian_t")
    st_b, st_t = op.Stencils(pair.base), op.Stencils(pair.rescaled)
    half = np.exp(pair.f / 2)[..., None, None]
    direct = half * st_t.covariant(st_t.to_weighted(psi0), t) / st_t.half[..., None, None]
    nab = st_b.covariant(st_b.to_weighted(psi0), t) / st_b.half[..., None, None]
    jdf = np.einsum("kl,...l->...k", J, pair.df)
    transported = nab - (t + 1) / 4 * 1j * jdf[..., :, None] * psi0[..., None, :]
    off = max(np.abs(direct[..., 1:]).max(), np.abs(transported[..., 1:]).max())
    direct, transported = _select(direct, X), _select(transported, X)
    return {"direct": direct, "transported": transported, "splitting_leak": float(off),
            "residual": float(np.linalg.norm(direct - transported) / max(np.linalg.norm(direct), 1e-300))}


def lemma4_transport(pair: ConformalPair, t: float, psi0: np.ndarray, tol: float = 1e-8,
                     exponent: bool = True) -> dict:
    """Transport a base Hermitian twistor spinor and measure ``||P~^t_0 phi|| / ||phi||``.

    ``phi = e^{(t+1) f / 4} psi0~``; with ``exponent=False`` the factor is
    omitted (negative control).

    Raises
    ------
    HypothesisError
        If ``psi0`` is not a twistor spinor of the base within ``tol``.
    """
    op.require_sigma0(psi0, "lemma4_transport")
    st_b, st_t = op.Stencils(pair.base), op.Stencils(pair.rescaled)
    base_res = np.sqrt(op.build_twistor_p0(t, st_b).norm_sq(psi0)) / op.weighted_norm(st_b, psi0)
    if base_res > tol:
        raise HypothesisError(f"base spinor is not a twistor spinor for t={t} (residual {base_res:.2e})")
    phi = (np.exp((t + 1) * pair.f / 4)[..., None] if exponent else 1.0) * psi0
    res = np.sqrt(op.build_twistor_p0(t, st_t).norm_sq(phi)) / op.weighted_norm(st_t, phi)
    return {"field": phi, "residual": float(res), "base_residual": float(base_res), "t": t,
            "exponent": exponent}


def constant_spinor(chart: geo.LatticeChart, component: int = 0) -> np.ndarray:
    psi = np.zeros(chart.dims + (4,), dtype=complex)
    psi[..., component] = 1.0
    return psi


def eigenvalue_scaling(chart: geo.LatticeChart, metric: geo.MetricField, c: float, count: int = 6,
                       seed: int = 0) -> dict:
    """Low spectrum of Box for ``g`` and ``e^c g``; returns both with the predicted factor ``e^{-c/2}``."""
    from .spectral import low_spectrum

    base = op.build_dolbeault(geo.compute_tables(chart, metric))
    resc = op.build_dolbeault(geo.compute_tables(chart, metric.rescaled(np.full(chart.dims, float(c)))))
    a = low_spectrum(op.square(base), count, seed=seed).values
    b = low_spectrum(op.square(resc), count, seed=seed).values
    return {"base_sq": a, "rescaled_sq": b, "factor": float(np.exp(-c / 2)),
            "max_dev": float(np.abs(b - np.exp(-c) * a).max())}
