"""Hermitian geometry on a periodic 4-dimensional lattice.

The manifold is the complex torus C^2 / lattice with the standard complex
structure ``J d1 = d2``, ``J d3 = d4``.  A metric is sampled on a uniform
periodic grid; every derived quantity is built from one deterministic
orthonormal frame and finite differences of it.

Index conventions (frame components throughout):

* ``frame[..., i, a]`` is the coordinate component a of e_i;
* ``omega[..., i, j, k] = g(nabla_{e_i} e_j, e_k)`` (Levi-Civita);
* ``riemann[..., a, b, c, d] = g(R(e_a, e_b) e_c, e_d)`` with
  ``R(X, Y) = [nabla_X, nabla_Y] - nabla_[X, Y]``;
* the codifferential is ``delta alpha = -sum_i (nabla_{e_i} alpha)(e_i, ...)``.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import sympy as sp

from . import expressions
from .clifford import GAMMA, J_FRAME, OMEGA, cl
from .errors import MetricError

J = J_FRAME.astype(float)


@dataclass(frozen=True)
class LatticeChart:
    dims: tuple
    periods: tuple = (2 * np.pi,) * 4

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        periods = tuple(float(p) for p in self.periods)
        if len(dims) != 4 or len(periods) != 4:
            raise ValueError("a chart needs exactly four dims and four periods")
        if min(dims) < 4:
            raise ValueError(f"every axis needs at least 4 points, got {dims}")
        if min(periods) <= 0:
            raise ValueError("periods must be positive")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "periods", periods)

    @classmethod
    def cube(cls, n, period=2 * np.pi):
        return cls((n,) * 4, (period,) * 4)

    @property
    def spacing(self) -> np.ndarray:
        return np.array(self.periods) / np.array(self.dims)

    @property
    def npoints(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def coordinates(self):
        axes = [np.arange(n) * h for n, h in zip(self.dims, self.spacing)]
        return np.meshgrid(*axes, indexing="ij")

    def refine(self):
        return LatticeChart(tuple(2 * n for n in self.dims), self.periods)


class Differ:
    """Periodic first derivatives along the four lattice axes.

    ``mode="central"`` is the second-order centred difference used
    everywhere by default; ``mode="spectral"`` differentiates exactly in
    Fourier space and stands in for user-supplied analytic derivatives.
    """

    def __init__(self, chart: LatticeChart, mode: str = "central"):
        if mode not in ("central", "spectral"):
            raise ValueError(f"unknown derivative mode {mode!r}")
        self.chart = chart
        self.mode = mode

    def __call__(self, F: np.ndarray, axis: int) -> np.ndarray:
        h = self.chart.spacing[axis]
        if self.mode == "central":
            return (np.roll(F, -1, axis) - np.roll(F, 1, axis)) / (2 * h)
        n = self.chart.dims[axis]
        k = 2 * np.pi * np.fft.fftfreq(n, d=h)
        if n % 2 == 0:
            k[n // 2] = 0.0
        shape = [1] * F.ndim
        shape[axis] = n
        return np.real(np.fft.ifft(np.fft.fft(F, axis=axis) * (1j * k).reshape(shape), axis=axis))

    def grad(self, F: np.ndarray) -> np.ndarray:
        """All four partial derivatives stacked on a new trailing axis."""
        return np.stack([self(F, a) for a in range(4)], axis=-1)


@dataclass
class MetricField:
    """A J-compatible metric sampled on the grid (coordinate components)."""

    chart: LatticeChart
    g: np.ndarray
    derivatives: str = "central"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        if self.g.shape != self.chart.dims + (4, 4):
            raise MetricError(f"metric array has shape {self.g.shape}, expected {self.chart.dims + (4, 4)}")
        self.validate()

    def validate(self, tol: float = 1e-10):
        g = self.g
        scale = np.max(np.abs(g))
        asym = np.abs(g - np.swapaxes(g, -1, -2)).max(axis=(-1, -2))
        if asym.max() > tol * scale:
            raise MetricError("metric is not symmetric", np.unravel_index(asym.argmax(), asym.shape))
        eig_min = np.linalg.eigvalsh(g)[..., 0]
        if eig_min.min() <= 0:
            raise MetricError("metric is not positive definite", np.unravel_index(eig_min.argmin(), eig_min.shape))
        compat = np.abs(np.einsum("ca,...cd,db->...ab", J, g, J) - g).max(axis=(-1, -2))
        if compat.max() > tol * scale:
            raise MetricError("metric is not compatible with J", np.unravel_index(compat.argmax(), compat.shape))

    def rescaled(self, f: np.ndarray) -> "MetricField":
        return MetricField(self.chart, np.exp(f)[..., None, None] * self.g, self.derivatives,
                           dict(self.meta, conformal_factor=f))

    @classmethod
    def flat(cls, chart, derivatives="central"):
        g = np.broadcast_to(np.eye(4), chart.dims + (4, 4)).copy()
        return cls(chart, g, derivatives, {"kind": "flat"})

    @classmethod
    def from_hermitian(cls, chart, H: np.ndarray, derivatives="central", meta=None):
        """Real metric g(X, Y) = Re(X^* H Y) from a field of 2x2 Hermitian matrices.

        Complex coordinates are z_1 = x1 + i x2 and z_2 = x3 + i x4.
        """
        g = np.empty(chart.dims + (4, 4))
        for j in range(2):
            for k in range(2):
                re, im = H[..., j, k].real, H[..., j, k].imag
                g[..., 2 * j, 2 * k] = re
                g[..., 2 * j + 1, 2 * k + 1] = re
                g[..., 2 * j, 2 * k + 1] = -im
                g[..., 2 * j + 1, 2 * k] = im
        return cls(chart, g, derivatives, meta or {"kind": "hermitian"})


def conformally_flat(chart, f_expr, derivatives="central") -> MetricField:
    f = expressions.evaluate(f_expr, chart)
    return MetricField.flat(chart, derivatives).rescaled(f)


def hermitian_from_expressions(chart, h11, h22, h12_re="0", h12_im="0", derivatives="central") -> MetricField:
    ev = lambda e: expressions.evaluate(e, chart)
    H = np.zeros(chart.dims + (2, 2), dtype=complex)
    H[..., 0, 0] = ev(h11)
    H[..., 1, 1] = ev(h22)
    H[..., 0, 1] = ev(h12_re) + 1j * ev(h12_im)
    H[..., 1, 0] = np.conj(H[..., 0, 1])
    return MetricField.from_hermitian(chart, H, derivatives,
                                      {"kind": "hermitian", "h11": str(h11), "h22": str(h22),
                                       "h12_re": str(h12_re), "h12_im": str(h12_im)})


def kahler_potential(chart, phi_expr, derivatives="central") -> MetricField:
    """Kaehler metric with Hermitian matrix H_jk = delta_jk + d^2 phi / dz_k dzbar_j."""
    phi = expressions.parse(phi_expr)
    H = np.zeros(chart.dims + (2, 2), dtype=complex)
    for j in range(2):
        for k in range(2):
            e = expressions.wirtinger(expressions.wirtinger(phi, j, conj=True), k, conj=False)
            e = sp.expand(e)
            H[..., j, k] = (1.0 if j == k else 0.0) + expressions.evaluate(sp.re(e), chart) \
                + 1j * expressions.evaluate(sp.im(e), chart)
    return MetricField.from_hermitian(chart, H, derivatives, {"kind": "kahler_potential", "phi": str(phi_expr)})


def random_hermitian_expressions(seed: int, amplitude: float = 0.1, max_mode: int = 1) -> dict:
    """Seeded low-mode trigonometric Hermitian metric entries (generically non-Kaehler)."""
    rng = np.random.default_rng(seed)

    def trig():
        terms = []
        for _ in range(2):
            k = rng.integers(-max_mode, max_mode + 1, size=4)
            if not k.any():
                k[rng.integers(4)] = 1
            phase = "+".join(f"({int(kk)})*2*pi*x{a + 1}/L{a + 1}" for a, kk in enumerate(k))
            c = rng.uniform(-1, 1)
            fn = "sin" if rng.random() < 0.5 else "cos"
            terms.append(f"({c:.6f})*{fn}({phase})")
        return f"{amplitude}*(" + " + ".join(terms) + ")"

    return {"h11": f"1 + {trig()}", "h22": f"1 + {trig()}", "h12_re": trig(), "h12_im": trig()}


def random_scalar_expression(seed: int, amplitude: float = 0.3, max_mode: int = 1, terms: int = 3) -> str:
    """Seeded smooth periodic scalar built from a few low trigonometric modes."""
    rng = np.random.default_rng(seed)
    parts = []
    for _ in range(terms):
        k = rng.integers(-max_mode, max_mode + 1, size=4)
        if not k.any():
            k[rng.integers(4)] = 1
        phase = "+".join(f"({int(kk)})*2*pi*x{a + 1}/L{a + 1}" for a, kk in enumerate(k))
        fn = "sin" if rng.random() < 0.5 else "cos"
        parts.append(f"({rng.uniform(-1, 1):.6f})*{fn}({phase})")
    return f"{amplitude}*(" + " + ".join(parts) + ")"


def random_hermitian(chart, seed=0, amplitude=0.1, derivatives="central") -> MetricField:
    return hermitian_from_expressions(chart, derivatives=derivatives, **random_hermitian_expressions(seed, amplitude))


def metric_from_spec(chart, spec, derivatives="central") -> MetricField:
    """Build a metric from the scenario-file description (see README)."""
    from .errors import ScenarioError

    if spec == "flat":
        return MetricField.flat(chart, derivatives)
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ScenarioError(f"cannot interpret metric description {spec!r}")
    (kind, value), = spec.items()
    if kind == "conformal_factor":
        return conformally_flat(chart, value, derivatives)
    if kind == "kahler_potential":
        return kahler_potential(chart, value, derivatives)
    if kind == "hermitian":
        return hermitian_from_expressions(chart, derivatives=derivatives, **value)
    if kind == "random_hermitian":
        return random_hermitian(chart, derivatives=derivatives, **value)
    if kind == "components":
        g = np.stack([np.stack([expressions.evaluate(e, chart) for e in row], -1) for row in value], -2)
        return MetricField(chart, g, derivatives, {"kind": "components"})
    raise ScenarioError(f"unknown metric kind {kind!r}")


def hermitian_frame(g: np.ndarray) -> np.ndarray:
    """Orthonormal frame with e2 = J e1 and e4 = J e3.

    Unitary Gram-Schmidt on the coordinate vectors d1 and d3, i.e. the
    Cholesky factorization of the Hermitian form in a fixed axis order.
    """
    shape = g.shape[:-2]
    E = np.zeros(shape + (4, 4))
    ip = lambda u, v: np.einsum("...a,...ab,...b->...", u, g, v)
    d1 = np.zeros(shape + (4,))
    d1[..., 0] = 1.0
    e1 = d1 / np.sqrt(ip(d1, d1))[..., None]
    e2 = e1 @ J.T
    d3 = np.zeros(shape + (4,))
    d3[..., 2] = 1.0
    v = d3 - ip(d3, e1)[..., None] * e1 - ip(d3, e2)[..., None] * e2
    e3 = v / np.sqrt(ip(v, v))[..., None]
    e4 = e3 @ J.T
    E[..., 0, :], E[..., 1, :], E[..., 2, :], E[..., 3, :] = e1, e2, e3, e4
    return E


@dataclass
class GeometryTables:
    chart: LatticeChart
    metric: MetricField
    frame: np.ndarray
    coframe: np.ndarray
    sqrt_det: np.ndarray
    structure: np.ndarray
    omega: np.ndarray
    riemann: np.ndarray
    kaehler_form: np.ndarray
    lee_form: np.ndarray
    lee_form_coord: np.ndarray
    nabla_theta: np.ndarray
    d_theta: np.ndarray
    delta_theta: np.ndarray
    theta_sq: np.ndarray
    ricci: np.ndarray
    ricci_star: np.ndarray
    s: np.ndarray
    s_star: np.ndarray
    k: np.ndarray
    differ: Differ

    def e(self, F: np.ndarray) -> np.ndarray:
        """Frame derivatives e_i(F) of a field; new axis -1 indexes i.  F has point axes first."""
        dF = self.differ.grad(F)
        extra = F.ndim - 4
        E = self.frame.reshape(self.chart.dims + (1,) * extra + (4, 4))
        return np.einsum("...a,...ia->...i", dF, E)

    @property
    def lichnerowicz_scale(self):
        return float(np.max(np.abs(self.s)))

    def d_theta_self_dual(self) -> np.ndarray:
        """Self-dual part of d theta (frame components, orientation e1 e2 e3 e4)."""
        return 0.5 * (self.d_theta + hodge_star(self.d_theta))

    def summary(self) -> dict:
        out = {}
        for name in ("s", "s_star", "k", "delta_theta", "theta_sq"):
            a = getattr(self, name)
            out[name] = {"min": float(a.min()), "max": float(a.max()), "mean": float(a.mean())}
        out["residuals"] = curvature_residuals(self)
        return out


_EPS = np.zeros((4, 4, 4, 4))
for _p in __import__("itertools").permutations(range(4)):
    _EPS[_p] = np.linalg.det(np.eye(4)[list(_p)])


def hodge_star(F: np.ndarray) -> np.ndarray:
    return 0.5 * np.einsum("ijkl,...kl->...ij", _EPS, F)


def compute_tables(chart: LatticeChart, metric: MetricField) -> GeometryTables:
    """Frame, Levi-Civita coefficients, Lee form and curvature scalars on the grid."""
    if metric.chart != chart:
        raise ValueError("metric was sampled on a different chart")
    metric.validate()
    D = Differ(chart, metric.derivatives)
    g = metric.g
    E = hermitian_frame(g)
    Theta = np.einsum("...ab,...ib->...ia", g, E)  # e^i(d_a)
    sqrt_det = np.sqrt(np.linalg.det(g))

    # structure functions c_ijk = g([e_i, e_j], e_k)
    dE = np.stack([D(E, a) for a in range(4)], axis=-3)  # [..., a, i, b] = d_a E_i^b
    eE = np.einsum("...ia,...ajb->...ijb", E, dE)  # e_i(E_j^b)
    comm = eE - np.swapaxes(eE, -3, -2)
    c = np.einsum("...ijb,...kb->...ijk", comm, Theta)
    omega = 0.5 * (c - np.einsum("...jki->...ijk", c) + np.einsum("...kij->...ijk", c))

    # curvature; e_a(omega_bcd) via finite differences of the omega field
    dom = np.stack([D(omega, a) for a in range(4)], axis=-1)
    e_om = np.einsum("...bcdx,...ax->...abcd", dom, E)
    R = (e_om - np.einsum("...bacd->...abcd", e_om)
         + np.einsum("...bcm,...amd->...abcd", omega, omega)
         - np.einsum("...acm,...bmd->...abcd", omega, omega)
         - np.einsum("...abm,...mcd->...abcd", c, omega))
    del dom, e_om

    Om = J.copy()  # Omega(e_j, e_k) = g(e_j, J e_k) = J[j, k]
    nabla_Om = -np.einsum("...ijm,mk->...ijk", omega, Om) - np.einsum("...ikm,jm->...ijk", omega, Om)
    delta_Om = -np.einsum("...iik->...k", nabla_Om)
    theta = np.einsum("...l,ln->...n", delta_Om, J)  # theta(X) = delta Omega(JX)

    e_theta = np.einsum("...xa,...ia->...ix", D.grad(theta)[..., :, :], E)  # [..., i, j] = e_i(theta_j)
    nabla_theta = e_theta - np.einsum("...ijm,...m->...ij", omega, theta)
    d_theta = nabla_theta - np.swapaxes(nabla_theta, -1, -2)
    delta_theta = -np.einsum("...ii->...", nabla_theta)
    theta_sq = np.einsum("...n,...n->...", theta, theta)

    ricci = np.einsum("...ixyi->...xy", R)
    s = np.einsum("...ii->...", ricci)
    # rho*(X, Y) = sum_i R(e_i, X, JY, J e_i)
    ricci_star = np.einsum("...ixlm,ly,mi->...xy", R, J, J)
    s_star = np.einsum("...ii->...", ricci_star)
    k = (3 * s_star - s) / 2

    Om_coord = np.einsum("...ac,cb->...ab", g, J)
    theta_coord = np.einsum("...n,...na->...a", theta, Theta)
    return GeometryTables(chart, metric, E, Theta, sqrt_det, c, omega, R, Om_coord, theta, theta_coord,
                          nabla_theta, d_theta, delta_theta, theta_sq, ricci, ricci_star, s, s_star, k, D)


def _to_frame3(T, E):
    return np.einsum("...abc,...ia,...jb,...kc->...ijk", T, E, E, E)


def d_omega_residual(tables: GeometryTables) -> np.ndarray:
    """Pointwise norm of d Omega - theta ^ Omega, with d Omega from coordinate differences."""
    D, Om, th = tables.differ, tables.kaehler_form, tables.lee_form_coord
    dOm_a = np.stack([D(Om, a) for a in range(4)], axis=-3)  # [..., a, b, c] = d_a Om_bc
    dOm = dOm_a + np.einsum("...bca->...abc", dOm_a) + np.einsum("...cab->...abc", dOm_a)
    wedge = (np.einsum("...a,...bc->...abc", th, Om) + np.einsum("...b,...ca->...abc", th, Om)
             + np.einsum("...c,...ab->...abc", th, Om))
    res = _to_frame3(dOm - wedge, tables.frame)
    return np.sqrt(np.sum(res ** 2, axis=(-1, -2, -3)) / 6)


def lee_identity_residual(tables: GeometryTables) -> np.ndarray:
    """s - s* - 2 delta theta - |theta|^2 at every grid point."""
    return tables.s - tables.s_star - 2 * tables.delta_theta - tables.theta_sq


def volume_rms(tables: GeometryTables, F: np.ndarray) -> float:
    w = tables.sqrt_det
    return float(np.sqrt(np.sum(w * F ** 2) / np.sum(w)))


def curvature_residuals(tables: GeometryTables) -> dict:
    lee = lee_identity_residual(tables)
    dom = d_omega_residual(tables)
    R = tables.riemann
    pair = np.abs(R - np.einsum("...cdab->...abcd", R)).max()
    return {
        "lee_identity_max": float(np.abs(lee).max()),
        "lee_identity_rms": volume_rms(tables, lee),
        "d_omega_max": float(dom.max()),
        "d_omega_rms": volume_rms(tables, dom),
        "pair_symmetry_max": float(pair),
        "k_definition_max": float(np.abs(tables.k - (3 * tables.s_star - tables.s) / 2).max()),
    }


def tangent_torsion(t: float, theta: np.ndarray) -> np.ndarray:
    """A[..., i, j, k] = g(A^t(e_i) e_j, e_k) with nabla^t = nabla + A^t.

    A^t(X)Y = -(t+1)/4 theta(Y) X + (t-1)/4 theta(JY) JX - t/2 theta(JX) JY
              + (t+1)/4 g(X, Y) theta# - (t-1)/4 g(X, JY) J theta#
    """
    I4 = np.eye(4)
    thJ = np.einsum("...l,lj->...j", theta, J)  # theta(J e_j)
    Jth = np.einsum("kl,...l->...k", J, theta)  # components of J theta#
    A = (-(t + 1) / 4 * np.einsum("...j,ik->...ijk", theta, I4)
         + (t - 1) / 4 * np.einsum("...j,ki->...ijk", thJ, J)
         - t / 2 * np.einsum("...i,kj->...ijk", thJ, J)
         + (t + 1) / 4 * np.einsum("ij,...k->...ijk", I4, theta)
         - (t - 1) / 4 * np.einsum("ij,...k->...ijk", J, Jth))
    return A


def connection_coefficients(t: float, tables: GeometryTables) -> np.ndarray:
    """Frame coefficients g(nabla^t_{e_i} e_j, e_k) of the canonical Hermitian connection."""
    return tables.omega + tangent_torsion(t, tables.lee_form)


def spin_lift(conn: np.ndarray) -> np.ndarray:
    """Spinor connection matrices (1/4) sum_jk w_ijk e_j e_k for frame coefficients w_ijk."""
    skew = 0.5 * (conn - np.swapaxes(conn, -1, -2))
    gg = np.einsum("jab,kbc->jkac", GAMMA, GAMMA)
    return 0.25 * np.einsum("...ijk,jkac->...iac", skew, gg)


def levi_civita_spin(tables: GeometryTables) -> np.ndarray:
    return spin_lift(tables.omega)


def hermitian_spin_correction(t: float, theta: np.ndarray) -> np.ndarray:
    """Zeroth-order spinor term C^t_i with nabla^t_{e_i} = nabla_{e_i} + C^t_i.

    C^t(X) = (1/8)[(t+1) X theta + (t-1) JX J theta + 2t theta(X) + 2t theta(JX) Omega].
    """
    th_cl = cl(theta)
    Jth = np.einsum("kl,...l->...k", J, theta)
    Jth_cl = cl(Jth)
    thJ = np.einsum("...l,li->...i", theta, J)  # theta(J e_i)
    out = np.empty(theta.shape[:-1] + (4, 4, 4), dtype=complex)
    for i in range(4):
        Xi = GAMMA[i]
        JXi = np.einsum("k,kab->ab", J[:, i], GAMMA)
        out[..., i, :, :] = ((t + 1) * Xi @ th_cl + (t - 1) * JXi @ Jth_cl
                             + 2 * t * theta[..., i, None, None] * np.eye(4)
                             + 2 * t * thJ[..., i, None, None] * OMEGA) / 8
    return out


def spinor_connection(t: float, tables: GeometryTables) -> np.ndarray:
    """Spinor connection matrices of nabla^t, shape (..., 4 directions, 4, 4)."""
    return levi_civita_spin(tables) + hermitian_spin_correction(t, tables.lee_form)


def sigma0_connection_term(t: float, theta: np.ndarray) -> np.ndarray:
    """The Sigma_0 specialization: C^t(e_i) psi_0 for psi_0 = (1, 0, 0, 0), shape (..., 4, 4)."""
    psi0 = np.array([1, 0, 0, 0], dtype=complex)
    th_psi = cl(theta) @ psi0
    thJ = np.einsum("...l,li->...i", theta, J)
    out = np.empty(theta.shape[:-1] + (4, 4), dtype=complex)
    for i in range(4):
        out[..., i, :] = (GAMMA[i] @ th_psi[..., :, None])[..., 0] / 4 \
            + (theta[..., i] / 4 + 1j * (t + 1) / 4 * thJ[..., i])[..., None] * psi0
    return out


def conformal_rescale(chart: LatticeChart, metric: MetricField, f) -> MetricField:
    """g~ = e^f g; ``f`` is an expression or an array on the grid."""
    if not isinstance(f, np.ndarray):
        f = expressions.evaluate(f, chart)
    return metric.rescaled(f)


def coordinate_riemann(tables: GeometryTables) -> np.ndarray:
    """Frame components g(R(e_a, e_b) e_c, e_d) from coordinate Christoffel symbols.

    An independent curvature path: differences of g itself rather than of
    the orthonormal frame.  Used as an oracle for the frame computation.
    """
    D, g, E = tables.differ, tables.metric.g, tables.frame
    ginv = np.linalg.inv(g)
    dg = D.grad(g)  # [..., b, c, a] = d_a g_bc
    # Gamma^a_{bc} = 1/2 g^{ad} (d_b g_dc + d_c g_db - d_d g_bc)
    low = 0.5 * (np.einsum("...dcb->...dbc", dg) + np.einsum("...dbc->...dbc", dg) - np.einsum("...bcd->...dbc", dg))
    Gam = np.einsum("...ad,...dbc->...abc", ginv, low)
    dGam = D.grad(Gam)  # [..., a, b, c, x] = d_x Gamma^a_bc
    # R^a_{bcd} = d_c Gamma^a_{db} - d_d Gamma^a_{cb} + Gamma^a_{ce} Gamma^e_{db} - Gamma^a_{de} Gamma^e_{cb}
    Rup = (np.einsum("...adbc->...abcd", dGam) - np.einsum("...acbd->...abcd", dGam)
           + np.einsum("...ace,...edb->...abcd", Gam, Gam) - np.einsum("...ade,...ecb->...abcd", Gam, Gam))
    R_cdbw = np.einsum("...wa,...abcd->...cdbw", g, Rup)
    return np.einsum("...cdbw,...ic,...jd,...kb,...lw->...ijkl", R_cdbw, E, E, E, E, optimize=True)



def lee_identity_residual_against(tables: GeometryTables, oracle: GeometryTables) -> np.ndarray:
    """s - s* from ``tables`` minus 2 delta theta + |theta|^2 from ``oracle``.

    The frame-intrinsic residual :func:`lee_identity_residual` vanishes to
    roundoff on any grid, because the discrete curvature and the discrete Lee
    form share one set of connection coefficients.  Pairing the curvature of
    a central-difference table with the Lee-form terms of a spectrally
    differentiated table on the same chart measures the truncation error
    instead.
    """
    if oracle.chart != tables.chart:
        raise ValueError("oracle tables live on a different chart")
    return tables.s - tables.s_star - 2 * oracle.delta_theta - oracle.theta_sq
