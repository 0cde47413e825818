"""Sphere and torus factors, their Kaehler products, and the conformally rescaled product surfaces.

Spinors on a 2-sphere are pairs of spin-weighted functions of weight +1/2
and -1/2.  For an azimuthal sector ``exp(i m phi)`` a weight-s function is
``sin(theta/2)^a cos(theta/2)^b p(cos theta)`` with integer ``a = |m + s|``,
``b = |m - s|`` and a polynomial p, so every operator in this module
becomes a small dense matrix on Jacobi polynomials.  The edth operator
``eth`` maps weight -1/2 to +1/2; the round Dirac operator of radius r is
``(1/r) [[0, eth], [eth^*, 0]]``.

On a product of two surfaces the spinor module is the tensor product of
the factor modules with components ordered
``(eta_+ chi_+, eta_+ chi_-, eta_- chi_+, eta_- chi_-)``; this is the
order ``(Sigma_0; Sigma_1, Sigma_1; Sigma_2)`` of the lattice backend, and
the Kaehler form acts as ``diag(2i, 0, 0, -2i)``.

Conformal rescalings ``g~ = e^F g`` of a Kaehler product with ``F`` a
function of the first factor's polar angle are handled through the
covariance of the Dolbeault operator: ``Box~ = e^{-5F/4} (D + A(dF))
e^{3F/4}`` with ``A(a) = a/4 + (Ja) Omega/4``.  The eigenproblem
becomes a generalized Hermitian one, ``K rho = lambda W rho``, solved per
azimuthal sector and per eigenvalue of the second factor.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import sympy as sy
from numpy.polynomial import chebyshev as cheb
from numpy.polynomial.legendre import leggauss
from scipy.linalg import eigh, eigvals
from scipy.special import eval_jacobi

from . import expressions as ex
from .errors import HypothesisError, ScenarioError

# ----------------------------------------------------------------------------
# quadrature and spin-weighted bases


def theta_quadrature(nq: int):
    """Gauss-Legendre nodes in theta on (0, pi) with weights for ``2 pi sin(theta) d theta``."""
    x, w = leggauss(nq)
    theta = 0.5 * np.pi * (x + 1)
    return theta, w * 0.5 * np.pi * np.sin(theta) * 2 * np.pi


def _exponents(m: float, s: float):
    a, b = abs(m + s), abs(m - s)
    if abs(a - round(a)) > 1e-12 or abs(b - round(b)) > 1e-12:
        raise ValueError("m and s must both be half-integers")
    return int(round(a)), int(round(b))


class SpinWeightedBasis:
    """Orthonormal weight-s functions of azimuthal number m, tabulated on quadrature nodes.

    Attributes
    ----------
    values, dtheta : ndarray, shape (n, nq)
        Basis functions and their theta derivatives.
    """

    def __init__(self, m: float, s: float, n: int, theta: np.ndarray, weights: np.ndarray):
        self.m, self.s, self.n = m, s, n
        self.theta, self.weights = theta, weights
        a, b = _exponents(m, s)
        self.a, self.b = a, b
        x = np.cos(theta)
        S, C = np.sin(theta / 2), np.cos(theta / 2)
        pref = S ** a * C ** b
        dpref = pref * (a * C ** 2 - b * S ** 2) / np.sin(theta)
        P = np.array([eval_jacobi(k, a, b, x) for k in range(n)])
        dP = np.array([0.5 * (k + a + b + 1) * eval_jacobi(k - 1, a + 1, b + 1, x) if k else 0 * x
                       for k in range(n)])
        F = P * pref
        dF = P * dpref - np.sin(theta) * dP * pref
        G = (F * weights) @ F.T
        L = np.linalg.cholesky(G)
        Linv = np.linalg.inv(L)
        self.values = Linv @ F
        self.dtheta = Linv @ dF

    def eth(self, values=None, dtheta=None):
        """``eth f = -(f' - s cot(theta) f - m csc(theta) f)``, raising the weight by one."""
        f = self.values if values is None else values
        d = self.dtheta if dtheta is None else dtheta
        th = self.theta
        return -(d - self.s * np.cos(th) / np.sin(th) * f - self.m / np.sin(th) * f)

    def eth_bar(self, values=None, dtheta=None):
        """``eth-bar f = -(f' + s cot(theta) f + m csc(theta) f)``, lowering the weight by one."""
        f = self.values if values is None else values
        d = self.dtheta if dtheta is None else dtheta
        th = self.theta
        return -(d + self.s * np.cos(th) / np.sin(th) * f + self.m / np.sin(th) * f)

    def gram(self, other: "SpinWeightedBasis", f: np.ndarray = None) -> np.ndarray:
        """``<self_k, f other_j>`` by quadrature; f defaults to 1."""
        w = self.weights if f is None else self.weights * f
        return (self.values * w) @ other.values.T

    def project(self, f: np.ndarray) -> np.ndarray:
        """Coefficients of the orthogonal projection of tabulated values onto the basis."""
        return (self.values * self.weights) @ f


@dataclass
class SphereSector:
    """The spin-1/2 sector of azimuthal number m on a sphere of given radius."""

    m: float
    radius: float
    n: int
    nq: int = 0

    def __post_init__(self):
        self.nq = self.nq or 4 * (self.n + int(abs(self.m))) + 40
        self.theta, self.weights = theta_quadrature(self.nq)
        self.plus = SpinWeightedBasis(self.m, 0.5, self.n, self.theta, self.weights)
        self.minus = SpinWeightedBasis(self.m, -0.5, self.n, self.theta, self.weights)
        # eth: weight -1/2 -> +1/2, and the projection defect measuring exactness
        img = self.minus.eth()
        self.eth_matrix = (self.plus.values * self.weights) @ img.T
        full = np.einsum("jq,jq,q->j", img, img, self.weights)
        self.eth_defect = float(np.max(np.abs(full - np.sum(np.abs(self.eth_matrix) ** 2, axis=0))))

    def eth_bar_matrix(self) -> np.ndarray:
        """``<minus_k, eth-bar plus_j>``; equals ``-eth_matrix^H`` when eth-bar is minus the adjoint of eth."""
        return (self.minus.values * self.weights) @ self.plus.eth_bar().T

    def dirac(self) -> np.ndarray:
        """Round Dirac operator on (plus, minus) coefficients."""
        E = self.eth_matrix / self.radius
        Z = np.zeros_like(E)
        return np.block([[Z, E], [E.conj().T, Z]])

    def lowest_levels(self) -> np.ndarray:
        """``l + 1/2`` for the basis levels contained in this sector."""
        return abs(self.m) + np.arange(self.n) + 0.5


def sphere_oracle(radius: float, m: float, n: int) -> np.ndarray:
    """Independent oracle: Chebyshev collocation of the reduced Dirac system in x = cos(theta).

    Returns the computed eigenvalues (real parts) ordered by magnitude; the
    top of the list contains truncation artefacts and should be discarded.  The unknowns are
    the polynomial parts p, q of the two components; the first-order
    operators eth and -eth-bar act on them through pointwise coefficients.
    """
    j = np.arange(n)
    x = np.cos(np.pi * (j + 0.5) / n)
    theta = np.arccos(x)
    S, C = np.sin(theta / 2), np.cos(theta / 2)
    V = cheb.chebvander(x, n - 1)
    dV = np.stack([cheb.chebval(x, cheb.chebder(np.eye(n)[k])) for k in range(n)], axis=1)
    Dx = dV @ np.linalg.inv(V)
    sin = np.sin(theta)

    def first_order(s_from, sign_m):
        a, b = _exponents(m, s_from)
        a2, b2 = _exponents(m, s_from + (1 if sign_m < 0 else -1))
        rel = S ** (a - a2) * C ** (b - b2)
        # f = S^a C^b p;  f' = S^a C^b [ (a C^2 - b S^2)/sin p - sin dp/dx ]
        base = (a * C ** 2 - b * S ** 2) / sin
        if sign_m < 0:   # eth on weight s_from: -(f' - s cot f - m csc f)
            c0 = -rel * (base - s_from * x / sin - m / sin)
            c1 = rel * sin
        else:            # -eth-bar on weight s_from: f' + s cot f + m csc f
            c0 = rel * (base + s_from * x / sin + m / sin)
            c1 = -rel * sin
        return np.diag(c0) + np.diag(c1) @ Dx

    E = first_order(-0.5, -1)      # minus -> plus
    Eb = first_order(0.5, +1)      # plus -> minus
    Z = np.zeros((n, n))
    M = np.block([[Z, E], [Eb, Z]]) / radius
    lam = np.real(eigvals(M))
    return lam[np.argsort(np.abs(lam), kind="stable")]


# ----------------------------------------------------------------------------
# factor and product spectra


@dataclass
class FactorSpectrum:
    """Dolbeault (= Dirac) spectrum of a surface factor.

    ``levels`` lists distinct ``|lambda|`` values with the multiplicity of
    ``lambda^2`` as an eigenvalue of the squared operator on the
    two-component spinor module.
    """

    kind: str
    params: dict
    levels: np.ndarray
    multiplicity: np.ndarray
    kernel_dim: int
    s_min: float
    s_max: float
    truncated_at: float
    meta: dict = field(default_factory=dict)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Signed eigenvalues with multiplicity (each level contributes +-, half each)."""
        out = []
        for lv, mult in zip(self.levels, self.multiplicity):
            if lv == 0:
                out += [0.0] * int(mult)
            else:
                out += [-lv] * int(mult // 2) + [lv] * int(mult // 2)
        return np.sort(np.array(out))


def _collect(values: np.ndarray, tol: float = 1e-9):
    values = np.sort(np.abs(values))
    levels, mult = [], []
    for v in values:
        if levels and abs(v - levels[-1]) <= tol * max(1.0, v):
            mult[-1] += 1
        else:
            levels.append(v)
            mult.append(1)
    return np.array(levels), np.array(mult)


def sphere_spectrum(radius: float, modes: int, basis: Optional[int] = None) -> FactorSpectrum:
    """Round-sphere Dirac spectrum up to ``|lambda| r <= modes`` from the spin-weighted Galerkin solve.

    Parameters
    ----------
    radius : float
    modes : int
        Number of distinct levels returned: ``|lambda| = (l + 1/2)/r`` for
        ``l = 1/2, ..., modes - 1/2``.
    basis : int, optional
        Basis size per sector and component (default ``modes``).
    """
    if modes < 1:
        raise ValueError("modes must be at least 1")
    n = basis or modes
    vals, defects = [], []
    for k in range(modes):
        for m in (k + 0.5, -(k + 0.5)):
            sec = SphereSector(m, radius, n)
            defects.append(sec.eth_defect)
            vals.append(eigh(sec.dirac(), eigvals_only=True))
    vals = np.concatenate(vals)
    vals = vals[np.abs(vals) * radius <= modes + 1e-9]
    levels, mult = _collect(vals)
    return FactorSpectrum("sphere", {"radius": radius}, levels, mult, int(np.sum(np.abs(vals) < 1e-9)),
                          2 / radius ** 2, 2 / radius ** 2, modes / radius,
                          {"basis": n, "eth_defect": float(max(defects)), "method": "galerkin"})


def torus_spectrum(periods=(2 * np.pi, 2 * np.pi), modes: int = 3, spacing=None) -> FactorSpectrum:
    """Flat 2-torus with the trivial (periodic) spin structure.

    Eigenvalues are ``+-|kappa|`` over the dual lattice ``kappa = 2 pi (k1/L1, k2/L2)``
    with ``|k_a| <= modes``; the kernel (constant spinors) is 2-dimensional.
    With ``spacing`` the centred-difference symbol ``sum sin^2(kappa_a h_a)/h_a^2``
    replaces ``|kappa|^2`` and ``modes`` runs over the full Brillouin zone.
    """
    L = np.asarray(periods, dtype=float)
    if spacing is None:
        ks = np.arange(-modes, modes + 1)
        K1, K2 = np.meshgrid(2 * np.pi * ks / L[0], 2 * np.pi * ks / L[1], indexing="ij")
        sq = K1 ** 2 + K2 ** 2
    else:
        h = np.asarray(spacing, dtype=float)
        n = np.rint(L / h).astype(int)
        K1, K2 = np.meshgrid(2 * np.pi * np.arange(n[0]) / L[0], 2 * np.pi * np.arange(n[1]) / L[1],
                             indexing="ij")
        sq = np.sin(K1 * h[0]) ** 2 / h[0] ** 2 + np.sin(K2 * h[1]) ** 2 / h[1] ** 2
    lam = np.sqrt(sq.reshape(-1))
    vals = np.concatenate([lam, -lam])  # two spinor components per momentum
    levels, mult = _collect(vals)
    return FactorSpectrum("torus", {"periods": L.tolist(), "spacing": spacing}, levels, mult,
                          int(mult[0]) if levels[0] < 1e-12 else 0, 0.0, 0.0, float(lam.max()),
                          {"method": "fourier" if spacing is None else "lattice-symbol"})


@dataclass
class ProductSpectrum:
    lambda_sq: np.ndarray
    multiplicity: np.ndarray
    pairs: list
    s: float
    k: float
    lambda_sq_min: float
    thm3_gap: Optional[float]
    warnings: list


def assemble_product(f1: FactorSpectrum, f2: FactorSpectrum) -> ProductSpectrum:
    """Spectrum of Box^2 on a Kaehler product from the factor spectra: lambda^2 = lambda_1^2 + lambda_2^2.

    The multiplicity of a sum is the product of the factor multiplicities.
    The minimum is over the nonzero part when either factor has no kernel;
    with kernels on both factors the product has harmonic spinors and the
    minimum is 0.  Products of constant-curvature factors have
    ``s = s_1 + s_2 = k``; the conformal-curvature gap is reported when ``k > 0``.
    """
    sums, mult, pairs = [], [], []
    for i, (a, ma) in enumerate(zip(f1.levels, f1.multiplicity)):
        for j, (b, mb) in enumerate(zip(f2.levels, f2.multiplicity)):
            sums.append(a * a + b * b)
            mult.append(ma * mb)
            pairs.append((i, j))
    sums, mult = np.array(sums), np.array(mult)
    order = np.argsort(sums, kind="stable")
    sums, mult = sums[order], mult[order]
    pairs = [pairs[i] for i in order]
    warnings = []
    i0, j0 = pairs[0]
    if i0 == len(f1.levels) - 1 or j0 == len(f2.levels) - 1:
        warnings.append("minimum attained at the truncation edge; increase modes")
    s = f1.s_min + f2.s_min
    k = s
    lam_min = float(sums[0])
    gap = lam_min - k / 2 if k > 0 else None
    return ProductSpectrum(sums, mult, pairs, s, k, lam_min, gap, warnings)


# ----------------------------------------------------------------------------
# curvature engine for metrics e^u g_1 + e^v g_2 with u, v functions of theta


_TH = sy.Symbol("theta", real=True)


def _riemann_scalars(g_diag, coords, jpairs):
    """s and s* of a diagonal metric in its orthonormal coordinate frame (symbolic)."""
    n = len(coords)
    g = sy.diag(*g_diag)
    ginv = sy.diag(*[1 / x for x in g_diag])
    Gam = [[[sum(ginv[a, e] * (sy.diff(g[e, b], coords[c]) + sy.diff(g[e, c], coords[b])
                               - sy.diff(g[b, c], coords[e])) for e in range(n)) / 2
             for c in range(n)] for b in range(n)] for a in range(n)]

    def R_up(a, b, c, d):  # R(d_c, d_d) d_b = R^a_{bcd} d_a
        expr = sy.diff(Gam[a][d][b], coords[c]) - sy.diff(Gam[a][c][b], coords[d])
        expr += sum(Gam[a][c][e] * Gam[e][d][b] - Gam[a][d][e] * Gam[e][c][b] for e in range(n))
        return expr

    scale = [sy.sqrt(x) for x in g_diag]

    def R4(i, j, k, l):  # R(e_i, e_j, e_k, e_l) = g(R(e_i, e_j) e_k, e_l)
        return g_diag[l] * R_up(l, k, i, j) / (scale[i] * scale[j] * scale[k] * scale[l])

    Jmat = sy.zeros(n, n)
    for p, q in jpairs:  # J e_p = e_q, J e_q = -e_p
        Jmat[q, p] = 1
        Jmat[p, q] = -1
    s = sum(R4(i, j, j, i) for i in range(n) for j in range(n) if i != j)
    s_star = 0
    for i in range(n):
        for j in range(n):
            for a in range(n):
                for b in range(n):
                    if Jmat[a, j] != 0 and Jmat[b, i] != 0:
                        s_star += Jmat[a, j] * Jmat[b, i] * R4(i, j, a, b)
    return sy.simplify(s), sy.simplify(s_star)


_ENGINE = {}


def curvature_engine(second: str):
    """Lambdified (s, s*) of ``e^u r1^2 round + e^v g_2`` as functions of theta, u, u', u'', v, v', v''.

    ``second`` is ``"sphere"`` (round, radius r2) or ``"torus"`` (flat).
    """
    if second in _ENGINE:
        return _ENGINE[second]
    th, ph, y1, y2 = sy.symbols("theta phi y1 y2", real=True)
    r1, r2 = sy.symbols("r1 r2", positive=True)
    u, v = sy.Function("u")(th), sy.Function("v")(th)
    if second == "sphere":
        gd = [sy.exp(u) * r1 ** 2, sy.exp(u) * r1 ** 2 * sy.sin(th) ** 2, sy.exp(v) * r2 ** 2,
              sy.exp(v) * r2 ** 2 * sy.sin(y1) ** 2]
    elif second == "torus":
        gd = [sy.exp(u) * r1 ** 2, sy.exp(u) * r1 ** 2 * sy.sin(th) ** 2, sy.exp(v), sy.exp(v)]
    else:
        raise ValueError("second factor must be 'sphere' or 'torus'")
    s, s_star = _riemann_scalars(gd, [th, ph, y1, y2], [(0, 1), (2, 3)])
    U = sy.symbols("U0:3")
    Vv = sy.symbols("V0:3")
    rep = {u.diff(th, 2): U[2], v.diff(th, 2): Vv[2]}
    rep1 = {u.diff(th): U[1], v.diff(th): Vv[1]}
    rep0 = {u: U[0], v: Vv[0]}
    exprs = [e.subs(rep).subs(rep1).subs(rep0) for e in (s, s_star)]
    fn = sy.lambdify((th, *U, *Vv, r1, r2, y1), exprs, modules="numpy")
    _ENGINE[second] = fn
    return fn


# ----------------------------------------------------------------------------
# axisymmetric profiles


@dataclass
class Profile:
    """A smooth axisymmetric function on the sphere with its theta derivatives."""

    expr: sy.Expr

    def __post_init__(self):
        e = ex.parse_profile(self.expr)
        self.expr = e
        self._f = [sy.lambdify(ex.THETA, sy.diff(e, ex.THETA, k), "numpy") for k in range(3)]
        # smoothness at the poles: even in the polar normal coordinate at theta = 0 and theta = pi
        probe = np.linspace(0.05, 1.0, 7)
        for pole in (0.0, np.pi):
            left = np.broadcast_to(self._f[0](pole - probe), probe.shape)
            right = np.broadcast_to(self._f[0](pole + probe), probe.shape)
            if np.max(np.abs(left - right)) > 1e-12 * max(1.0, np.max(np.abs(right))):
                raise ScenarioError(f"profile {e} is not smooth at the pole theta={pole:g}: "
                                    "it must be even in the polar angle")

    def __call__(self, theta, k: int = 0):
        return np.broadcast_to(np.asarray(self._f[k](theta), dtype=float), np.shape(theta)).copy()


def sphere_scalar_curvature(radius: float, h: Profile, theta: np.ndarray) -> np.ndarray:
    """s of ``e^h`` times the round metric: ``e^{-h} (2/r^2 - Lap h)``."""
    lap = (h(theta, 2) + np.cos(theta) / np.sin(theta) * h(theta, 1)) / radius ** 2
    return np.exp(-h(theta)) * (2 / radius ** 2 - lap)


def axisym_conformal_sphere(radius: float, profile, modes: int, basis: Optional[int] = None) -> FactorSpectrum:
    """Dirac spectrum of ``(S^2, e^h round)`` for an axisymmetric profile h(theta).

    Solved per sector as ``D_round rho = lambda e^{h/2} rho`` (2-dimensional
    conformal covariance, ``D_h = e^{-3h/4} D_round e^{h/4}``).  Returns the
    lowest ``modes`` levels of each sector ``|m| <= modes - 1/2``.
    """
    h = profile if isinstance(profile, Profile) else Profile(profile)
    n = basis or modes + 8
    vals = []
    for k in range(modes):
        for m in (k + 0.5, -(k + 0.5)):
            sec = SphereSector(m, radius, n)
            w = np.exp(h(sec.theta) / 2)
            W = np.block([[sec.plus.gram(sec.plus, w), np.zeros((n, n))],
                          [np.zeros((n, n)), sec.minus.gram(sec.minus, w)]])
            lam = eigh(sec.dirac(), W, eigvals_only=True)
            lam = lam[np.argsort(np.abs(lam))][: 2 * (modes - k)]
            vals.append(lam)
    vals = np.concatenate(vals)
    levels, mult = _collect(vals, 1e-8)
    theta, _ = theta_quadrature(200)
    s = sphere_scalar_curvature(radius, h, theta)
    return FactorSpectrum("conformal-sphere", {"radius": radius, "profile": str(h.expr)}, levels, mult,
                          0, float(s.min()), float(s.max()), float(levels.max()), {"basis": n})


# ----------------------------------------------------------------------------
# conformally rescaled products


def _legendre_fit(theta_nodes, values, degree):
    """Legendre interpolant in x = cos(theta) through ``degree + 1`` Gauss nodes."""
    from numpy.polynomial import legendre as leg

    return leg.Legendre.fit(np.cos(theta_nodes), values, degree, domain=[-1, 1])


@dataclass
class RescaledProduct:
    """``g~ = e^F (e^h g_1 + g_2)`` with ``F = log s(g)`` sampled at a given resolution.

    Parameters
    ----------
    r1 : float
        Radius of the first (axisymmetric) sphere factor.
    h : Profile
        Conformal profile of the first factor.
    second : {"sphere", "torus"}
    r2 : float
        Radius of the second sphere, or unused for the torus.
    periods : tuple
        Periods of the torus factor.
    resolution : int
        Degree of the Legendre representation of F.
    basis : int, optional
        Basis size per component and sector (default ``resolution + 8``).
    rescale : bool
        False gives the Kaehler base metric itself (F = 0).
    """

    r1: float
    h: Profile
    second: str = "sphere"
    r2: float = 1.0
    periods: tuple = (2 * np.pi, 2 * np.pi)
    resolution: int = 16
    rescale: bool = True
    basis: Optional[int] = None

    def __post_init__(self):
        N = self.resolution
        self.basis = self.basis or N + 8
        xg, _ = leggauss(N + 1)
        nodes = np.arccos(xg)
        s2 = 2 / self.r2 ** 2 if self.second == "sphere" else 0.0
        s_nodes = sphere_scalar_curvature(self.r1, self.h, nodes) + s2
        probe, _ = theta_quadrature(4 * N + 40)
        s_probe = sphere_scalar_curvature(self.r1, self.h, probe) + s2
        if self.rescale and (s_nodes.min() <= 0 or s_probe.min() <= 0):
            raise HypothesisError("the base scalar curvature must be positive to rescale by it")
        self.s2 = s2
        self.F_poly = _legendre_fit(nodes, np.log(s_nodes) if self.rescale else 0 * s_nodes, N)

    # F and its theta derivatives from the Legendre representation
    def F(self, theta, k: int = 0):
        x = np.cos(theta)
        p, dp, ddp = self.F_poly(x), self.F_poly.deriv(1)(x), self.F_poly.deriv(2)(x)
        if k == 0:
            return p
        if k == 1:
            return -np.sin(theta) * dp
        return np.sin(theta) ** 2 * ddp - np.cos(theta) * dp

    def base_s(self, theta):
        return sphere_scalar_curvature(self.r1, self.h, theta) + self.s2

    def curvature(self, theta) -> dict:
        """s~, s~*, k~ of the rescaled metric from the curvature engine."""
        fn = curvature_engine(self.second)
        U = [self.F(theta, k) + self.h(theta, k) for k in range(3)]
        V = [self.F(theta, k) for k in range(3)]
        s, s_star = fn(theta, *U, *V, self.r1, self.r2, 1.0)
        s = np.broadcast_to(s, np.shape(theta))
        s_star = np.broadcast_to(s_star, np.shape(theta))
        return {"s": s, "s_star": s_star, "k": (3 * s_star - s) / 2}

    def second_levels(self, count: int):
        """Distinct |eigenvalues| mu of the second factor with their multiplicity on Sigma_2-spinors."""
        if self.second == "sphere":
            return [((j + 1) / self.r2, 2 * (j + 1)) for j in range(count)]
        spec = torus_spectrum(self.periods, modes=count)
        return [(lv, int(mu)) for lv, mu in zip(spec.levels[:count], spec.multiplicity[:count])]

    # ----- reduced operator ---------------------------------------------------
    def sector_matrices(self, m: float, mu: float):
        """(K, W, sector) of the generalized problem ``K rho = lambda W rho`` in sector (m, mu)."""
        sec = SphereSector(m, self.r1, self.basis)
        th = sec.theta
        P, Mn = sec.plus, sec.minus
        n = self.basis
        E = sec.eth_matrix / self.r1
        alpha = -self.F(th, 1) / self.r1  # eth F and eth-bar F for an axisymmetric F
        N = P.gram(Mn, alpha)             # <plus, alpha minus>
        eh = np.exp(self.h(th) / 2)
        Wf = np.exp((self.F(th) + self.h(th)) / 2)
        Z = np.zeros((n, n))
        K = np.block([
            [Z, mu * P.gram(P, eh), E + 0.25 * N, Z],
            [mu * P.gram(P, eh), Z, Z, E - 0.25 * N],
            [(E + 0.25 * N).conj().T, Z, Z, -mu * Mn.gram(Mn, eh)],
            [Z, (E - 0.25 * N).conj().T, -mu * Mn.gram(Mn, eh), Z],
        ])
        Wm = np.block([
            [P.gram(P, Wf), Z, Z, Z],
            [Z, P.gram(P, Wf), Z, Z],
            [Z, Z, Mn.gram(Mn, Wf), Z],
            [Z, Z, Z, Mn.gram(Mn, Wf)],
        ])
        return 0.5 * (K + K.conj().T), 0.5 * (Wm + Wm.T), sec

    def low_spectrum(self, m_max: int = 3, mu_count: int = 3) -> dict:
        """Smallest lambda^2 over sectors ``|m| <= m_max - 1/2`` and the first ``mu_count`` levels mu."""
        best = []
        for k in range(m_max):
            for m in (k + 0.5, -(k + 0.5)):
                for jmu, (mu, _) in enumerate(self.second_levels(mu_count)):
                    K, W, _ = self.sector_matrices(m, mu)
                    lam = eigh(K, W, eigvals_only=True)
                    lsq = np.sort(lam ** 2)
                    best.append((float(lsq[0]), m, jmu, float(mu)))
        best.sort()
        lam_sq, m, jmu, mu = best[0]
        warnings = []
        if abs(m) == m_max - 0.5 or jmu == mu_count - 1:
            warnings.append("minimum attained at the sector truncation edge")
        return {"lambda_sq_min": lam_sq, "sector_m": m, "mu": mu, "warnings": warnings,
                "values": [b[0] for b in best[:8]]}

    # ----- twistor transport --------------------------------------------------
    def twistor_residual(self, t: float = -3.0, exponent: bool = True, base_exponent: float = 0.25,
                         m: float = 0.5) -> dict:
        """Relative norm of P~^{-3}_0 phi for ``phi = e^{(t+1)F/4} psi_0`` via the k-form of the norm identity.

        ``psi_0 = e^{c h} Y`` in Sigma_0, with Y the lowest weight-1/2
        function of the round first factor and the lowest twistor mode of
        the second factor; ``c = base_exponent``.  The identity used is
        ``||P^{-3}_0 phi||^2 = ||Box phi||^2 / 2 - (k phi, phi) / 4``,
        valid for every Sigma_0 field.
        """
        mu = self.second_levels(1)[0][0]
        K, W, sec = self.sector_matrices(m, mu)
        th = sec.theta
        n = self.basis
        F0, h0 = self.F(th), self.h(th)
        weight = (t + 1) / 4 if exponent else 0.0
        # rho = e^{3F/4} e^{h/4} phi, phi = e^{weight F} e^{c h} Y
        Y = sec.plus.values[0]
        rho0 = np.exp(0.75 * F0 + 0.25 * h0 + weight * F0 + base_exponent * h0) * Y
        c = np.zeros(4 * n)
        c[:n] = sec.plus.project(rho0)
        Kc = K @ c
        Winv = np.block([[sec.plus.gram(sec.plus, 1 / np.exp((F0 + h0) / 2)), np.zeros((n, 3 * n))],
                         [np.zeros((n, n)), sec.plus.gram(sec.plus, 1 / np.exp((F0 + h0) / 2)),
                          np.zeros((n, 2 * n))],
                         [np.zeros((n, 2 * n)), sec.minus.gram(sec.minus, 1 / np.exp((F0 + h0) / 2)),
                          np.zeros((n, n))],
                         [np.zeros((n, 3 * n)), sec.minus.gram(sec.minus, 1 / np.exp((F0 + h0) / 2))]])
        box_sq = float(np.real(Kc.conj() @ Winv @ Kc))
        kt = self.curvature(th)["k"] if self.rescale else self.base_s(th)
        norm_sq = float(np.real(c.conj() @ W @ c))
        k_term = float(np.real(c[:n].conj() @ sec.plus.gram(sec.plus, kt * np.exp((F0 + h0) / 2)) @ c[:n]))
        p_sq = 0.5 * box_sq - 0.25 * k_term
        dF = float(np.max(np.abs(self.F(th, 1)) * np.exp(-(F0 + h0) / 2))) / self.r1
        rel = float(np.sqrt(abs(p_sq) / norm_sq))
        return {"relative": rel, "relative_per_dF": rel / dF if dF > 0 else float("nan"), "p_sq": p_sq,
                "norm_sq": norm_sq, "box_sq": box_sq, "k_term": k_term, "sup_dF": dF}


DEFAULT_PROFILE = "0.01*cos(2*theta)"
DEFAULT_RESOLUTION = 4


def section4_limiting_run(r1: float = 1.0, profile=DEFAULT_PROFILE, second: str = "sphere", r2: float = 1.0,
                          resolution: int = DEFAULT_RESOLUTION, m_max: int = 3, mu_count: int = 3) -> dict:
    """Conformal rescaling ``g~ = s g`` of a Kaehler product with nonconstant s, and its limiting verdict.

    Reports ``max|k~ - 1|``, the smallest ``lambda^2`` of the rescaled
    Dolbeault operator and its gap to ``k~/2``, and the twistor residual of
    the transported base twistor spinor with and without the ``(t+1)/4``
    exponent at ``t = -3``.  The residual without the exponent is also
    reported per unit ``sup |dF|``, the size of the rescaling gradient that
    exponent compensates.

    The default profile carries an l = 2 component on purpose: a pure
    ``cos(theta)`` profile is a Moebius deformation to first order, so the
    resulting s would be constant to O(eps) and F nearly trivial.
    """
    h = profile if isinstance(profile, Profile) else Profile(profile)
    base = RescaledProduct(r1, h, second, r2, resolution=resolution, rescale=False)
    res_base = base.twistor_residual(exponent=False)
    if res_base["relative"] > 1e-6:
        raise HypothesisError("the base spinor is not a twistor spinor")
    g = RescaledProduct(r1, h, second, r2, resolution=resolution)
    probe, _ = theta_quadrature(4 * resolution + 40)
    curv = g.curvature(probe)
    spec = g.low_spectrum(m_max, mu_count)
    with_exp = g.twistor_residual(exponent=True)
    without = g.twistor_residual(exponent=False)
    k_min = float(curv["k"].min())
    return {
        "resolution": resolution,
        "profile": str(h.expr),
        "base_s_range": [float(base.base_s(probe).min()), float(base.base_s(probe).max())],
        "k_tilde_max_dev": float(np.max(np.abs(curv["k"] - 1))),
        "k_tilde_min": k_min,
        "lambda_sq_min": spec["lambda_sq_min"],
        "thm3_gap": spec["lambda_sq_min"] - k_min / 2,
        "lambda_sq_dev": abs(spec["lambda_sq_min"] - 0.5),
        "twistor_residual": with_exp["relative"],
        "twistor_residual_no_exponent": without["relative"],
        "twistor_residual_no_exponent_per_dF": without["relative_per_dF"],
        "sup_dF": without["sup_dF"],
        "base_twistor_residual": res_base["relative"],
        "warnings": spec["warnings"],
        "sector": {"m": spec["sector_m"], "mu": spec["mu"]},
    }
