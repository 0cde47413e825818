"""First-order spinor operators on the lattice and the identity checkers built on them.

Spinor fields are complex arrays of shape ``chart.dims + (4,)`` in the
spinor basis of :mod:`dolbeault.clifford`; 1-form valued spinor fields carry
an extra frame axis, ``chart.dims + (4, 4)`` with axis -2 indexing e^i.

Discrete self-adjointness is made exact with the half-density trick: an
operator A on spinor fields is represented on ``u = w^{1/2} psi`` with
``w = sqrt(det g)``, where the weighted inner product becomes the plain
Euclidean one.  Self-adjoint operators are Hermitian parts of their
central-difference stencils in these variables, so their sparse matrices
are Hermitian to the last bit.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps

from . import geometry as geo
from .clifford import CHIRALITY, GAMMA, J_FRAME, LEVEL_OF_INDEX, OMEGA, VOL, cl, j_numeric
from .errors import SplittingError

J = J_FRAME.astype(float)


def _mv(M: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Pointwise matrix-vector product for (..., 4, 4) and (..., 4) fields.

    ``u`` may carry extra batch axes between the point axes and the spinor
    axis; ``M`` is broadcast over them.
    """
    extra = u.ndim - (M.ndim - 1)
    if extra > 0:
        M = M.reshape(M.shape[:-2] + (1,) * extra + M.shape[-2:])
    return (M @ u[..., None])[..., 0]


def _herm(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))


def _dag(M: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(M, -1, -2))


class Stencils:
    """Precomputed coefficient fields shared by every operator on one set of tables.

    Parameters
    ----------
    tables : GeometryTables
        Output of :func:`dolbeault.geometry.compute_tables`.
    """

    def __init__(self, tables: geo.GeometryTables):
        self.tables = tables
        self.chart = tables.chart
        self.dims = tables.chart.dims
        h = tables.chart.spacing
        self.half = np.sqrt(tables.sqrt_det)  # w^{1/2}
        E = tables.frame
        # C_a = sum_i gamma_i E_i^a, the symbol coefficient of d_a
        C = np.einsum("...ia,ijk->...ajk", E.astype(complex), GAMMA)
        self.hop = []
        self.f_plus = []
        self.f_minus = []
        for a in range(4):
            r_plus = self.half / np.roll(self.half, -1, a)  # w^1/2(x) / w^1/2(x+e_a)
            r_minus = self.half / np.roll(self.half, 1, a)
            Ca = C[..., a, :, :]
            Cn = np.roll(Ca, -1, a)
            # Hermitian part of the weighted centred stencil, block (x, x+e_a)
            self.hop.append((Ca * r_plus[..., None, None] + Cn * (1 / r_plus)[..., None, None]) / (4 * h[a]))
            self.f_plus.append(E[..., :, a] * r_plus[..., None] / (2 * h[a]))
            self.f_minus.append(E[..., :, a] * r_minus[..., None] / (2 * h[a]))
        self.hop_dag = [_dag(H) for H in self.hop]
        self.lc_spin = geo.levi_civita_spin(tables)
        self.lc_zero = _herm(np.einsum("ijk,...ikl->...jl", GAMMA, self.lc_spin))
        th = tables.lee_form
        self.theta_cl = cl(th)
        self.jtheta_cl = cl(np.einsum("kl,...l->...k", J, th))
        self.vol_field = np.broadcast_to(VOL, self.dims + (4, 4))
        self._t_cache = {}

    # ----- weighted variables -------------------------------------------------
    def to_weighted(self, psi: np.ndarray) -> np.ndarray:
        return self.half[..., None] * psi

    def from_weighted(self, u: np.ndarray) -> np.ndarray:
        return u / self.half[..., None]

    # ----- first-order parts --------------------------------------------------
    def symmetric_hop(self, u: np.ndarray) -> np.ndarray:
        """Hermitian first-order stencil S in weighted variables."""
        out = np.zeros_like(u)
        for a in range(4):
            out += _mv(self.hop[a], np.roll(u, -1, a))
            out += np.roll(_mv(self.hop_dag[a], u), 1, a)
        return out

    def spin_connection(self, t: Optional[float]) -> np.ndarray:
        if t is None:
            return self.lc_spin
        if t not in self._t_cache:
            self._t_cache[t] = geo.spinor_connection(t, self.tables)
        return self._t_cache[t]

    def covariant(self, u: np.ndarray, t: Optional[float]) -> np.ndarray:
        """Raw centred stencil of nabla^t (Levi-Civita for ``t=None``), weighted variables.

        Returns a 1-form valued field with frame axis -2.
        """
        G = self.spin_connection(t)
        out = np.einsum("...iab,...b->...ia", G, u)
        for a in range(4):
            out += self.f_plus[a][..., None] * np.roll(u, -1, a)[..., None, :]
            out -= self.f_minus[a][..., None] * np.roll(u, 1, a)[..., None, :]
        return out

    def covariant_adjoint(self, T: np.ndarray, t: Optional[float]) -> np.ndarray:
        """Exact adjoint of :meth:`covariant` with respect to the weighted inner products."""
        G = self.spin_connection(t)
        out = np.einsum("...iba,...ib->...a", np.conj(G), T)
        for a in range(4):
            out += np.roll(np.einsum("...i,...ia->...a", self.f_plus[a], T), 1, a)
            out -= np.roll(np.einsum("...i,...ia->...a", self.f_minus[a], T), -1, a)
        return out

    # ----- zeroth-order terms -------------------------------------------------
    def dirac_t_correction(self, t: float, path: str = "connection") -> np.ndarray:
        """Zeroth-order difference D^t - D.

        ``path="connection"`` contracts the Hermitian spinor connection terms
        with Clifford multiplication; ``path="closed_form"`` uses
        -(3t/4) theta - ((2t-1)/4) J theta Omega.
        """
        if path == "connection":
            Ct = geo.hermitian_spin_correction(t, self.tables.lee_form)
            return np.einsum("ijk,...ikl->...jl", GAMMA, Ct)
        if path == "closed_form":
            return -(3 * t / 4) * self.theta_cl - ((2 * t - 1) / 4) * self.jtheta_cl @ OMEGA
        raise ValueError(f"unknown path {path!r}")

    def dolbeault_correction(self) -> np.ndarray:
        """(1/4) theta + (1/4) J theta Omega; Hermitian at every point."""
        return _herm(0.25 * self.theta_cl + 0.25 * self.jtheta_cl @ OMEGA)


@dataclass
class LinearOperatorHandle:
    """A lattice operator acting on weighted spinor variables.

    ``apply_weighted`` maps ``u = w^{1/2} psi`` to ``w^{1/2} A psi``;
    :meth:`apply` does the conversion for plain fields.
    """

    label: str
    stencils: Stencils
    apply_weighted: Callable
    self_adjoint: bool
    zeroth: Optional[np.ndarray] = None
    first_order: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        n = self.stencils.chart.npoints * 4
        return (n, n)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        st = self.stencils
        return st.from_weighted(self.apply_weighted(st.to_weighted(psi)))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        dims = self.stencils.dims
        return self.apply_weighted(x.reshape(dims + (4,))).reshape(-1)

    def matmat(self, X: np.ndarray) -> np.ndarray:
        """Apply to the columns of an (n, k) block; stencil handles are batched."""
        dims = self.stencils.dims
        k = X.shape[1]
        if self.first_order or "factors" in self.meta:
            U = np.moveaxis(X.reshape(dims + (4, k)), -1, -2)  # dims + (k, 4)
            return np.moveaxis(self.apply_weighted(U), -2, -1).reshape(-1, k)
        return np.stack([self.matvec(X[:, j]) for j in range(k)], axis=1)

    def matrix(self) -> sps.csr_matrix:
        """Sparse matrix in weighted variables (row-major point index, spinor index fastest)."""
        if not self.first_order:
            return _compose_matrix(self)
        return _first_order_matrix(self.stencils, self.zeroth)

    def as_linear_operator(self):
        from scipy.sparse.linalg import LinearOperator

        return LinearOperator(self.shape, matvec=self.matvec, dtype=complex)


def _point_index(dims):
    return np.arange(int(np.prod(dims))).reshape(dims)


def _block_coo(rows_pt, cols_pt, blocks):
    """COO triplets for a field of 4x4 blocks placed at (rows_pt, cols_pt)."""
    r = (rows_pt.reshape(-1)[:, None, None] * 4 + np.arange(4)[None, :, None])
    c = (cols_pt.reshape(-1)[:, None, None] * 4 + np.arange(4)[None, None, :])
    r, c = np.broadcast_arrays(r, c)
    return r.reshape(-1), c.reshape(-1), blocks.reshape(-1)


def _first_order_matrix(st: Stencils, zeroth: np.ndarray) -> sps.csr_matrix:
    idx = _point_index(st.dims)
    rows, cols, vals = [], [], []

    def add(rp, cp, B):
        r, c, v = _block_coo(rp, cp, B)
        rows.append(r)
        cols.append(c)
        vals.append(v)

    for a in range(4):
        nxt = np.roll(idx, -1, a)
        add(idx, nxt, st.hop[a])
        add(nxt, idx, st.hop_dag[a])
    add(idx, idx, st.lc_zero + zeroth)
    n = st.chart.npoints * 4
    M = sps.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return M.tocsr()


def _compose_matrix(op: LinearOperatorHandle) -> sps.csr_matrix:
    parts = op.meta.get("factors")
    if parts is None:
        raise ValueError(f"{op.label} has no sparse representation")
    left, right = parts
    return (left.matrix() @ right.matrix()).tocsr()


def _first_order(label, st, zeroth, self_adjoint, **meta):
    def apply(u):
        return st.symmetric_hop(u) + _mv(st.lc_zero + zeroth, u)

    return LinearOperatorHandle(label, st, apply, self_adjoint, zeroth=zeroth, meta=meta)


def _stencils(obj) -> Stencils:
    return obj if isinstance(obj, Stencils) else Stencils(obj)


def build_dirac(tables) -> LinearOperatorHandle:
    """Levi-Civita Dirac operator D."""
    st = _stencils(tables)
    return _first_order("D", st, np.zeros(st.dims + (4, 4), dtype=complex), True)


def build_dirac_t(t: float, tables, path: str = "connection") -> LinearOperatorHandle:
    """Dirac operator D^t of the canonical Hermitian connection nabla^t."""
    st = _stencils(tables)
    return _first_order(f"D^t({t:g})", st, st.dirac_t_correction(t, path), False, t=t, path=path)


def build_dolbeault(tables) -> LinearOperatorHandle:
    """Dolbeault operator, D plus its Hermitian zeroth-order correction."""
    st = _stencils(tables)
    return _first_order("Box", st, st.dolbeault_correction(), True)


def square(op: LinearOperatorHandle) -> LinearOperatorHandle:
    if not op.self_adjoint:
        raise ValueError("square() expects a self-adjoint handle")
    return LinearOperatorHandle(op.label + "^2", op.stencils, lambda u: op.apply_weighted(op.apply_weighted(u)),
                                True, first_order=False, meta={"factors": (op, op)})


def build_laplacian(t: Optional[float], tables) -> LinearOperatorHandle:
    """Delta^t = (nabla^t)^* nabla^t from the raw stencil and its exact weighted adjoint."""
    st = _stencils(tables)

    def apply(u):
        return st.covariant_adjoint(st.covariant(u, t), t)

    label = "Laplacian(LC)" if t is None else f"Laplacian({t:g})"
    return LinearOperatorHandle(label, st, apply, True, first_order=False, meta={"t": t})


# ----------------------------------------------------------------------------
# fields


def require_sigma0(psi: np.ndarray, what: str = "operator", tol: float = 0.0):
    other = np.abs(psi[..., 1:]).max() if psi.size else 0.0
    if other > tol * max(np.abs(psi).max(), 1e-300):
        raise SplittingError(f"{what} requires a Sigma_0 field; found components in Sigma_1/Sigma_2")


def band_limited_spinor(chart: geo.LatticeChart, seed: int = 0, kmax: int = 1, levels=(0, 1, 2),
                        decay: float = 1.0) -> np.ndarray:
    """Smooth random spinor field built from Fourier modes with |k_a| <= kmax.

    The modes and coefficients depend only on ``seed`` and ``kmax``, so the
    same continuum field is sampled on every refinement of a chart.
    """
    rng = np.random.default_rng(seed)
    ks = np.array(np.meshgrid(*[np.arange(-kmax, kmax + 1)] * 4, indexing="ij")).reshape(4, -1).T
    coef = (rng.standard_normal((len(ks), 4)) + 1j * rng.standard_normal((len(ks), 4)))
    coef /= (1 + np.sum(ks ** 2, axis=1))[:, None] ** decay
    x = chart.coordinates()
    phase_scale = [2 * np.pi / L for L in chart.periods]
    psi = np.zeros(chart.dims + (4,), dtype=complex)
    for k, c in zip(ks, coef):
        ph = sum(k[a] * phase_scale[a] * x[a] for a in range(4))
        psi += np.exp(1j * ph)[..., None] * c
    mask = np.isin(LEVEL_OF_INDEX, levels)
    psi[..., ~mask] = 0
    return psi


def weighted_inner(st: Stencils, a: np.ndarray, b: np.ndarray) -> complex:
    """(a, b) = sum_x w(x) <a(x), b(x)> h^4 for plain (unweighted) fields."""
    w = st.tables.sqrt_det
    axes = tuple(range(4, a.ndim))
    return complex(np.sum(w * np.sum(np.conj(a) * b, axis=axes)) * st.chart.cell_volume)


def weighted_norm(st: Stencils, a: np.ndarray) -> float:
    return float(np.sqrt(weighted_inner(st, a, a).real))


# ----------------------------------------------------------------------------
# twistor operator on Sigma_0


def _p_combination(T: np.ndarray) -> np.ndarray:
    """(e^i (x) T_{p(e_i)}) from T_i: (T_i - i sum_k J[k, i] T_k) / 2 along axis -2."""
    return 0.5 * (T - 1j * np.einsum("ki,...ka->...ia", J, T))


class TwistorP0:
    """P^t_0 on Sigma_0 fields, with both closed forms of the twistor projection.

    ``apply(psi0, form="p_part")`` evaluates the (1,0)-part of nabla^t;
    ``form="dirac"`` evaluates nabla^t psi0 + (1/2) sum e^i (x) p_0 e_i D^t psi0
    with D^t taken as Clifford contraction of the same stencil.
    """

    def __init__(self, t: float, tables):
        self.t = t
        self.stencils = _stencils(tables)

    def _nabla(self, psi0):
        require_sigma0(psi0, "P^t_0")
        st = self.stencils
        return st.covariant(st.to_weighted(psi0), self.t) / st.half[..., None, None]

    def apply(self, psi0: np.ndarray, form: str = "p_part") -> np.ndarray:
        T = self._nabla(psi0)
        if form == "p_part":
            return _p_combination(T)
        if form == "dirac":
            Dt = np.einsum("iab,...ib->...a", GAMMA, T)
            corr = np.einsum("iab,...b->...ia", GAMMA, Dt)
            corr[..., 1:] = 0  # p_0
            return T + 0.5 * corr
        raise ValueError(f"unknown form {form!r}")

    def norm_sq(self, psi0: np.ndarray) -> float:
        P = self.apply(psi0)
        return weighted_norm(self.stencils, P) ** 2

    def pointwise_identity_residual(self, psi0: np.ndarray) -> np.ndarray:
        """|P psi0|^2 - |nabla^t psi0|^2 + (1/2)|D^t psi0|^2 at every point."""
        T = self._nabla(psi0)
        P = _p_combination(T)
        Dt = np.einsum("iab,...ib->...a", GAMMA, T)
        sq = lambda A, ax: np.sum(np.abs(A) ** 2, axis=ax)
        return sq(P, (-1, -2)) - sq(T, (-1, -2)) + 0.5 * sq(Dt, -1)


def build_twistor_p0(t: float, tables) -> TwistorP0:
    return TwistorP0(t, tables)


# ----------------------------------------------------------------------------
# identity checks


def weitzenboeck_residual(tables, psi: np.ndarray, t: Optional[float] = -1.0) -> float:
    """Relative defect of Box^2 = Delta^{-1} + s/4 + (1/4) delta theta . vol - |theta|^2 / 8.

    ``t`` selects the Laplacian; any value other than -1 is a negative control.
    """
    if not np.any(psi):
        raise ValueError("the Weitzenboeck residual needs a nonzero spinor field")
    st = _stencils(tables)
    T = st.tables
    box = build_dolbeault(st)
    lap = build_laplacian(t, st)
    u = st.to_weighted(psi)
    pot = (T.s / 4)[..., None] * u + (T.delta_theta / 4)[..., None] * _mv(st.vol_field, u) \
        - (T.theta_sq / 8)[..., None] * u
    res = box.apply_weighted(box.apply_weighted(u)) - lap.apply_weighted(u) - pot
    return float(np.linalg.norm(res) / np.linalg.norm(u))


@dataclass
class Lemma2Result:
    t: float
    lhs: float
    rhs: float
    terms: dict

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)

    def relative(self, h: float) -> float:
        return self.residual / max(abs(self.lhs), h ** 2)


def lemma2_identity_check(t: float, tables, psi0: np.ndarray) -> Lemma2Result:
    """Both sides of the integrated twistor-norm identity for a Sigma_0 field."""
    require_sigma0(psi0, "lemma2_identity_check")
    st = _stencils(tables)
    T = st.tables
    box = build_dolbeault(st)
    lhs = build_twistor_p0(t, st).norm_sq(psi0)
    ip = lambda a, b: weighted_inner(st, a, b)
    box_psi = box.apply(psi0)
    terms = {
        "box_sq": 0.5 * ip(box_psi, box_psi).real,
        "s": -0.25 * ip(T.s[..., None] * psi0, psi0).real,
        "delta_theta": -(t / 4) * ip(T.delta_theta[..., None] * psi0, psi0).real,
        "theta_sq": (t * t - 2 * t - 3) / 32 * ip(T.theta_sq[..., None] * psi0, psi0).real,
        "theta_box": -(t + 3) / 4 * ip(_mv(st.theta_cl, box_psi), psi0).real,
    }
    return Lemma2Result(t, lhs, sum(terms.values()), terms)


def check_operator_relations(tables, t_values=(-3, -1, 0, 1), seed: int = 0) -> dict:
    """Stencil-level residuals of the zeroth-order operator relations, grading and j-symmetry."""
    st = _stencils(tables)
    box = build_dolbeault(st)
    D = build_dirac(st)
    psi = band_limited_spinor(st.chart, seed)
    psi0 = psi.copy()
    psi0[..., 1:] = 0
    scale = np.abs(psi).max()
    out = {}
    for t in t_values:
        a = build_dirac_t(t, st, "connection").apply(psi)
        b = build_dirac_t(t, st, "closed_form").apply(psi)
        out[f"dirac_t_paths[{t}]"] = float(np.abs(a - b).max() / scale)
        lhs = build_dirac_t(t, st).apply(psi0)
        rhs = box.apply(psi0) + (t - 1) / 4 * _mv(st.theta_cl, psi0)
        out[f"sigma0_dirac_t[{t}]"] = float(np.abs(lhs - rhs).max() / scale)
        P = build_twistor_p0(t, st)
        out[f"twistor_forms[{t}]"] = float(np.abs(P.apply(psi0) - P.apply(psi0, "dirac")).max() / scale)
        out[f"twistor_pointwise[{t}]"] = float(np.abs(P.pointwise_identity_residual(psi0)).max() / scale ** 2)
    box_minus_d = box.apply(psi) - D.apply(psi) - _mv(st.dolbeault_correction(), psi)
    out["dolbeault_minus_dirac"] = float(np.abs(box_minus_d).max() / scale)
    # grading: Box maps chirality +/- into -/+
    chi = CHIRALITY
    bp = box.apply(psi * chi)
    out["chirality"] = float(np.abs(bp * chi + box.apply(psi)).max() / scale)
    for r in range(3):
        pr = psi * (LEVEL_OF_INDEX == r)
        img = box.apply(pr)
        out[f"level[{r}]"] = float(np.abs(img[..., LEVEL_OF_INDEX == r]).max() / scale)
    out["j_commutation"] = float(np.abs(j_numeric(box.apply(psi)) - box.apply(j_numeric(psi))).max() / scale)
    return out


def hermiticity_defect(op: LinearOperatorHandle) -> float:
    M = op.matrix()
    return float(abs(M - M.getH()).max()) if M.nnz else 0.0


def dump_coo(op: LinearOperatorHandle, path) -> None:
    """Write the weighted matrix as 'row col re im' lines with a header line 'n n nnz'."""
    M = op.matrix().tocoo()
    with open(path, "w") as fh:
        fh.write(f"% {op.label}\n{M.shape[0]} {M.shape[1]} {M.nnz}\n")
        np.savetxt(fh, np.column_stack([M.row, M.col, M.data.real, M.data.imag]), fmt=["%d", "%d", "%.17g", "%.17g"])
