"""Exact Clifford algebra of R^4 acting on the 4-dimensional spinor module.

The representation is built from tensor products of Pauli matrices,

    e1 = i s1 (x) 1,   e2 = i s2 (x) 1,   e3 = i s3 (x) s1,   e4 = i s3 (x) s2,

so that ``e_i e_j + e_j e_i = -2 delta_ij``.  With ``J e1 = e2`` and
``J e3 = e4`` the Clifford image of the Kaehler form is diagonal in the
standard basis, ordered as (Sigma_0; Sigma_1, Sigma_1; Sigma_2) with
eigenvalues (2i; 0, 0; -2i).  Projections onto the splitting are therefore
coordinate truncations.

Everything here is exact: matrices are sympy matrices over the Gaussian
rationals.  :data:`GAMMA`, :data:`OMEGA` etc. are float copies used by the
lattice and sector modules (their entries are small integers, so the copies
are exact as well).
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import sympy as sp

from .errors import SplittingError

I = sp.I

# Sigma_r occupies these basis indices.
LEVEL_SLICES = {0: (0,), 1: (1, 2), 2: (3,)}
# Frame components of J: (J X)_k = sum_l J[k, l] X_l.
J_FRAME = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]])


@dataclass(frozen=True)
class FrameRep:
    """Exact action of the frame, the Kaehler form, the volume form and j.

    ``j_conj`` is the matrix C with ``j(psi) = C conj(psi)``.
    """

    gamma: tuple
    omega_k: sp.ImmutableMatrix
    vol: sp.ImmutableMatrix
    j_conj: sp.ImmutableMatrix
    J: sp.ImmutableMatrix


def _kron(a, b):
    return sp.ImmutableMatrix(sp.kronecker_product(sp.Matrix(a), sp.Matrix(b)))


@lru_cache(maxsize=None)
def build_frame_rep() -> FrameRep:
    s1 = sp.Matrix([[0, 1], [1, 0]])
    s2 = sp.Matrix([[0, -I], [I, 0]])
    s3 = sp.Matrix([[1, 0], [0, -1]])
    one = sp.eye(2)
    gamma = (
        _kron(I * s1, one),
        _kron(I * s2, one),
        _kron(I * s3, s1),
        _kron(I * s3, s2),
    )
    J = sp.ImmutableMatrix(J_FRAME.tolist())
    # Omega(X, Y) = g(X, JY) = -(e^1 ^ e^2 + e^3 ^ e^4)
    omega_k = sp.ImmutableMatrix(-(gamma[0] * gamma[1] + gamma[2] * gamma[3]))
    vol = sp.ImmutableMatrix(gamma[0] * gamma[1] * gamma[2] * gamma[3])
    j_conj = _kron(I * s2, s1)
    return FrameRep(gamma=gamma, omega_k=omega_k, vol=vol, j_conj=j_conj, J=J)


def _exact(x):
    """Exact sympy number for ints, exact sympy input and (via nsimplify) floats."""
    if isinstance(x, sp.Basic):
        return x
    if isinstance(x, (int, np.integer)):
        return sp.Integer(int(x))
    return sp.nsimplify(x)


def _as_column(psi) -> sp.Matrix:
    return sp.Matrix(4, 1, [_exact(c) for c in psi])


def clifford(v: Sequence, rep: FrameRep = None) -> sp.Matrix:
    """Clifford action of the (possibly complex) frame vector or 1-form ``v``.

    Vectors and 1-forms are identified through the metric, so the same
    components describe both.
    """
    rep = rep or build_frame_rep()
    out = sp.zeros(4, 4)
    for vi, g in zip(v, rep.gamma):
        if vi != 0:
            out += _exact(vi) * g
    return out


def J_vec(v: Sequence) -> list:
    """Frame components of J applied to a vector; for 1-forms this is Ja = -a o J."""
    return [sum(int(J_FRAME[k, l]) * _exact(v[l]) for l in range(4)) for k in range(4)]


def p_vec(v: Sequence) -> list:
    """p(X) = (X - iJX)/2, the (1,0)-part."""
    jv = J_vec(v)
    return [sp.Rational(1, 2) * (_exact(a) - I * b) for a, b in zip(v, jv)]


def pbar_vec(v: Sequence) -> list:
    """pbar(X) = (X + iJX)/2, the (0,1)-part."""
    jv = J_vec(v)
    return [sp.Rational(1, 2) * (_exact(a) + I * b) for a, b in zip(v, jv)]


def project(r: int, psi) -> sp.Matrix:
    """Component of ``psi`` in Sigma_r; levels -1 and 3 project to zero."""
    if r not in (-1, 0, 1, 2, 3):
        raise ValueError(f"level must be in 0..2 (or -1/3 as null levels), got {r}")
    psi = _as_column(psi)
    out = sp.zeros(4, 1)
    for idx in LEVEL_SLICES.get(r, ()):
        out[idx] = psi[idx]
    return out


def level_of(psi):
    """Return r if ``psi`` is a nonzero element of Sigma_r, else None."""
    psi = _as_column(psi)
    levels = [r for r, idx in LEVEL_SLICES.items() if any(psi[i] != 0 for i in idx)]
    return levels[0] if len(levels) == 1 else None


def _require_level(psi, r, what):
    psi = _as_column(psi)
    if any(psi[i] != 0 for lvl, idx in LEVEL_SLICES.items() if lvl != r for i in idx):
        raise SplittingError(f"{what} requires psi in Sigma_{r}")
    return psi


def j_map(psi, rep: FrameRep = None) -> sp.Matrix:
    """The quaternionic structure j(psi) = C conj(psi)."""
    rep = rep or build_frame_rep()
    return rep.j_conj * _as_column(psi).conjugate()


def pairing(alpha: Sequence, X: Sequence):
    """alpha(X) in frame components (complex-bilinear)."""
    return sum(_exact(a) * _exact(x) for a, x in zip(alpha, X))


def check_identity(tag: str, X: Sequence, psi=None, alpha: Sequence = None, r: int = None):
    """Exact residual (left minus right side) of one Clifford identity.

    ``tag`` is one of ``"commutator"`` (X Omega - Omega X = 2JX),
    ``"level_shift"`` (X psi_r and JX psi_r split into levels r-1 and r+1),
    ``"p_shift"`` (p(X) psi_r = p_{r+1} X psi_r, pbar(X) psi_r = p_{r-1} X psi_r)
    or ``"sigma0_contract"`` (p_0 X alpha psi_0 = -2 alpha(pbar X) psi_0).
    Identities involving psi_r require ``psi`` to lie in a single Sigma_r.
    """
    rep = build_frame_rep()
    Xc = clifford(X, rep)
    if tag == "commutator":
        return sp.expand(Xc * rep.omega_k - rep.omega_k * Xc - 2 * clifford(J_vec(X), rep))
    if tag in ("level_shift", "p_shift"):
        if r is None:
            r = level_of(psi)
            if r is None:
                raise SplittingError(f"{tag} requires psi in a single Sigma_r")
        psi = _require_level(psi, r, tag)
        Xpsi = Xc * psi
        if tag == "level_shift":
            first = Xpsi - project(r - 1, Xpsi) - project(r + 1, Xpsi)
            JXpsi = clifford(J_vec(X), rep) * psi
            second = JXpsi + I * project(r - 1, Xpsi) - I * project(r + 1, Xpsi)
        else:
            first = clifford(p_vec(X), rep) * psi - project(r + 1, Xpsi)
            second = clifford(pbar_vec(X), rep) * psi - project(r - 1, Xpsi)
        return sp.expand(first.col_join(second))
    if tag == "sigma0_contract":
        psi = _require_level(psi, 0, tag)
        lhs = project(0, Xc * clifford(alpha, rep) * psi)
        return sp.expand(lhs + 2 * pairing(alpha, pbar_vec(X)) * psi)
    raise ValueError(f"unknown identity tag {tag!r}")


def tensor(alpha: Sequence, psi) -> sp.Matrix:
    """alpha (x) psi as a 4x4 matrix whose row i is the spinor coefficient of e^i."""
    psi = _as_column(psi)
    return sp.Matrix(4, 4, lambda i, k: _exact(alpha[i]) * psi[k])


def mu(T) -> sp.Matrix:
    """Clifford multiplication (R^4)* (x) Sigma -> Sigma."""
    rep = build_frame_rep()
    T = sp.Matrix(T)
    out = sp.zeros(4, 1)
    for i in range(4):
        out += rep.gamma[i] * T[i, :].T
    return sp.expand(out)


def _unit(i):
    return [1 if k == i else 0 for k in range(4)]


@lru_cache(maxsize=None)
def _unit_parts():
    """Clifford actions of p(e_k) and pbar(e_k) for the four frame vectors."""
    return (tuple(sp.ImmutableMatrix(clifford(p_vec(_unit(k)))) for k in range(4)),
            tuple(sp.ImmutableMatrix(clifford(pbar_vec(_unit(k)))) for k in range(4)))


def twistor_project(r: int, T) -> sp.Matrix:
    """Projection of T in (R^4)* (x) Sigma_r onto the kernel of Clifford multiplication.

    ``T`` is either a 4x4 matrix (row i = coefficient of e^i) or a pair
    ``(alpha, psi)`` standing for alpha (x) psi.
    """
    if isinstance(T, tuple):
        T = tensor(*T)
    T = sp.Matrix(T)
    for i in range(4):
        _require_level(T[i, :].T, r, "twistor_project")
    c_plus = sp.Rational(1, 2 * (r + 1))
    c_minus = sp.Rational(1, 4 - 2 * (r - 1))
    # sum_k p(e^k) T_k and sum_k pbar(e^k) T_k
    up = sp.zeros(4, 1)
    down = sp.zeros(4, 1)
    P, Pbar = _unit_parts()
    for k in range(4):
        up += P[k] * T[k, :].T
        down += Pbar[k] * T[k, :].T
    out = sp.Matrix(T)
    for i in range(4):
        corr = c_plus * Pbar[i] * up + c_minus * P[i] * down
        out[i, :] = out[i, :] + corr.T
    return sp.expand(out)


def _to_numpy(m) -> np.ndarray:
    return np.array(sp.Matrix(m).evalf(), dtype=complex)


_rep = build_frame_rep()
GAMMA = np.stack([_to_numpy(g) for g in _rep.gamma])
OMEGA = _to_numpy(_rep.omega_k)
VOL = _to_numpy(_rep.vol)
JCONJ = _to_numpy(_rep.j_conj)
# Diagonal Omega eigenvalue labels per basis index and the three projectors.
LEVEL_OF_INDEX = np.array([0, 1, 1, 2])
PROJ = np.stack([np.diag((LEVEL_OF_INDEX == r).astype(float)) for r in range(3)])
CHIRALITY = np.real(np.diag(VOL))  # -1 on Sigma_+ = Sigma_0 + Sigma_2, +1 on Sigma_-
del _rep


def cl(v) -> np.ndarray:
    """Numeric Clifford action of frame components ``v`` with shape (..., 4)."""
    return np.einsum("...i,ijk->...jk", np.asarray(v, dtype=complex), GAMMA)


def j_numeric(u: np.ndarray) -> np.ndarray:
    """j applied to spinor arrays of shape (..., 4)."""
    return np.conj(u) @ JCONJ.T


def _is_zero(m) -> bool:
    m = sp.expand(sp.Matrix(m))
    return m == sp.zeros(*m.shape)


def identity_suite() -> dict:
    """Run every exact identity over all frame vectors, frame 1-forms and basis spinors.

    Returns
    -------
    dict
        Per-identity counts ``{"checked": n, "failed": m}``; the suite passes
        when every ``failed`` is 0.
    """
    rep = build_frame_rep()
    units = [_unit(i) for i in range(4)]
    levels = [int(v) for v in LEVEL_OF_INDEX]
    out = {}

    def record(name, ok):
        entry = out.setdefault(name, {"checked": 0, "failed": 0})
        entry["checked"] += 1
        entry["failed"] += 0 if ok else 1

    for i in range(4):
        for j in range(4):
            anti = rep.gamma[i] * rep.gamma[j] + rep.gamma[j] * rep.gamma[i]
            record("anticommutation", _is_zero(anti + 2 * (1 if i == j else 0) * sp.eye(4)))
        record("j_commutes_with_gamma", _is_zero(rep.j_conj * rep.gamma[i].conjugate() - rep.gamma[i] * rep.j_conj))
    record("omega_eigenvalues", rep.omega_k == sp.diag(2 * I, 0, 0, -2 * I))
    record("volume_eigenvalues", rep.vol == sp.diag(-1, 1, 1, -1))
    for k in range(4):
        record("j_squared", _is_zero(j_map(j_map(units[k])) + sp.Matrix(units[k])))
    total = sum((rep.gamma[j] * clifford(pbar_vec(units[j]), rep) for j in range(4)), sp.zeros(4, 4))
    record("sum_e_pbar_e", _is_zero(total + 2 * sp.eye(4) + I * rep.omega_k))
    for X in units:
        record("commutator", _is_zero(check_identity("commutator", X)))
        for k in range(4):
            record("level_shift", _is_zero(check_identity("level_shift", X, units[k], r=levels[k])))
            record("p_shift", _is_zero(check_identity("p_shift", X, units[k], r=levels[k])))
            record("clifford_leaves_level", project(levels[k], clifford(X, rep) * sp.Matrix(units[k])) == sp.zeros(4, 1))
        for a in units:
            record("sigma0_contract", _is_zero(check_identity("sigma0_contract", X, units[0], alpha=a)))
    for r in range(3):
        for a in units:
            for k in range(4):
                if levels[k] != r:
                    continue
                T = twistor_project(r, (a, units[k]))
                record("twistor_kernel", _is_zero(mu(T)))
                record("twistor_idempotent", _is_zero(twistor_project(r, T) - T))
    return out
