"""Low-lying spectra of the lattice Dolbeault operator and the eigenvalue-bound verdicts.

The production eigensolver is ARPACK (``scipy.sparse.linalg.eigsh``) on
the chirality blocks of Box^2; :func:`dolbeault.lanczos.block_lanczos` is
kept as an independent cross-check.  Every returned eigenpair is re-checked
through the raw operator handle, and eigenvalues are sorted ascending.

Centred differences produce 16 "tastes" of every continuum mode: each
physical eigenspace comes with copies whose Fourier content sits at
the corners of the Brillouin zone.  :func:`smooth_content` separates them
by the weight of the low-wavenumber Fourier block, so kernel dimensions
count physical harmonic spinors only.  Doubler counts are reported
separately.
"""
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from . import geometry as geo
from . import operators as op
from .clifford import CHIRALITY, LEVEL_OF_INDEX
from .errors import HypothesisError, SolverError
from .lanczos import block_lanczos

#: kernel threshold = KERNEL_C * h^2; calibrated on the flat torus (see :func:`kernel_threshold`)
KERNEL_C = 1e-2
#: groups of eigenvalues closer than this (relative) are treated as one eigenspace
CLUSTER_RTOL = 1e-6


@dataclass
class Spectrum:
    """Eigenpairs of a self-adjoint handle restricted to a sector.

    ``vectors`` are columns in weighted variables on the full spinor index
    space (sector components zero-padded), so they can be fed back to the
    handle without conversion.
    """

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    label: str
    sector: Optional[int]
    meta: dict = field(default_factory=dict)


def _sector_indices(npoints: int, chirality: Optional[int]) -> np.ndarray:
    if chirality is None:
        return np.arange(npoints * 4)
    if chirality not in (-1, 1):
        raise ValueError("chirality must be -1 (Sigma_+), +1 (Sigma_-) or None")
    return np.where(np.tile(CHIRALITY == chirality, npoints))[0]


def _square_block(handle: op.LinearOperatorHandle, chirality: Optional[int]) -> sps.csr_matrix:
    """Box^2 (or A^2 for a first-order A) restricted to one chirality, as a sparse matrix."""
    if handle.first_order:
        M = handle.matrix()
    else:
        M = handle.meta["factors"][0].matrix()
    n = handle.stencils.chart.npoints
    src = _sector_indices(n, chirality)
    if chirality is None:
        return (M @ M).tocsr() if handle.first_order else handle.matrix()
    dst = _sector_indices(n, -chirality)
    B = M[dst][:, src]
    leak = abs(M[src][:, src]).max() if M[src][:, src].nnz else 0.0
    if leak > 1e-12 * abs(M).max():
        raise ValueError("operator does not exchange chiralities; cannot restrict")
    return (B.getH() @ B).tocsr()


def _rayleigh_ritz(A, V: np.ndarray):
    """Orthonormalize V (dropping dependent directions) and diagonalize A on its span."""
    U, sv, _ = np.linalg.svd(V, full_matrices=False)
    Q = U[:, sv > 1e-8 * sv[0]]
    H = Q.conj().T @ (A @ Q)
    w, S = eigh(0.5 * (H + H.conj().T))
    return w, Q @ S, Q.shape[1]


def low_spectrum(handle: op.LinearOperatorHandle, count: int, tol: float = 1e-9, seed: int = 0,
                 chirality: Optional[int] = None, method: str = "arpack",
                 start: Optional[np.ndarray] = None) -> Spectrum:
    """Smallest eigenvalues of the square of a self-adjoint first-order handle, or of a square handle.

    Parameters
    ----------
    handle : LinearOperatorHandle
        A self-adjoint handle: a first-order operator A (then A^2 is solved)
        or a ``square`` handle.
    count : int
        Number of eigenpairs returned.
    tol : float
        Absolute residual bound ``||A v - lambda v|| <= tol`` for unit ``v``.
    chirality : {-1, +1, None}
        Restrict to Sigma_+ (-1) or Sigma_- (+1) fields.
    method : {"arpack", "lanczos"}
        ARPACK implicitly restarted Lanczos, or the package's block Lanczos.
    start : ndarray, optional
        Starting vector (arpack) or block (lanczos) in sector coordinates;
        seeded random otherwise.

    Returns
    -------
    Spectrum
        Eigenvalues of the squared operator, ascending.
    """
    if not handle.self_adjoint:
        raise ValueError(f"{handle.label} is not self-adjoint; low_spectrum needs a Hermitian handle")
    if count < 1:
        raise ValueError("count must be at least 1")
    st = handle.stencils
    idx = _sector_indices(st.chart.npoints, chirality)
    A = _square_block(handle, chirality)
    n = A.shape[0]
    count = min(count, n - 2)
    rng = np.random.default_rng(seed)
    norm_est = float(abs(A).sum(axis=1).max())  # infinity norm bounds the spectral radius
    meta = {"method": method, "seed": seed, "tol": tol, "count": count, "norm_bound": norm_est,
            "dims": list(st.dims)}
    if method == "arpack":
        v0 = start if start is not None else rng.standard_normal(n) + 1j * rng.standard_normal(n)
        # ARPACK can return non-orthogonal Ritz vectors inside degenerate clusters, so every
        # result is re-orthonormalized and Rayleigh-Ritz rotated; a rank-deficient block
        # (duplicated directions) or a failed residual check widens the Krylov space once
        for widen in (3, 6):
            ncv = min(n, max(widen * count, 2 * count + 1, 20))
            try:
                vals, vecs = eigsh(A, k=count, which="SA", tol=tol / norm_est, v0=v0, ncv=ncv, maxiter=50 * n)
            except ArpackNoConvergence as exc:
                raise SolverError("ARPACK did not converge", {"converged": len(exc.eigenvalues), **meta}) from exc
            vals, vecs, rank = _rayleigh_ritz(A, vecs)
            if rank == count and np.linalg.norm(A @ vecs - vecs * vals, axis=0).max() <= tol:
                break
        if rank < count:
            raise SolverError("eigensolver returned linearly dependent vectors", {"rank": rank, **meta})
        meta["ncv"] = ncv
    elif method == "lanczos":
        b = max(4, count // 4)
        X0 = start if start is not None else rng.standard_normal((n, b)) + 1j * rng.standard_normal((n, b))
        res = block_lanczos(lambda X: A @ X, X0, count, tol=tol / norm_est, max_basis=min(n, max(8 * count, 200)))
        vals, vecs, rank = _rayleigh_ritz(A, res.vectors)
        if rank < count:
            raise SolverError("eigensolver returned linearly dependent vectors", {"rank": rank, **meta})
        meta.update(sweeps=res.sweeps, matvecs=res.matvecs)
    else:
        raise ValueError(f"unknown method {method!r}")
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    full = np.zeros((st.chart.npoints * 4, vecs.shape[1]), dtype=complex)
    full[idx] = vecs
    # re-check through the raw, unfactored operator
    if handle.first_order:
        img = handle.matmat(handle.matmat(full))
    else:
        img = handle.matmat(full)
    residuals = np.linalg.norm(img - full * vals, axis=0) / np.linalg.norm(full, axis=0)
    meta["max_residual"] = float(residuals.max())
    if residuals.max() > 2 * tol:
        raise SolverError("eigenpair residual through the raw operator exceeds 2*tol",
                          {"residuals": residuals.tolist(), **meta})
    return Spectrum(vals, full, residuals, handle.label + ("^2" if handle.first_order else ""), chirality, meta)


def signed_values(handle: op.LinearOperatorHandle, spec: Spectrum) -> np.ndarray:
    """Signed eigenvalues of a first-order handle on the span of its squared eigenvectors.

    Only complete eigenspaces of the square are used: the top cluster is
    dropped if it might have been cut by the count.
    """
    vals = spec.values
    keep = len(vals)
    top = vals[-1]
    while keep > 0 and abs(vals[keep - 1] - top) <= CLUSTER_RTOL * max(abs(top), 1.0):
        keep -= 1
    if keep == 0:
        raise ValueError("no complete eigenspace below the top cluster; increase the count")
    V = spec.vectors[:, :keep]
    H = V.conj().T @ handle.matmat(V)
    return np.sort(eigh(0.5 * (H + H.conj().T), eigvals_only=True))


def clusters(values: np.ndarray, rtol: float = CLUSTER_RTOL, atol: float = 0.0) -> list:
    """Split sorted values into groups of numerically equal entries; returns index arrays."""
    groups, cur = [], [0]
    for i in range(1, len(values)):
        if abs(values[i] - values[cur[-1]]) <= rtol * max(abs(values[i]), 1.0) + atol:
            cur.append(i)
        else:
            groups.append(np.array(cur))
            cur = [i]
    groups.append(np.array(cur))
    return groups


def _low_band(st: op.Stencils, vectors: np.ndarray, band: float) -> np.ndarray:
    """Low-wavenumber Fourier coefficients of each column, shape (modes * 4, k)."""
    dims = st.dims
    k = vectors.shape[1]
    F = np.fft.fftn(vectors.reshape(dims + (4, k)), axes=(0, 1, 2, 3), norm="ortho")
    mask = np.ones(dims, dtype=bool)
    for a, n in enumerate(dims):
        kk = np.abs(np.fft.fftfreq(n) * n)
        shape = [1, 1, 1, 1]
        shape[a] = n
        mask &= (kk < band * n).reshape(shape)
    return F[mask].reshape(-1, k)


def smooth_content(st: op.Stencils, vectors: np.ndarray, band: float = 0.25, basis: bool = False):
    """Eigenvalues of the Gram matrix of the low-wavenumber parts of an orthonormal block.

    The low band keeps Fourier modes with ``|k_a| < band * N_a`` on every
    axis.  Physical (smooth) directions give values near 1; taste doublers
    give values near 0.  Values are returned in descending order, together
    with the rotated block when ``basis`` is true.
    """
    low = _low_band(st, vectors, band)
    G = low.conj().T @ low
    w, U = np.linalg.eigh(0.5 * (G + G.conj().T))
    w, U = w[::-1], U[:, ::-1]
    return (w, vectors @ U) if basis else w


@dataclass
class SectorReport:
    chirality: int
    eigenvalues: list
    kernel_dim: int
    kernel_doublers: int
    indeterminate: bool
    lambda_sq_min: Optional[float]
    nonzero_clusters: list
    residual_max: float
    vectors: Optional[np.ndarray] = None
    smooth_basis: Optional[np.ndarray] = None


def kernel_threshold(chart: geo.LatticeChart, c: float = KERNEL_C) -> float:
    """``c * h^2`` with h the largest spacing.

    On the flat torus the kernel eigenvalues are roundoff (about 1e-15) and
    the first nonzero value of Box^2 is ``sin^2(2 pi h/L)/h^2``, close to
    ``(2 pi/L)^2``; ``c = 1e-2`` puts the threshold many decades from both on
    the default grids.
    """
    return c * float(np.max(chart.spacing)) ** 2


def _sector(box: op.LinearOperatorHandle, chirality: int, tol: float, seed: int, count: int,
            max_count: int, c: float) -> SectorReport:
    st = box.stencils
    thr = kernel_threshold(st.chart, c)
    while True:
        spec = low_spectrum(box, count, tol, seed, chirality)
        vals = spec.values
        # the kernel block is complete once some computed value clears the threshold
        if vals[-1] >= 10 * thr or count >= max_count:
            break
        count = min(2 * count, max_count)
    zero_groups = [np.where(vals < thr)[0]] if np.any(vals < thr) else []
    phys_nonzero = []
    groups = clusters(vals)
    for g in groups:
        if vals[g].min() < thr or g[-1] == len(vals) - 1:
            continue  # kernel block, or a cluster possibly cut by the count
        content = smooth_content(st, spec.vectors[:, g])
        dim = int(np.sum(content > 0.5))
        if dim:
            phys_nonzero.append({"value": float(vals[g].mean()), "dim": dim, "size": len(g)})
    zero = np.concatenate(zero_groups) if zero_groups else np.array([], dtype=int)
    content = smooth_content(st, spec.vectors[:, zero]) if len(zero) else np.array([])
    physical = int(np.sum(content > 0.5))
    ambiguous = bool(np.any((content > 0.2) & (content < 0.8)))
    near = bool(np.any((vals > thr / 10) & (vals < 10 * thr)))
    smooth_basis = None
    if physical:
        smooth_basis = smooth_content(st, spec.vectors[:, zero], basis=True)[1][:, :physical]
    return SectorReport(
        chirality=chirality,
        eigenvalues=[float(v) for v in vals],
        kernel_dim=physical,
        kernel_doublers=int(len(zero) - physical),
        indeterminate=ambiguous or near,
        lambda_sq_min=phys_nonzero[0]["value"] if phys_nonzero else None,
        nonzero_clusters=phys_nonzero,
        residual_max=float(spec.residuals.max()),
        vectors=spec.vectors,
        smooth_basis=smooth_basis,
    )


@dataclass
class SpectrumReport:
    """Low spectrum, kernel, index and bound verdicts for one lattice scenario."""

    eigenvalues_box: list
    eigenvalues_box_sq: list
    kernel_dim: int
    kernel_dim_plus: int
    kernel_dim_minus: int
    index: int
    doublers: dict
    indeterminate: bool
    lambda_sq_min: Optional[float]
    bound_thm2: Optional[dict]
    bound_thm3: Optional[dict]
    solver_meta: dict
    violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def kernel_and_index(tables, tol: float = 1e-9, seed: int = 0, count: int = 48, max_count: int = 192,
                     c: float = KERNEL_C) -> dict:
    """Kernel dimension of Box on each chirality and the index.

    Returns a dict with the two :class:`SectorReport` objects (keys
    ``plus`` and ``minus``) and the integer summary.
    """
    st = op.Stencils(tables) if isinstance(tables, geo.GeometryTables) else tables
    box = op.build_dolbeault(st)
    plus = _sector(box, -1, tol, seed, count, max_count, c)
    minus = _sector(box, 1, tol, seed + 1, count, max_count, c)
    nonzero = [v for v in (plus.lambda_sq_min, minus.lambda_sq_min) if v is not None]
    return {
        "plus": plus,
        "minus": minus,
        "kernel_dim": plus.kernel_dim + minus.kernel_dim,
        "kernel_dim_plus": plus.kernel_dim,
        "kernel_dim_minus": minus.kernel_dim,
        "index": plus.kernel_dim - minus.kernel_dim,
        "indeterminate": plus.indeterminate or minus.indeterminate,
        "lambda_sq_nonzero": min(nonzero) if nonzero else None,
        "threshold": kernel_threshold(st.chart, c),
    }


def bound_verdicts(lambda_sq_nonzero: Optional[float], kernel_dim: int, inf_s: float, inf_k: float,
                   grid_tol: float = 0.0, gap_tol: float = 1e-8, theorem3: Optional[bool] = None) -> dict:
    """Verdicts for lambda^2 >= inf s / 6 and lambda^2 >= inf k / 2.

    ``lambda`` is the first eigenvalue: 0 when a kernel exists, otherwise the
    smallest nonzero ``lambda^2``.  The first bound is evaluated when
    ``inf k >= -grid_tol``; the second when ``inf k > grid_tol``.  Passing
    ``theorem3=True`` with ``inf k <= grid_tol`` raises
    :class:`HypothesisError`; ``None`` skips the verdict silently.

    Returns
    -------
    dict
        ``{"bound_thm2": ..., "bound_thm3": ..., "violations": [...]}``;
        a violation is a negative gap beyond ``gap_tol`` or a kernel on a
        metric with ``inf s > grid_tol``.
    """
    lam_sq = 0.0 if kernel_dim > 0 else lambda_sq_nonzero
    violations = []
    thm2 = None
    if inf_k >= -grid_tol and lam_sq is not None:
        gap = lam_sq - inf_s / 6
        thm2 = {"inf_s": inf_s, "lambda_sq_min": lam_sq, "equality_gap": gap,
                "satisfied": bool(gap >= -gap_tol)}
        if gap < -gap_tol:
            violations.append(f"lambda^2 - inf s/6 = {gap:.3e} < 0")
    thm3 = None
    if inf_k <= grid_tol:
        if theorem3:
            raise HypothesisError(f"inf k = {inf_k:.3e} is not positive; the conformal-curvature bound "
                                  "does not apply")
    elif theorem3 is not False and lam_sq is not None:
        gap = lam_sq - inf_k / 2
        thm3 = {"inf_k": inf_k, "lambda_sq_min": lam_sq, "equality_gap": gap,
                "satisfied": bool(gap >= -gap_tol)}
        if gap < -gap_tol:
            violations.append(f"lambda^2 - inf k/2 = {gap:.3e} < 0")
    if inf_s > grid_tol and kernel_dim > 0:
        violations.append(f"harmonic spinors found although inf s = {inf_s:.3e} > 0")
    return {"bound_thm2": thm2, "bound_thm3": thm3, "violations": violations}


def grid_tolerance(tables: geo.GeometryTables, c: float = 1.0) -> float:
    """``c * h^2 * max|s|``, the size of curvature truncation errors on the grid."""
    return c * float(np.max(tables.chart.spacing)) ** 2 * max(float(np.abs(tables.s).max()), 1.0)


def spectrum_report(tables: geo.GeometryTables, tol: float = 1e-9, seed: int = 0, count: int = 48,
                    max_count: int = 192, gap_tol: float = 1e-8) -> SpectrumReport:
    """Kernel, index, lowest nonzero eigenvalue and bound verdicts on one lattice metric."""
    st = op.Stencils(tables)
    ki = kernel_and_index(st, tol, seed, count, max_count)
    inf_s, inf_k = float(tables.s.min()), float(tables.k.min())
    verdicts = bound_verdicts(ki["lambda_sq_nonzero"], ki["kernel_dim"], inf_s, inf_k,
                              grid_tolerance(tables), gap_tol)
    # Box exchanges chiralities, so its low spectrum is +-sqrt of the Sigma_+ block of Box^2
    roots = np.sqrt(np.clip(ki["plus"].eigenvalues, 0.0, None))
    signed = np.sort(np.concatenate([-roots, roots]))
    return SpectrumReport(
        eigenvalues_box=[float(v) for v in signed],
        eigenvalues_box_sq=ki["plus"].eigenvalues,
        kernel_dim=ki["kernel_dim"],
        kernel_dim_plus=ki["kernel_dim_plus"],
        kernel_dim_minus=ki["kernel_dim_minus"],
        index=ki["index"],
        doublers={"plus": ki["plus"].kernel_doublers, "minus": ki["minus"].kernel_doublers},
        indeterminate=ki["indeterminate"],
        lambda_sq_min=0.0 if ki["kernel_dim"] else ki["lambda_sq_nonzero"],
        bound_thm2=verdicts["bound_thm2"],
        bound_thm3=verdicts["bound_thm3"],
        solver_meta={"tol": tol, "seed": seed, "dims": list(tables.chart.dims),
                     "kernel_threshold": ki["threshold"], "grid_tol": grid_tolerance(tables),
                     "residual_max": max(ki["plus"].residual_max, ki["minus"].residual_max)},
        violations=verdicts["violations"],
    )


# ----------------------------------------------------------------------------
# eigenspinor decomposition into Sigma_0 and Sigma_2 parts


def _lattice_project(psi: np.ndarray, r: int) -> np.ndarray:
    return psi * (LEVEL_OF_INDEX == r)


def lemma1_decompose(box: Callable, psi: np.ndarray, lam: float, tol: float,
                     project: Callable = _lattice_project, norm: Callable = np.linalg.norm) -> tuple:
    """Split a lambda-eigenfield of Box into its Sigma_0- and Sigma_2-generated summands.

    Parameters
    ----------
    box : callable
        Applies the Dolbeault operator to a field.
    psi : ndarray
        Eigenfield with ``||box(psi) - lam psi|| <= tol ||psi||``.
    project : callable
        ``project(psi, r)`` returns the level-r part; defaults to the lattice
        spinor layout (last axis of length 4).

    Returns
    -------
    (phi0, phi2) : tuple of ndarray
        ``psi_0 + box(psi_0)/lam`` and ``psi_2 + box(psi_2)/lam``.
    """
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    scale = norm(psi)
    if norm(box(psi) - lam * psi) > 10 * tol * scale:
        raise ValueError("psi is not an eigenfield within tolerance")
    p0, p2 = project(psi, 0), project(psi, 2)
    if max(norm(p0), norm(p2)) <= tol * scale:
        raise SolverError("eigenfield has neither a Sigma_0 nor a Sigma_2 part",
                          {"norm_p0": float(norm(p0)), "norm_p2": float(norm(p2))})
    b0, b2 = box(p0), box(p2)
    phi0, phi2 = p0 + b0 / lam, p2 + b2 / lam
    checks = {
        "sum": norm(phi0 + phi2 - psi) / scale,
        "phi0_eig": norm(box(phi0) - lam * phi0) / scale,
        "phi2_eig": norm(box(phi2) - lam * phi2) / scale,
        "p0_sq_eig": norm(box(b0) - lam ** 2 * p0) / (scale * max(abs(lam), 1.0) ** 2),
        "p2_sq_eig": norm(box(b2) - lam ** 2 * p2) / (scale * max(abs(lam), 1.0) ** 2),
    }
    bad = {k: v for k, v in checks.items() if v > 10 * tol}
    if bad:
        raise SolverError("level decomposition failed its eigenfield checks", bad)
    return phi0, phi2


# ----------------------------------------------------------------------------
# persistence across refinement


def persistent_values(coarse: list, fine: list, h: float, c: float = 4.0) -> dict:
    """Match each coarse eigenvalue to the nearest fine one; keep drifts below ``c h^2 (1+|v|)``."""
    fine = np.asarray(fine)
    keep, dropped = [], []
    for v in coarse:
        j = int(np.argmin(np.abs(fine - v)))
        drift = abs(fine[j] - v)
        (keep if drift <= c * h ** 2 * (1 + abs(v)) else dropped).append(
            {"value": float(v), "fine": float(fine[j]), "drift": float(drift)})
    return {"persistent": keep, "excluded": dropped}


def flat_next_eigenvalue(chart: geo.LatticeChart) -> float:
    """First nonzero Box^2 eigenvalue on the flat lattice torus: min_a sin^2(2 pi h_a/L_a)/h_a^2."""
    h = chart.spacing
    L = np.array(chart.periods)
    return float(np.min(np.sin(2 * np.pi * h / L) ** 2 / h ** 2))


def parallel_residual(st: op.Stencils, psi_weighted: np.ndarray, t: Optional[float] = -1.0) -> float:
    """``||nabla^t psi|| / ||psi||`` in the weighted norm, for a field given in weighted variables."""
    u = psi_weighted.reshape(st.dims + (4,))
    return float(np.linalg.norm(st.covariant(u, t)) / np.linalg.norm(u))
