"""Block Lanczos with full reorthogonalization for the low end of a Hermitian spectrum.

Restarts are explicit: after each Krylov sweep the wanted Ritz vectors
(plus a few guard vectors) seed the next block.  Convergence is judged by
the residual of the *raw* operator, ``||A v - theta v|| <= tol * ||A||_est``.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import eigh

from .errors import SolverError


@dataclass
class LanczosResult:
    values: np.ndarray
    vectors: np.ndarray  # columns
    residuals: np.ndarray
    norm_estimate: float
    sweeps: int
    matvecs: int
    converged: bool
    history: list = field(default_factory=list)


def _orthonormalize(V: np.ndarray, basis: np.ndarray = None, drop: float = 1e-10) -> np.ndarray:
    """Orthonormalize the columns of V against ``basis`` and each other (twice is enough)."""
    for _ in range(2):
        if basis is not None and basis.shape[1]:
            V = V - basis @ (basis.conj().T @ V)
    Q, R = np.linalg.qr(V)
    keep = np.abs(np.diag(R)) > drop * max(1.0, np.abs(R).max())
    Q = Q[:, keep]
    if basis is not None and basis.shape[1] and Q.shape[1]:
        Q = Q - basis @ (basis.conj().T @ Q)
        Q, _ = np.linalg.qr(Q)
    return Q


def block_lanczos(apply: Callable[[np.ndarray], np.ndarray], X0: np.ndarray, count: int, tol: float = 1e-8,
                  max_basis: int = 400, max_sweeps: int = 30, guard: int = None) -> LanczosResult:
    """Smallest ``count`` eigenpairs of a Hermitian operator.

    Parameters
    ----------
    apply : callable
        Maps an (n, k) block to A times that block.
    X0 : ndarray, shape (n, b)
        Starting block; its span decides which invariant subspaces are seen.
    count : int
        Number of wanted eigenpairs (smallest algebraic values).
    tol : float
        Relative residual tolerance against the largest Ritz value magnitude.
    max_basis : int
        Krylov basis size per sweep.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    guard = max(4, count // 4) if guard is None else guard
    n = X0.shape[0]
    X = _orthonormalize(np.asarray(X0, dtype=complex))
    if X.shape[1] == 0:
        raise ValueError("starting block is rank deficient")
    matvecs = 0
    norm_est = 0.0
    history = []
    best = None
    for sweep in range(1, max_sweeps + 1):
        V = X
        AV = apply(V)
        matvecs += V.shape[1]
        blocks_V, blocks_AV = [V], [AV]
        Q = V
        while Q.shape[1] < max_basis:
            # next block: A Q_last minus projections onto everything so far
            W = blocks_AV[-1]
            W = _orthonormalize(W, Q)
            if W.shape[1] == 0:
                break  # invariant subspace reached
            AW = apply(W)
            matvecs += W.shape[1]
            blocks_V.append(W)
            blocks_AV.append(AW)
            Q = np.hstack([Q, W])
        AQ = np.hstack(blocks_AV)
        H = Q.conj().T @ AQ
        H = 0.5 * (H + H.conj().T)
        theta, S = eigh(H)
        norm_est = max(norm_est, float(np.abs(theta).max()))
        k = min(count, len(theta))
        Y = Q @ S[:, :k]
        R = AQ @ S[:, :k] - Y * theta[:k]
        res = np.linalg.norm(R, axis=0)
        history.append({"sweep": sweep, "basis": Q.shape[1], "max_residual": float(res.max())})
        best = (theta[:k], Y, res)
        if k == count and np.all(res <= tol * max(norm_est, 1.0)):
            return LanczosResult(theta[:k], Y, res, norm_est, sweep, matvecs, True, history)
        if Q.shape[1] == n or (W.shape[1] == 0 and k < count):
            break
        keep = min(len(theta), count + guard)
        X = Q @ S[:, :keep]
        # add the residual directions to accelerate the next sweep
        X = _orthonormalize(np.hstack([X, R[:, res > tol * max(norm_est, 1.0)]]))
    theta, Y, res = best
    converged = len(theta) == count and bool(np.all(res <= tol * max(norm_est, 1.0)))
    result = LanczosResult(theta, Y, res, norm_est, sweep, matvecs, converged, history)
    if not converged:
        raise SolverError("block Lanczos did not converge", {"history": history, "residuals": res.tolist(),
                                                             "values": theta.tolist()})
    return result
