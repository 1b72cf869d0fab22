"""Sparse linear algebra: SPD factorization and preconditioned GMRES.

The factorization wraps SuperLU configured for symmetric positive definite
matrices (symmetric mode, no off-diagonal pivoting) and turns the factor
diagonal into a definiteness certificate.  GMRES is written out explicitly
because the solvers here need left preconditioning together with per-
iteration iterate access for error monitors and monitor-driven stopping.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import mmread, mmwrite
from scipy.linalg import solve_triangular
from scipy.sparse import csc_matrix, issparse
from scipy.sparse.linalg import splu

from .errors import DimMismatch, NotPositiveDefinite

#: pivots below this are treated as a Krylov-basis breakdown
BREAKDOWN = 1e-300


def spmv(A, x):
    x = np.asarray(x)
    if A.shape[1] != x.shape[0]:
        raise DimMismatch("matrix is %s but vector has length %d" % (A.shape, x.shape[0]))
    return A @ x


class Factorization:
    """Direct solver for a sparse symmetric positive definite matrix.

    Uses a symmetric-mode sparse LU with minimum-degree ordering on A+A' and
    pivoting restricted to the diagonal, so the factorization doubles as an
    SPD certificate: any nonpositive pivot raises NotPositiveDefinite with
    the offending (unpermuted) index.
    """

    def __init__(self, A, check_symmetry=True):
        if A.shape[0] != A.shape[1]:
            raise DimMismatch("cannot factorize a %s matrix" % (A.shape,))
        self.n = A.shape[0]
        if self.n == 0:
            self._lu = None
            return
        A = csc_matrix(A)
        d = A.diagonal()
        bad = np.flatnonzero(d <= 0)
        if len(bad):
            raise NotPositiveDefinite(int(bad[0]), "nonpositive diagonal entry")
        if check_symmetry:
            skew = abs(A - A.T)
            if skew.nnz and skew.max() > 1e-12 * abs(A).max():
                raise ValueError("matrix is not symmetric")
        try:
            self._lu = splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                            options={"SymmetricMode": True})
        except RuntimeError as exc:  # SuperLU: "Factor is exactly singular"
            raise NotPositiveDefinite(-1, str(exc)) from exc
        pivots = self._lu.U.diagonal()
        bad = np.flatnonzero(pivots <= 0)
        if len(bad):
            raise NotPositiveDefinite(int(self._lu.perm_c[bad[0]]),
                                      "nonpositive pivot in factorization")

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise DimMismatch("factorization is %d x %d but vector has length %d"
                              % (self.n, self.n, b.shape[0]))
        if self.n == 0:
            return b.copy()
        return self._lu.solve(b)


@dataclass
class GmresOptions:
    rel_tol: float = 1e-8
    max_iters: int = 1000
    restart: int = 200
    record_history: bool = False


def gmres(apply_A, apply_M, b, opts=None, x0=None, callback=None):
    """Left-preconditioned restarted GMRES with modified Gram-Schmidt.

    Solves A x = b, iterating on M (b - A x).  Convergence is declared when
    the preconditioned residual drops below rel_tol * ||M b||.  `callback`,
    when given, is invoked every iteration as callback(k, x_k, res, b_norm)
    and may return True to stop early (the per-iteration iterate x_k is
    reconstructed on the fly).  Returns (x, info) where info carries the
    flags 'converged', 'breakdown', 'stagnation', the iteration count and
    the preconditioned residual history.
    """
    if opts is None:
        opts = GmresOptions()
    b = np.asarray(b, dtype=float)
    n = len(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    b_norm = float(np.linalg.norm(apply_M(b)))
    pre_res = []
    info = {"converged": False, "breakdown": False, "stagnation": False,
            "iterations": 0, "pre_res": pre_res, "true_res": [] if opts.record_history else None}
    if b_norm == 0.0:
        info["converged"] = True
        return np.zeros(n), info
    target = opts.rel_tol * b_norm

    def current(V, H, g, j, base):
        y = solve_triangular(H[:j + 1, :j + 1], g[:j + 1], lower=False)
        xk = base.copy()
        for i in range(j + 1):
            xk += y[i] * V[i]
        return xk

    total = 0
    stop = False
    while total < opts.max_iters and not stop:
        r = apply_M(b - apply_A(x))
        beta = float(np.linalg.norm(r))
        if beta <= target:
            info["converged"] = True
            break
        m = min(opts.restart, opts.max_iters - total)
        V = [r / beta]
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        j = -1
        for j in range(m):
            # copy: apply_A / apply_M may hand back their argument unchanged
            w = np.array(apply_M(apply_A(V[j])), dtype=float)
            for i in range(j + 1):
                H[i, j] = float(V[i] @ w)
                w -= H[i, j] * V[i]
            H[j + 1, j] = float(np.linalg.norm(w))
            lucky = H[j + 1, j] < BREAKDOWN
            if not lucky:
                V.append(w / H[j + 1, j])
            for i in range(j):  # apply stored rotations to the new column
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = float(np.hypot(H[j, j], H[j + 1, j]))
            if denom < BREAKDOWN:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            res = abs(g[j + 1])
            total += 1
            pre_res.append(res)
            if callback is not None or opts.record_history:
                xk = current(V, H, g, j, x)
                if opts.record_history:
                    info["true_res"].append(float(np.linalg.norm(b - apply_A(xk)))
                                            / float(np.linalg.norm(b)))
                if callback is not None and callback(total, xk, res, b_norm):
                    stop = True
            if lucky:
                info["breakdown"] = True
                info["converged"] = True
                stop = True
            elif res <= target:
                info["converged"] = True
                stop = True
            if stop or total >= opts.max_iters:
                break
        if j >= 0:
            x = current(V, H, g, j, x)
        if not stop and not info["converged"] and total < opts.max_iters:
            # no progress over a whole restart cycle: give up
            if pre_res[-1] >= beta:
                info["stagnation"] = True
                break
    info["iterations"] = total
    info["pre_res"] = np.asarray(pre_res)
    if info["true_res"] is not None:
        info["true_res"] = np.asarray(info["true_res"])
    return x, info


def save_matrix_market(path, A, comment=""):
    """Write a sparse matrix or dense vector in Matrix Market format."""
    mmwrite(str(path), A if not issparse(A) else A.tocoo(), comment=comment)


def load_matrix_market(path):
    A = mmread(str(path))
    return A.tocsr() if issparse(A) else np.asarray(A)
