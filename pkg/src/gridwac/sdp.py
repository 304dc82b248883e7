"""Dense semidefinite programming for the controller-synthesis LMI.

The solver is a primal-dual interior-point method with Nesterov-Todd
scaling in the standard linear-matrix-inequality form

    minimize    c' y
    subject to  Z(y) = F0 + sum_i y_i F_i  >= 0   (blockwise PSD)

with the associated primal ``max -<F0, X> s.t. <F_i, X> = c_i, X >= 0``.
Constraint data is abstracted behind operators so that the synthesis LMI,
whose constraint matrices are symmetrized rank-one outer products over a
small dictionary, gets an O(m^2) Schur-complement assembly from Gram
matrices instead of the generic O(m^2 k^2) loop.

Strict inequalities are shifted by a configurable margin eps; returned
solutions are re-verified against the unshifted constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .numerics import orth_complement


class SdpError(RuntimeError):
    """Raised on malformed problems; numerical failure is a status, not an error."""


# --- operator interface -------------------------------------------------------

class DenseLmiOperator:
    """Generic constraint operator holding stacked F_i per block (small m, k)."""

    def __init__(self, F0_blocks, F_blocks, c):
        self.F0 = [np.asarray(F, dtype=float) for F in F0_blocks]
        self.F = [np.asarray(F, dtype=float) for F in F_blocks]
        self.c = np.asarray(c, dtype=float)
        self.m = self.c.size
        for Fb, F0b in zip(self.F, self.F0):
            if Fb.shape[0] != self.m or Fb.shape[1:] != F0b.shape:
                raise SdpError("inconsistent constraint stack shapes")
        self.block_dims = [F.shape[0] for F in self.F0]

    def forward(self, X):
        out = np.zeros(self.m)
        for Fb, Xb in zip(self.F, X):
            out += np.tensordot(Fb, Xb, axes=([1, 2], [0, 1]))
        return out

    def adjoint(self, y):
        return [np.tensordot(y, Fb, axes=1) for Fb in self.F]

    def schur(self, W):
        H = np.zeros((self.m, self.m))
        for Fb, Wb in zip(self.F, W):
            T = np.einsum("ab,ibc,cd->iad", Wb, Fb, Wb, optimize=True)
            H += Fb.reshape(self.m, -1) @ T.reshape(self.m, -1).T
        return 0.5 * (H + H.T)


class WithIdentityVar:
    """Wrap an operator with one extra variable carrying identity on block 0.

    Used for the phase-1 feasibility problem  min t  s.t.  M(v) <= (t-eps) I.
    """

    def __init__(self, op):
        self.op = op
        self.m = op.m + 1
        self.F0 = op.F0
        self.block_dims = op.block_dims
        self.c = np.concatenate([np.zeros(op.m), [1.0]])

    def forward(self, X):
        base = self.op.forward(X)
        return np.concatenate([base, [float(np.trace(X[0]))]])

    def adjoint(self, y):
        blocks = self.op.adjoint(y[:-1])
        blocks[0] = blocks[0] + y[-1] * np.eye(blocks[0].shape[0])
        return blocks

    def schur(self, W):
        H = np.zeros((self.m, self.m))
        H[:-1, :-1] = self.op.schur(W)
        Wsq = W[0] @ W[0]
        col = self.op.forward([Wsq if k == 0 else np.zeros_like(W[k])
                               for k in range(len(W))])
        H[:-1, -1] = col
        H[-1, :-1] = col
        H[-1, -1] = float(np.sum(W[0] * W[0]))
        return H


# --- interior point core ------------------------------------------------------

@dataclass
class IpmInfo:
    iterations: int = 0
    status: str = "max-iter"
    gap: float = math.inf
    pres: float = math.inf
    dres: float = math.inf
    objective: float = math.nan
    obj_trace: list = field(default_factory=list)


def _nt_scaling(X, Z):
    """Nesterov-Todd scaling of a PSD pair.

    Returns ``(W, R, lam)`` with ``W = R R'``, ``W Z W = X``, and the scaled
    point diagonal: ``R^{-1} X R^{-T} = R' Z R = diag(lam)``.
    """
    Lz = np.linalg.cholesky(Z)
    M = Lz.T @ X @ Lz
    M = 0.5 * (M + M.T)
    d, U = np.linalg.eigh(M)
    d = np.maximum(d, 1e-300)
    lam4 = np.sqrt(np.sqrt(d))         # d^(1/4); scaled point Lambda = d^(1/2)
    Li = np.linalg.inv(Lz)
    R = Li.T @ (U * lam4)
    Rinv = (U / lam4).T @ Lz.T
    W = R @ R.T
    return W, R, Rinv, lam4 * lam4


def _max_step(X, D):
    """Largest alpha with X + alpha D psd (inf when D keeps psd)."""
    L = np.linalg.cholesky(X)
    Li = np.linalg.inv(L)
    S = Li @ D @ Li.T
    lam = float(np.min(np.linalg.eigvalsh(0.5 * (S + S.T))))
    if lam >= 0:
        return math.inf
    return -1.0 / lam


def solve_ipm(op, tol_gap=1e-8, tol_feas=1e-9, max_iter=100, verbose=False,
              y0=None, accept_gap=1e-6, accept_pres=1e-3):
    """Run the NT predictor interior-point iteration on an operator problem.

    Returns ``(y, X, Z, info)``; ``info.status`` is 'optimal' or 'max-iter'.
    A warm start ``y0`` is used when it is strictly dual feasible
    (``F0 + A*(y0) > 0``), which typically halves the iteration count on
    the synthesis LMI.  Once progress stalls, the looser ``accept_*``
    thresholds (duality gap, primal residual) decide optimality; the dual
    feasibility tolerance is never relaxed since the returned certificate
    lives on the dual side.
    """
    dims = op.block_dims
    k_total = sum(dims)
    c = op.c
    norm_c = 1.0 + float(np.linalg.norm(c))
    norm_f0 = 1.0 + math.sqrt(sum(float(np.linalg.norm(F) ** 2) for F in op.F0))

    scale0 = max(1.0, max(float(np.linalg.norm(F, 2)) for F in op.F0))
    X = [np.eye(k) * scale0 for k in dims]
    Z = [np.eye(k) * scale0 for k in dims]
    y = np.zeros(op.m)
    if y0 is not None:
        Zw = [F0b + Ab for F0b, Ab in zip(op.F0, op.adjoint(y0))]
        lam_min = min(float(np.min(np.linalg.eigvalsh(Zb))) for Zb in Zw)
        if lam_min > 1e-10:
            y = np.asarray(y0, dtype=float).copy()
            Z = Zw
            mu0 = max(1e-3, min(1.0, lam_min))
            X = [mu0 * np.linalg.inv(Zb) for Zb in Zw]
    info = IpmInfo()
    best_gap = math.inf
    stall = 0

    for it in range(max_iter):
        gap = sum(float(np.sum(Xb * Zb)) for Xb, Zb in zip(X, Z))
        mu = gap / k_total
        rp = c - op.forward(X)
        Ay = op.adjoint(y)
        Rd = [F0b + Ab - Zb for F0b, Ab, Zb in zip(op.F0, Ay, Z)]
        pres = float(np.linalg.norm(rp)) / norm_c
        dres = math.sqrt(sum(float(np.linalg.norm(R) ** 2) for R in Rd)) / norm_f0
        obj = float(c @ y)
        relgap = gap / (1.0 + abs(obj) + abs(sum(float(np.sum(F0b * Xb))
                                                 for F0b, Xb in zip(op.F0, X))))
        info.obj_trace.append(obj)
        info.iterations = it
        info.gap, info.pres, info.dres, info.objective = relgap, pres, dres, obj
        if verbose:
            print(f"  it {it:3d}  gap {relgap:9.2e}  pres {pres:9.2e} "
                  f" dres {dres:9.2e}  obj {obj:+.6e}")
        accept_ok = (relgap <= accept_gap and dres <= tol_feas
                     and pres <= accept_pres)
        if relgap <= tol_gap and pres <= tol_feas and dres <= tol_feas:
            info.status = "optimal"
            return y, X, Z, info
        if accept_ok and relgap <= 0.1 * accept_gap:
            info.status = "optimal"
            return y, X, Z, info
        if relgap < 0.9 * best_gap:
            best_gap, stall = min(best_gap, relgap), 0
        else:
            stall += 1
        if stall >= 2 and accept_ok:
            info.status = "optimal"
            return y, X, Z, info

        try:
            scal = [_nt_scaling(Xb, Zb) for Xb, Zb in zip(X, Z)]
            W = [s[0] for s in scal]
            H = op.schur(W)
            H[np.arange(op.m), np.arange(op.m)] += \
                1e-13 * max(1.0, float(np.trace(H)) / op.m)
            Hfac = cho_factor(H, lower=True, overwrite_a=True, check_finite=False)
        except np.linalg.LinAlgError:
            info.status = "max-iter"
            return y, X, Z, info

        def direction(Rc):
            T = [Rcb - Wb @ Rdb @ Wb for Rcb, Wb, Rdb in zip(Rc, W, Rd)]
            rhs = op.forward(T) - rp
            dy = cho_solve(Hfac, rhs, check_finite=False)
            Ady = op.adjoint(dy)
            dZ = [Ab + Rdb for Ab, Rdb in zip(Ady, Rd)]
            dX = [Rcb - Wb @ dZb @ Wb for Rcb, Wb, dZb in zip(Rc, W, dZ)]
            dX = [0.5 * (Db + Db.T) for Db in dX]
            return dy, dX, dZ

        try:
            # predictor
            dy_a, dX_a, dZ_a = direction([-Xb for Xb in X])
            ap = min(1.0, 0.99 * min(_max_step(Xb, Db) for Xb, Db in zip(X, dX_a)))
            ad = min(1.0, 0.99 * min(_max_step(Zb, Db) for Zb, Db in zip(Z, dZ_a)))
            gap_aff = sum(float(np.sum((Xb + ap * DXb) * (Zb + ad * DZb)))
                          for Xb, DXb, Zb, DZb in zip(X, dX_a, Z, dZ_a))
            sigma = min(0.9, max(1e-4, (max(gap_aff, 0.0) / gap) ** 3))

            # combined step with the Mehrotra corrector evaluated in the
            # scaled space, where the NT point is diagonal and the
            # Lyapunov-type linearization inverts entrywise
            Rc = []
            for (Wb, Rb, Rib, Lb), dXb, dZb in zip(scal, dX_a, dZ_a):
                Xh = Rib @ dXb @ Rib.T
                Zh = Rb.T @ dZb @ Rb
                Corr = 0.5 * (Xh @ Zh + Zh @ Xh)
                Rhs = -Corr
                Rhs[np.arange(len(Lb)), np.arange(len(Lb))] += sigma * mu - Lb * Lb
                U = 2.0 * Rhs / (Lb[:, None] + Lb[None, :])
                Rc.append(Rb @ U @ Rb.T)
            dy, dX, dZ = direction(Rc)
            tau = 0.9 if it < 3 else 0.98
            ap = min(1.0, tau * min(_max_step(Xb, Db) for Xb, Db in zip(X, dX)))
            ad = min(1.0, tau * min(_max_step(Zb, Db) for Zb, Db in zip(Z, dZ)))
        except np.linalg.LinAlgError:
            break
        if ap < 1e-10 and ad < 1e-10:
            break
        X = [Xb + ap * Db for Xb, Db in zip(X, dX)]
        Z = [Zb + ad * Db for Zb, Db in zip(Z, dZ)]
        y = y + ad * dy

    if (info.gap <= accept_gap and info.dres <= tol_feas
            and info.pres <= accept_pres):
        info.status = "optimal"
    return y, X, Z, info


# --- synthesis LMI (OP1 shape) --------------------------------------------------

@dataclass
class LmiProblem:
    """Data of the synthesis LMI over variables (lambda, X, W, H).

    The constraint is the 3x3 block matrix

        [ S'A' + AS + H'B' + BH    *        *  ]
        [ Bw_hat'                -lam I     *  ]   < 0,   S = X E' + Eperp W
        [ C S + D H               Dw_hat   -I  ]

    together with X > 0 and lam > 0 (shifted by eps).  E must be the 0/1
    diagonal structure matrix with the dynamic block leading.
    """

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    Bw_hat: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Dw_hat: np.ndarray
    eps: float = 1e-7

    def __post_init__(self):
        n = self.A.shape[0]
        d = np.diagonal(self.E)
        if not np.all((d == 0) | (d == 1)):
            raise SdpError("E must be a 0/1 diagonal structure matrix")
        self.n = n
        self.n_d = int(np.sum(d))
        self.n_a = n - self.n_d
        if np.any(d[:self.n_d] != 1):
            raise SdpError("dynamic states must lead the ordering")
        self.n_u = self.B.shape[1]
        self.n_wt = self.Bw_hat.shape[1]
        self.E_perp = orth_complement(self.E)

    def lmi_matrix(self, lam, X, W, H):
        """Evaluate the (unshifted) LMI block matrix at given variables."""
        S = X @ self.E.T + self.E_perp @ W
        Psi = S.T @ self.A.T + self.A @ S + H.T @ self.B.T + self.B @ H
        CS_DH = self.C @ S + self.D @ H
        n, nw = self.n, self.n_wt
        M = np.zeros((2 * n + nw, 2 * n + nw))
        M[:n, :n] = Psi
        M[:n, n:n + nw] = self.Bw_hat
        M[n:n + nw, :n] = self.Bw_hat.T
        M[n:n + nw, n:n + nw] = -lam * np.eye(nw)
        M[:n, n + nw:] = CS_DH.T
        M[n + nw:, :n] = CS_DH
        M[n:n + nw, n + nw:] = self.Dw_hat.T
        M[n + nw:, n:n + nw] = self.Dw_hat
        M[n + nw:, n + nw:] = -np.eye(n)
        return M


@dataclass
class SdpSolution:
    """Result of solve_lmi: variable values plus certificates."""

    status: str
    lam: float
    X: np.ndarray
    W: np.ndarray
    H: np.ndarray
    max_eig: float
    gap: float
    iterations: int
    obj_trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


class Op1Operator:
    """Structured operator for :class:`LmiProblem`.

    Variables: vech(X_dd) | vec(S_a) (n_a x n, row-major) | vec(H) | lambda.
    X is restricted to blkdiag(X_dd, I) (no loss: the algebraic rows/columns
    of X enter only through S where the free W absorbs them).  Every
    constraint matrix except lambda's is a symmetrized outer product
    ``-(p e_q' + e_q p')`` with p in a dictionary of n + n_u vectors, which
    gives a Gram-matrix Schur assembly.
    """

    def __init__(self, prob: LmiProblem, equilibrate: bool = True):
        self.prob = prob
        n, n_d, n_a, n_u = prob.n, prob.n_d, prob.n_a, prob.n_u
        self.k1 = 2 * n + prob.n_wt
        self.iu, self.ju = np.triu_indices(n_d)
        self.m_x = len(self.iu)
        self.m_s = n_a * n
        self.m_h = n_u * n
        self.m = self.m_x + self.m_s + self.m_h + 1
        self.block_dims = [self.k1, n_d, 1]
        self.c = np.zeros(self.m)
        self.c[-1] = 1.0

        M0 = prob.lmi_matrix(0.0, np.zeros((n, n)), np.zeros((n_a, n)),
                             np.zeros((n_u, n)))
        # dictionary: columns of [A; 0; C] per state, [B; 0; D] per input
        V = np.zeros((self.k1, n + n_u))
        V[:n, :n] = prob.A
        V[n + prob.n_wt:, :n] = prob.C
        V[:n, n:] = prob.B
        V[n + prob.n_wt:, n:] = prob.D
        self.d = np.ones(self.k1)
        if equilibrate:
            probe = np.abs(M0) + np.abs(V) @ np.abs(V).T / max(1, n)
            probe += np.eye(self.k1)
            d = np.ones(self.k1)
            for _ in range(3):
                r = np.sqrt(np.max(np.abs(probe) * d[None, :] * d[:, None], axis=1))
                d /= np.maximum(r, 1e-8)
            self.d = np.clip(d / np.median(d), 1e-3, 1e3)
        D = self.d
        self.F0 = [
            -(M0 * D[:, None] * D[None, :]) - prob.eps * np.eye(self.k1),
            -prob.eps * np.eye(n_d),
            np.array([[-prob.eps]]),
        ]
        self.V = V * D[:, None]
        # lambda's block-1 matrix is +diag(d^2) on the (2,2) window
        lam_diag = np.zeros(self.k1)
        lam_diag[n:n + prob.n_wt] = D[n:n + prob.n_wt] ** 2
        self.lam_diag = lam_diag

        # per-class index arrays into (dictionary, e-position)
        n_seq = np.arange(n)
        self.sa_p = np.repeat(n_d + np.arange(n_a), n)   # dictionary position
        self.sa_q = np.tile(n_seq, n_a)
        self.h_p = np.repeat(n + np.arange(n_u), n)
        self.h_q = np.tile(n_seq, n_u)

    # -- helpers --------------------------------------------------------------

    def _gram(self, W1):
        WV = W1 @ self.V                      # k1 x (n+nu)
        n = self.prob.n
        G_pp = self.V.T @ WV                  # (n+nu)^2
        G_ep = WV[:n, :] * self.d[:n, None]   # e_q' W p
        G_ee = W1[:n, :n] * self.d[:n, None] * self.d[None, :n]
        return G_pp, G_ep, G_ee

    def forward(self, X):
        X1, X2, X3 = X
        prob = self.prob
        n, n_d = prob.n, prob.n_d
        # <sym2(p e_q'), X1> = 2 p' X1 e_q, with the -1 LMI sign
        M = -2.0 * (self.V.T @ X1[:, :n]) * self.d[None, :n]  # (n+nu, n)
        out = np.empty(self.m)
        xdiag = M[self.iu, self.ju] + np.where(self.iu != self.ju,
                                               M[self.ju, self.iu], 0.0)
        x2 = X2[self.iu, self.ju] + np.where(self.iu != self.ju,
                                             X2[self.ju, self.iu], 0.0)
        out[:self.m_x] = xdiag + x2
        out[self.m_x:self.m_x + self.m_s] = M[self.sa_p, self.sa_q]
        out[self.m_x + self.m_s:self.m_x + self.m_s + self.m_h] = M[self.h_p, self.h_q]
        out[-1] = float(self.lam_diag @ np.diagonal(X1)) + float(X3[0, 0])
        return out

    def adjoint(self, y):
        prob = self.prob
        n, n_d, n_a, n_u = prob.n, prob.n_d, prob.n_a, prob.n_u
        Xdd = np.zeros((n_d, n_d))
        yx = y[:self.m_x]
        Xdd[self.iu, self.ju] = yx
        Xdd[self.ju, self.iu] = yx
        Sa = y[self.m_x:self.m_x + self.m_s].reshape(n_a, n)
        Hm = y[self.m_x + self.m_s:self.m_x + self.m_s + self.m_h].reshape(n_u, n)
        lam = y[-1]
        # Ycoef[(dict pos), q] with the -1 LMI sign
        Yc = np.zeros((n + n_u, n))
        Yc[:n_d, :n_d] = Xdd
        Yc[n_d:n, :] = Sa
        Yc[n:, :] = Hm
        T = self.V @ (-Yc * self.d[None, :n])      # k1 x n
        M1 = np.zeros((self.k1, self.k1))
        M1[:, :n] = T
        M1 += M1.T
        M1[np.arange(self.k1), np.arange(self.k1)] += lam * self.lam_diag
        return [M1, Xdd, np.array([[lam]])]

    def schur(self, W):
        W1, W2, W3 = W
        prob = self.prob
        n, n_d = prob.n, prob.n_d
        G_pp, G_ep, G_ee = self._gram(W1)
        iu, ju = self.iu, self.ju

        def cls_block(p1, q1, p2, q2):
            t1 = G_ep[np.ix_(q1, p2)] * G_ep[np.ix_(q2, p1)].T
            t2 = G_ee[np.ix_(q1, q2)] * G_pp[np.ix_(p1, p2)]
            return 2.0 * (t1 + t2)

        # ordered-pair representation of the X class: term (i, j) = sym2(v_i e_j')
        def fold_x_rows(T):
            # T indexed by ordered pairs (i, j) flattened (n_d * n_d, ...)
            Tm = T.reshape(n_d, n_d, -1)
            out = Tm[iu, ju, :] + np.where((iu != ju)[:, None], Tm[ju, iu, :], 0.0)
            return out

        ord_p = np.repeat(np.arange(n_d), n_d)
        ord_q = np.tile(np.arange(n_d), n_d)

        H = np.zeros((self.m, self.m))
        sl_x = slice(0, self.m_x)
        sl_s = slice(self.m_x, self.m_x + self.m_s)
        sl_h = slice(self.m_x + self.m_s, self.m_x + self.m_s + self.m_h)

        Txx = cls_block(ord_p, ord_q, ord_p, ord_q)
        Txx = fold_x_rows(fold_x_rows(Txx).T)
        # block-2 contribution (X psd): dictionary = unit vectors, Gram = W2
        t1 = W2[np.ix_(ju, iu)] * W2[np.ix_(ju, iu)].T
        t2 = W2[np.ix_(ju, ju)] * W2[np.ix_(iu, iu)]
        coef = np.where(iu == ju, 0.5, 1.0)
        Hxx2 = 2.0 * (t1 + t2) * coef[:, None] * coef[None, :]
        H[sl_x, sl_x] = Txx + Hxx2

        Txs = fold_x_rows(cls_block(ord_p, ord_q, self.sa_p, self.sa_q))
        H[sl_x, sl_s] = Txs
        H[sl_s, sl_x] = Txs.T
        Txh = fold_x_rows(cls_block(ord_p, ord_q, self.h_p, self.h_q))
        H[sl_x, sl_h] = Txh
        H[sl_h, sl_x] = Txh.T
        H[sl_s, sl_s] = cls_block(self.sa_p, self.sa_q, self.sa_p, self.sa_q)
        Tsh = cls_block(self.sa_p, self.sa_q, self.h_p, self.h_q)
        H[sl_s, sl_h] = Tsh
        H[sl_h, sl_s] = Tsh.T
        H[sl_h, sl_h] = cls_block(self.h_p, self.h_q, self.h_p, self.h_q)

        # lambda row/column: <diag(a) , W sym2(p e_q') W> = 2 sum_i a_i (Wp)_i (We_q)_i
        a = self.lam_diag
        WV = W1 @ self.V
        Hl_pq = 2.0 * ((a[:, None] * WV).T @ (W1[:, :n] * self.d[None, :n]))
        lam_col = np.empty(self.m)
        Mx = -(Hl_pq)  # include the -1 sign of the non-lambda constraint side
        lam_col[sl_x] = Mx[iu, ju] + np.where(iu != ju, Mx[ju, iu], 0.0)
        lam_col[sl_s] = Mx[self.sa_p, self.sa_q]
        lam_col[sl_h] = Mx[self.h_p, self.h_q]
        Wwin = W1 * a[:, None]
        lam_col[-1] = float(np.sum(Wwin * Wwin.T)) + float(W3[0, 0] ** 2)
        H[:, -1] = lam_col
        H[-1, :] = lam_col
        return H

    def recover(self, y):
        prob = self.prob
        n, n_d, n_a, n_u = prob.n, prob.n_d, prob.n_a, prob.n_u
        Xdd = np.zeros((n_d, n_d))
        Xdd[self.iu, self.ju] = y[:self.m_x]
        Xdd[self.ju, self.iu] = y[:self.m_x]
        Sa = y[self.m_x:self.m_x + self.m_s].reshape(n_a, n)
        Hm = y[self.m_x + self.m_s:self.m_x + self.m_s + self.m_h].reshape(n_u, n)
        lam = float(y[-1])
        X = np.eye(n)
        X[:n_d, :n_d] = Xdd
        return lam, X, Sa, Hm

    def pack(self, lam, X_dd, S_a, H):
        """Inverse of :meth:`recover` (for warm starts)."""
        y = np.empty(self.m)
        y[:self.m_x] = X_dd[self.iu, self.ju]
        y[self.m_x:self.m_x + self.m_s] = np.asarray(S_a).ravel()
        y[self.m_x + self.m_s:self.m_x + self.m_s + self.m_h] = np.asarray(H).ravel()
        y[-1] = lam
        return y


def solve_lmi(prob: LmiProblem, tol_gap=1e-8, tol_feas=1e-9, max_iter=120,
              verbose=False, warm=None) -> SdpSolution:
    """Solve the synthesis LMI; falls back to a phase-1 feasibility check.

    ``warm`` is an optional (lambda, X_dd, S_a, H) tuple of strictly
    feasible starting values (ignored when not strictly feasible).
    """
    op = Op1Operator(prob)
    y0 = op.pack(*warm) if warm is not None else None
    y, X, Z, info = solve_ipm(op, tol_gap=tol_gap, tol_feas=tol_feas,
                              max_iter=max_iter, verbose=verbose, y0=y0)
    lam, Xv, Wv, Hv = op.recover(y)
    max_eig = float(np.max(np.linalg.eigvalsh(
        prob.lmi_matrix(lam, Xv, Wv, Hv))))
    status = info.status
    if status == "optimal" and max_eig > -1e-9:
        status = "max-iter"
    if (status != "optimal" and max_eig <= -1e-9 and info.gap <= 1e-6
            and info.dres <= 1e-9):
        # the returned point is a verified eps-optimal certificate even
        # though the (diagnostic) primal multiplier did not fully converge
        status = "optimal"
    if status != "optimal":
        # phase 1: minimize t with M(v) <= (t - eps) I
        p1 = WithIdentityVar(op)
        y1, _, _, info1 = solve_ipm(p1, tol_gap=1e-7, tol_feas=1e-8,
                                    max_iter=max_iter)
        if info1.status == "optimal" and y1[-1] > 0.0:
            status = "infeasible"
    return SdpSolution(status=status, lam=lam, X=Xv, W=Wv, H=Hv,
                       max_eig=max_eig, gap=info.gap, iterations=info.iterations,
                       obj_trace=info.obj_trace,
                       diagnostics={"pres": info.pres, "dres": info.dres})
