"""Dense linear-algebra kernels for robust control synthesis.

Matrix sign function, continuous algebraic Riccati equations (with the
quadratic G-term used by the H-infinity design), H-infinity norm by
Hamiltonian bisection, spectral abscissa, H2 norm, and the orthogonal
complement of the 0/1 descriptor structure matrix.  Eigenvalue and linear
solves are delegated to LAPACK through numpy (Hessenberg + shifted QR
under the hood); the iteration logic lives here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NumericsError(RuntimeError):
    """Raised when an iteration fails to produce a usable result."""


@dataclass
class NumericsConfig:
    """Central tolerances; functions take an optional config override."""

    sign_tol: float = 1e-12
    sign_max_iter: int = 100
    care_rtol: float = 1e-8
    hinf_rtol: float = 1e-6
    hinf_imag_tol: float = 1e-7
    eig_stability_margin: float = 0.0


DEFAULT = NumericsConfig()


def spectral_abscissa(M) -> float:
    """Maximum real part of the eigenvalues of a square matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericsError("eigenvalue iteration failed") from exc
    return float(np.max(ev.real))


def matrix_sign(M, config: NumericsConfig | None = None) -> np.ndarray:
    """Matrix sign function by scaled Newton iteration.

    ``S_{k+1} = (c S_k + (c S_k)^{-1}) / 2`` with determinant scaling
    ``c = |det S_k|^{-1/n}``.  Requires no eigenvalues on the imaginary
    axis; stagnation raises :class:`NumericsError`.
    """
    cfg = config or DEFAULT
    S = np.array(M, dtype=float if np.isrealobj(M) else complex)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise NumericsError("matrix_sign needs a square matrix")
    n = S.shape[0]
    for _ in range(cfg.sign_max_iter):
        sign, logdet = np.linalg.slogdet(S)
        if sign == 0 or not np.isfinite(logdet):
            raise NumericsError("singular iterate in matrix sign (eigenvalue on axis?)")
        c = math.exp(-logdet / n) if abs(logdet) < 500 * n else 1.0
        try:
            Sinv = np.linalg.inv(c * S)
        except np.linalg.LinAlgError as exc:
            raise NumericsError("singular iterate in matrix sign") from exc
        S_next = 0.5 * (c * S + Sinv)
        delta = np.linalg.norm(S_next - S, "fro")
        S = S_next
        if delta <= cfg.sign_tol * max(1.0, np.linalg.norm(S, "fro")):
            return S
    raise NumericsError("matrix sign iteration did not converge "
                        "(eigenvalue too close to the imaginary axis?)")


@dataclass
class CareProblem:
    """Data of A'P + PA' + PGP - (PB + S) R^{-1} (B'P + S') + Q = 0."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray | None = None
    G: np.ndarray | None = None

    def __post_init__(self):
        n = self.A.shape[0]
        m = self.B.shape[1]
        if self.S is None:
            self.S = np.zeros((n, m))
        if self.G is None:
            self.G = np.zeros((n, n))
        if not np.allclose(self.Q, self.Q.T, atol=1e-10):
            raise NumericsError("CARE Q must be symmetric")
        if not np.allclose(self.R, self.R.T, atol=1e-10):
            raise NumericsError("CARE R must be symmetric")
        if not np.allclose(self.G, self.G.T, atol=1e-10):
            raise NumericsError("CARE G must be symmetric")


def care_residual(prob: CareProblem, P) -> float:
    A, B, Q, R, S, G = prob.A, prob.B, prob.Q, prob.R, prob.S, prob.G
    PB_S = P @ B + S
    res = (A.T @ P + P @ A + P @ G @ P
           - PB_S @ np.linalg.solve(R, PB_S.T) + Q)
    return float(np.linalg.norm(res, "fro"))


def solve_care(prob: CareProblem, config: NumericsConfig | None = None,
               require_stabilizing: bool = True) -> np.ndarray:
    """Stabilizing solution of the CARE via the matrix sign of the Hamiltonian.

    The cross term S is absorbed by shifting A; the G-term folds into the
    quadratic coefficient so only the standard 2n Hamiltonian is needed.
    Raises :class:`NumericsError` when R is not positive definite, the
    Hamiltonian has imaginary-axis eigenvalues, or the candidate P fails
    the residual / stabilizing checks.
    """
    cfg = config or DEFAULT
    A, B, Q, R, S, G = (prob.A, prob.B, prob.Q, prob.R, prob.S, prob.G)
    n = A.shape[0]
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError as exc:
        raise NumericsError("CARE R is not positive definite") from exc
    Rinv_ST = np.linalg.solve(R, S.T)
    A_s = A - B @ Rinv_ST
    Q_s = Q - S @ Rinv_ST
    Q_s = 0.5 * (Q_s + Q_s.T)
    M = B @ np.linalg.solve(R, B.T) - G
    M = 0.5 * (M + M.T)

    H = np.block([[A_s, -M], [-Q_s, -A_s.T]])
    Sg = matrix_sign(H, cfg)
    W = Sg + np.eye(2 * n)
    # stable invariant subspace: solve [W12; W22] P = -[W11; W21]
    top = np.concatenate([W[:n, n:], W[n:, n:]], axis=0)
    rhs = -np.concatenate([W[:n, :n], W[n:, :n]], axis=0)
    P, *_ = np.linalg.lstsq(top, rhs, rcond=None)
    P = 0.5 * (P + P.T)

    scale = 1.0 + float(np.linalg.norm(P, "fro"))
    res = care_residual(prob, P)
    if not np.all(np.isfinite(P)) or res > cfg.care_rtol * scale:
        raise NumericsError(f"CARE residual {res:.3e} too large (scale {scale:.3e})")
    if require_stabilizing:
        Acl = A_s + (G - B @ np.linalg.solve(R, B.T)) @ P
        if spectral_abscissa(Acl) >= cfg.eig_stability_margin:
            raise NumericsError("CARE solution is not stabilizing")
    return P


def lyap_solve(A, Q) -> np.ndarray:
    """Solve A'X + XA + Q = 0 by the Kronecker-product linear system."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    K = np.kron(np.eye(n), A.T) + np.kron(A.T, np.eye(n))
    x = np.linalg.solve(K, -Q.reshape(n * n))
    X = x.reshape(n, n)
    return 0.5 * (X + X.T)


def h2_norm(A, B, C) -> float:
    """H2 norm of (A, B, C, 0); +inf when A is not Hurwitz."""
    if spectral_abscissa(A) >= 0:
        return math.inf
    X = lyap_solve(A, C.T @ C)  # observability gramian
    val = float(np.trace(B.T @ X @ B))
    return math.sqrt(max(val, 0.0))


def _hamiltonian_has_imag_eig(A, B, C, D, gamma, tol):
    m = B.shape[1]
    R = gamma * gamma * np.eye(m) - D.T @ D
    try:
        Rinv = np.linalg.inv(R)
    except np.linalg.LinAlgError:
        return True
    BRi = B @ Rinv
    Ah = A + BRi @ D.T @ C
    H = np.block([
        [Ah, BRi @ B.T],
        [-C.T @ (np.eye(C.shape[0]) + D @ Rinv @ D.T) @ C, -Ah.T],
    ])
    ev = np.linalg.eigvals(H)
    scale = max(1.0, float(np.max(np.abs(ev))))
    return bool(np.any(np.abs(ev.real) <= tol * scale))


def hinf_norm(A, B, C, D=None, config: NumericsConfig | None = None,
              return_trace: bool = False):
    """H-infinity norm of C (sI - A)^{-1} B + D by Hamiltonian bisection.

    Returns +inf when A is not Hurwitz.  The test at level gamma checks the
    associated Hamiltonian for imaginary-axis eigenvalues; the bracket is
    grown geometrically and then bisected to relative tolerance.
    """
    cfg = config or DEFAULT
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if B.shape[0] != A.shape[0]:
        B = B.reshape(A.shape[0], -1)
    if C.shape[1] != A.shape[0]:
        C = C.reshape(-1, A.shape[0])
    if D is None:
        D = np.zeros((C.shape[0], B.shape[1]))
    D = np.atleast_2d(np.asarray(D, dtype=float))

    if A.size and spectral_abscissa(A) >= cfg.eig_stability_margin:
        return (math.inf, []) if return_trace else math.inf

    sig_d = float(np.linalg.norm(D, 2)) if D.size else 0.0
    # frequency probes give a cheap lower bound
    lo = sig_d
    for w in (0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0):
        T = C @ np.linalg.solve(1j * w * np.eye(A.shape[0]) - A, B) + D
        lo = max(lo, float(np.linalg.norm(T, 2)))
    if lo == 0.0:
        return (0.0, []) if return_trace else 0.0

    trace = []
    hi = max(2.0 * lo, 1e-8)
    for _ in range(60):
        bad = _hamiltonian_has_imag_eig(A, B, C, D, hi, cfg.hinf_imag_tol)
        trace.append((hi, bad))
        if not bad:
            break
        hi *= 2.0
    else:
        raise NumericsError("hinf_norm failed to bracket the norm from above")

    lo_b = max(lo * (1 - 1e-9), sig_d * (1 + 1e-12))
    for _ in range(200):
        if hi - lo_b <= cfg.hinf_rtol * hi:
            break
        mid = 0.5 * (hi + lo_b)
        bad = _hamiltonian_has_imag_eig(A, B, C, D, mid, cfg.hinf_imag_tol)
        trace.append((mid, bad))
        if bad:
            lo_b = mid
        else:
            hi = mid
    return (hi, trace) if return_trace else hi


def orth_complement(E) -> np.ndarray:
    """Orthonormal basis of the kernel of the 0/1 diagonal structure matrix E.

    Columns are the unit vectors at the zero rows; ``E @ E_perp = 0`` and
    ``E_perp.T @ E_perp = I``.  Raises when E is not a 0/1 diagonal matrix.
    """
    E = np.asarray(E, dtype=float)
    n = E.shape[0]
    if E.shape != (n, n) or not np.allclose(E, np.diag(np.diagonal(E))):
        raise NumericsError("orth_complement expects a diagonal structure matrix")
    d = np.diagonal(E)
    if not np.all((d == 0) | (d == 1)):
        raise NumericsError("structure matrix entries must be 0 or 1")
    zero = np.flatnonzero(d == 0)
    Ep = np.zeros((n, len(zero)))
    Ep[zero, np.arange(len(zero))] = 1.0
    if np.linalg.matrix_rank(Ep) != len(zero):
        raise NumericsError("rank mismatch in orthogonal complement")
    return Ep
