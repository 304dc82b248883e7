"""Wide-area controller syntheses and the worst-case uncertainty workflow.

Three state-feedback designs over the assembled model:

* ``hinf-dae`` — descriptor-system H-infinity design: solves the synthesis
  LMI (semidefinite program) over (lambda, X, W, H) and recovers
  ``K = H (X E' + Eperp W)^{-1}``, certified level ``mu = sqrt(lambda)``;
* ``hinf-ode`` — H-infinity design on the Kron-reduced ODE by bisection on
  the level mu, each candidate checked through a CARE with quadratic term;
* ``h2-ode``  — LQ design on the reduced ODE from the standard CARE.

The nonlinearity is lifted into an extra L2 disturbance channel with
``B_f = B_w`` and ``D_f = B_f``, so the lifted disturbance input is
``w_tilde = [w; w_f]`` with ``Bw_hat = [B_w, B_w]``, ``Dw_hat = [D_w, B_w]``.
ODE designs act on dynamic states only: their gains are embedded as
``[K_d, 0]``.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .ndae import DaeSystem, ReducedSystem, check_regularity, kron_reduce
from .numerics import CareProblem, NumericsError, orth_complement
from .sdp import LmiProblem, SdpError, solve_lmi

METHODS = ("hinf-dae", "hinf-ode", "h2-ode")


class SynthesisError(RuntimeError):
    """Raised when a synthesis cannot produce a certified gain."""


@dataclass
class PerformanceWeights:
    """Penalty matrices of the performance output z = C x + D u + D_w w."""

    C: np.ndarray
    D: np.ndarray
    D_w: np.ndarray

    @classmethod
    def default(cls, sys: DaeSystem, angle_speed_weight=1.0, other_weight=0.1,
                input_weight=1.0):
        """Unit weight on machine speed/angle states, light weight elsewhere;
        each input penalized through the state row it directly drives."""
        n = sys.n
        diag = np.full(n, other_weight)
        names = sys.index.state_names
        for i, nm_ in enumerate(names[:sys.n_d]):
            leaf = nm_.split(".")[1]
            if leaf in ("delta", "omega", "delta_c", "omega_m"):
                diag[i] = angle_speed_weight
        C = np.diag(diag)
        D = np.zeros((n, sys.n_u))
        G = len(sys.gens)
        R = len(sys.pvs)
        for k in range(G):
            D[sys.index.gen[k].start + 8, k] = input_weight          # v_a row
            D[sys.index.gen[k].start + 5, G + k] = input_weight      # P_v row
        for k in range(R):
            D[sys.index.pv[k].start + 8, 2 * G + k] = input_weight   # z_do row
            D[sys.index.pv[k].start + 5, 2 * G + R + k] = input_weight  # delta_c row
        D_w = np.zeros((n, sys.n_w))
        return cls(C=C, D=D, D_w=D_w)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for M in (self.C, self.D, self.D_w):
            h.update(np.ascontiguousarray(np.round(M, 12)).tobytes())
        return h.hexdigest()[:16]


@dataclass
class ControllerGain:
    """A synthesized feedback gain with its certificate and provenance."""

    K: np.ndarray
    method: str
    mu: float | None
    case_hash: str
    weights_hash: str
    solve_time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.K)):
            raise SynthesisError("controller gain has non-finite entries")


@dataclass
class UncertaintyBall:
    """Frobenius-ball parametric uncertainty on A with A's sparsity pattern."""

    rho: float = 1.0
    nu: float = 0.001

    def __post_init__(self):
        if self.rho < 0:
            raise SynthesisError("uncertainty radius must be nonnegative")


def disturbance_lift(sys: DaeSystem):
    """(Bw_hat, Dw_hat) of the lifted disturbance w_tilde = [w; w_f]."""
    return np.concatenate([sys.B_w, sys.B_w], axis=1)


def lifted_weights(weights: PerformanceWeights, sys: DaeSystem):
    Dw_hat = np.concatenate([weights.D_w, sys.B_w], axis=1)
    return Dw_hat


def embed_gain(K_d: np.ndarray, n_a: int) -> np.ndarray:
    """Pad a dynamic-state gain with zero algebraic columns: K = [K_d, 0]."""
    K_d = np.atleast_2d(np.asarray(K_d, dtype=float))
    return np.concatenate([K_d, np.zeros((K_d.shape[0], n_a))], axis=1)


def reduced_weights(weights: PerformanceWeights, sys: DaeSystem,
                    red: ReducedSystem):
    """Kron-reduced performance matrices (C~, D~, and the lifted Dw~)."""
    n_d = sys.n_d
    Cd = weights.C[:, :n_d]
    Ca = weights.C[:, n_d:]
    C_t = Cd - Ca @ red.ainv_ad
    D_t = weights.D - Ca @ red.ainv_Ba
    Dw_hat = lifted_weights(weights, sys)
    Bw_hat_a = np.concatenate([sys.B_w[n_d:], sys.B_w[n_d:]], axis=1)
    Dw_t = Dw_hat - Ca @ np.linalg.solve(sys.A[n_d:, n_d:], Bw_hat_a)
    Bw_t = np.concatenate([red.Bw_t, red.Bw_t], axis=1)
    return C_t, D_t, Dw_t, Bw_t


# --- H-infinity DAE design ------------------------------------------------------

def _dae_warm_start(sys, weights, prob: LmiProblem):
    """Strictly feasible LMI start built from the reduced-ODE CARE design.

    Uses S = blkdiag-structured inverse of the reduced bounded-real Lyapunov
    matrix at a backed-off level; returns None when no candidate passes the
    strict feasibility check.
    """
    try:
        red = kron_reduce(sys.A, sys.B, sys.B_w, sys.n_d)
        C_t, D_t, Dw_t, Bw_t = reduced_weights(weights, sys, red)
        lo, hi = math.log(1e-2), math.log(1e4)
        P_hi = None
        for _ in range(25):
            mid = 0.5 * (lo + hi)
            try:
                cp = _hinf_ode_candidate(red, C_t, D_t, Dw_t, Bw_t, math.exp(mid))
                P = nm.solve_care(cp)
                hi, P_hi = mid, (math.exp(mid), P, cp)
            except (NumericsError, np.linalg.LinAlgError):
                lo = mid
        if P_hi is None:
            return None
        mu_q = P_hi[0]
        cp = _hinf_ode_candidate(red, C_t, D_t, Dw_t, Bw_t, 1.3 * mu_q)
        P = nm.solve_care(cp)
        K_d = -np.linalg.solve(cp.R, cp.B.T @ P + cp.S.T)
    except (NumericsError, np.linalg.LinAlgError):
        return None
    n_d, n_a = sys.n_d, sys.n_a
    Aaa = sys.A[n_d:, n_d:]
    X_base = np.linalg.inv(P)
    X_base = 0.5 * (X_base + X_base.T)
    s_scale = float(np.trace(X_base)) / n_d
    for zeta in (1.0, 3.0, 0.3):
        for tau in (1.0, 5.0, 0.2):
            X_dd = zeta * X_base
            S_ad = -np.linalg.solve(Aaa, sys.A[n_d:, :n_d] @ X_dd)
            S_aa = -tau * zeta * s_scale * np.linalg.inv(Aaa)
            S_a = np.concatenate([S_ad, S_aa], axis=1)
            H = np.concatenate([K_d @ X_dd, np.zeros((sys.n_u, n_a))], axis=1)
            lam = (1.6 * 1.3 * mu_q) ** 2
            X_full = np.eye(sys.n)
            X_full[:n_d, :n_d] = X_dd
            M = prob.lmi_matrix(lam, X_full, S_a, H)
            if float(np.max(np.linalg.eigvalsh(M))) < -2 * prob.eps:
                return (lam, X_dd, S_a, H)
    return None


def synth_hinf_dae(sys: DaeSystem, weights: PerformanceWeights | None = None,
                   eps: float = 1e-7, verbose: bool = False,
                   warm_start: bool = True) -> ControllerGain:
    """Descriptor H-infinity synthesis through the LMI program.

    Raises :class:`SynthesisError` when the pencil is irregular, the LMI is
    infeasible, or the recovery matrix ``X E' + Eperp W`` is singular (a
    perturbed margin is retried once before giving up).
    """
    weights = weights or PerformanceWeights.default(sys)
    regular, _ = check_regularity(sys.E, sys.A)
    if not regular:
        raise SynthesisError("pencil (E, A) is not regular")
    Bw_hat = disturbance_lift(sys)
    Dw_hat = lifted_weights(weights, sys)
    t0 = time.time()
    last = None
    for attempt, eps_k in enumerate((eps, eps * 100)):
        prob = LmiProblem(E=sys.E, A=sys.A, B=sys.B, Bw_hat=Bw_hat,
                          C=weights.C, D=weights.D, Dw_hat=Dw_hat, eps=eps_k)
        warm = _dae_warm_start(sys, weights, prob) if warm_start else None
        sol = solve_lmi(prob, verbose=verbose, warm=warm)
        last = sol
        if sol.status == "infeasible":
            raise SynthesisError("synthesis LMI infeasible")
        if sol.status != "optimal":
            continue
        S = sol.X @ sys.E.T + prob.E_perp @ sol.W
        cond = np.linalg.cond(S)
        if cond > 1e12:
            continue  # singular recovery matrix: retry with perturbed margin
        K = np.linalg.solve(S.T, sol.H.T).T
        mu = math.sqrt(max(sol.lam, 0.0))
        gain = ControllerGain(
            K=K, method="hinf-dae", mu=mu, case_hash=sys.case.content_hash(),
            weights_hash=weights.content_hash(), solve_time=time.time() - t0,
            meta={"lmi_max_eig": sol.max_eig, "sdp_iterations": sol.iterations,
                  "sdp_gap": sol.gap, "recovery_cond": float(cond),
                  "eps": eps_k, "lam": sol.lam,
                  "certificate": {"X": sol.X, "W": sol.W, "H": sol.H}})
        return gain
    raise SynthesisError(
        f"hinf-dae synthesis failed (last status {last.status if last else 'none'})")


# --- H-infinity ODE design ------------------------------------------------------

def _hinf_ode_candidate(red, C_t, D_t, Dw_t, Bw_t, mu):
    """Appendix-style CARE data at level mu; raises NumericsError if invalid."""
    nw = Dw_t.shape[1]
    F = mu * mu * np.eye(nw) - Dw_t.T @ Dw_t
    np.linalg.cholesky(F)  # F(mu) > 0 required
    Fi_Dw = np.linalg.solve(F, Dw_t.T)
    A_bar = red.A_t + Bw_t @ Fi_Dw @ C_t
    B_bar = red.B_t + Bw_t @ Fi_Dw @ D_t
    mid = np.eye(Dw_t.shape[0]) + Dw_t @ np.linalg.solve(F, Dw_t.T)
    Q = C_t.T @ mid @ C_t
    R = D_t.T @ mid @ D_t
    S = C_t.T @ mid @ D_t
    G = Bw_t @ np.linalg.solve(F, Bw_t.T)
    return CareProblem(A=A_bar, B=B_bar, Q=0.5 * (Q + Q.T),
                       R=0.5 * (R + R.T), S=S, G=0.5 * (G + G.T))


def synth_hinf_ode(sys: DaeSystem, weights: PerformanceWeights | None = None,
                   mu_lo: float = 1e-3, mu_hi: float = 1e4,
                   bisect_steps: int = 60) -> ControllerGain:
    """H-infinity design on the reduced ODE by bisection on the level mu."""
    weights = weights or PerformanceWeights.default(sys)
    red = kron_reduce(sys.A, sys.B, sys.B_w, sys.n_d)
    C_t, D_t, Dw_t, Bw_t = reduced_weights(weights, sys, red)
    t0 = time.time()

    def attempt(mu):
        try:
            prob = _hinf_ode_candidate(red, C_t, D_t, Dw_t, Bw_t, mu)
            P = nm.solve_care(prob)
        except (NumericsError, np.linalg.LinAlgError):
            return None
        if np.min(np.linalg.eigvalsh(P)) < -1e-8 * (1 + np.linalg.norm(P)):
            return None
        K_d = -np.linalg.solve(prob.R, prob.B.T @ P + prob.S.T)
        if nm.spectral_abscissa(red.A_t + red.B_t @ K_d) >= 0:
            return None
        return K_d

    trace = []
    lo, hi = math.log(mu_lo), math.log(mu_hi)
    K_hi = attempt(math.exp(hi))
    trace.append((math.exp(hi), K_hi is not None))
    if K_hi is None:
        raise SynthesisError(f"no feasible H-infinity level within mu <= {mu_hi}")
    for _ in range(bisect_steps):
        mid = 0.5 * (lo + hi)
        K_mid = attempt(math.exp(mid))
        trace.append((math.exp(mid), K_mid is not None))
        if K_mid is None:
            lo = mid
        else:
            hi, K_hi = mid, K_mid
    mu_star = math.exp(hi)
    K = embed_gain(K_hi, sys.n_a)
    return ControllerGain(
        K=K, method="hinf-ode", mu=mu_star, case_hash=sys.case.content_hash(),
        weights_hash=weights.content_hash(), solve_time=time.time() - t0,
        meta={"bisection_trace": trace, "K_d": K_hi})


# --- H2 ODE design ---------------------------------------------------------------

def synth_h2_ode(sys: DaeSystem,
                 weights: PerformanceWeights | None = None) -> ControllerGain:
    """LQ/H2 design on the reduced ODE (disturbance feedthrough forced to O)."""
    weights = weights or PerformanceWeights.default(sys)
    red = kron_reduce(sys.A, sys.B, sys.B_w, sys.n_d)
    C_t, D_t, _, Bw_t = reduced_weights(weights, sys, red)
    t0 = time.time()
    R_bar = D_t.T @ D_t
    try:
        np.linalg.cholesky(R_bar)
    except np.linalg.LinAlgError as exc:
        raise SynthesisError("H2 design needs D~ of full column rank") from exc
    N = C_t.T @ D_t
    Q_bar = C_t.T @ C_t
    prob = CareProblem(A=red.A_t, B=red.B_t, Q=0.5 * (Q_bar + Q_bar.T),
                       R=0.5 * (R_bar + R_bar.T), S=N)
    try:
        X_d = nm.solve_care(prob)
    except NumericsError as exc:
        raise SynthesisError(f"H2 CARE failed: {exc}") from exc
    K_d = -np.linalg.solve(R_bar, red.B_t.T @ X_d + N.T)
    K = embed_gain(K_d, sys.n_a)
    Acl = red.A_t + red.B_t @ K_d
    h2 = nm.h2_norm(Acl, Bw_t, C_t + D_t @ K_d)
    return ControllerGain(
        K=K, method="h2-ode", mu=None, case_hash=sys.case.content_hash(),
        weights_hash=weights.content_hash(), solve_time=time.time() - t0,
        meta={"K_d": K_d, "h2_norm": h2, "care_residual": nm.care_residual(prob, X_d)})


def synthesize(sys: DaeSystem, method: str,
               weights: PerformanceWeights | None = None, **kw) -> ControllerGain:
    if method == "hinf-dae":
        return synth_hinf_dae(sys, weights, **kw)
    if method == "hinf-ode":
        return synth_hinf_ode(sys, weights, **kw)
    if method == "h2-ode":
        return synth_h2_ode(sys, weights, **kw)
    raise SynthesisError(f"unknown synthesis method {method!r}")


# --- worst-case parametric uncertainty --------------------------------------------

def open_loop_objective(sys: DaeSystem, weights: PerformanceWeights, dA,
                        nu: float):
    """Lexicographic OP4 objective of a perturbation of A.

    Returns ``(destabilizing, value)``: a destabilizing perturbation (open
    loop not asymptotically stable, H-infinity norm infinite) dominates any
    finite one; ties break on the spectral abscissa.  Perturbations that
    destroy the algebraic block's invertibility are rejected (-inf).
    """
    A_p = sys.A + dA
    try:
        red = kron_reduce(A_p, sys.B, sys.B_w, sys.n_d)
    except Exception:
        return (False, -math.inf)
    alpha = nm.spectral_abscissa(red.A_t)
    if alpha >= 0:
        return (True, alpha)
    sys_p = _ShallowPerturbed(sys, A_p)
    C_t, D_t, Dw_t, Bw_t = reduced_weights(weights, sys_p, red)
    try:
        hn = nm.hinf_norm(red.A_t, Bw_t, C_t, Dw_t)
    except NumericsError:
        return (True, alpha)
    if math.isinf(hn):
        return (True, alpha)
    return (False, hn + nu * alpha)


class _ShallowPerturbed:
    """View of a DaeSystem with A replaced (for weight reduction reuse)."""

    def __init__(self, sys, A_p):
        self.__dict__.update(sys.__dict__)
        self.A = A_p


def _objective_better(a, b):
    """Lexicographic comparison of (destabilizing, value) objective tuples."""
    if a[0] != b[0]:
        return a[0]
    return a[1] > b[1]


def worst_case_perturbation(sys: DaeSystem, ball: UncertaintyBall,
                            weights: PerformanceWeights | None = None,
                            n_starts: int = 8, seed: int = 0,
                            poll_budget: int = 3000) -> np.ndarray:
    """Search for the worst structured perturbation of A in a Frobenius ball.

    Multi-start pattern search over the support of A with projection onto
    the ball; see :func:`open_loop_objective` for the objective.
    """
    weights = weights or PerformanceWeights.default(sys)
    if ball.rho == 0.0:
        return np.zeros_like(sys.A)
    mask = np.argwhere(np.abs(sys.A) > 0.0)
    rng = np.random.default_rng(seed)
    n_entries = len(mask)
    rows, cols = mask[:, 0], mask[:, 1]

    def project(vals):
        nrm = float(np.linalg.norm(vals))
        if nrm > ball.rho:
            vals = vals * (ball.rho / nrm)
        return vals

    def evaluate(vals):
        dA = np.zeros_like(sys.A)
        dA[rows, cols] = vals
        return open_loop_objective(sys, weights, dA, ball.nu)

    # sensitivity-aligned starts: gradient of the rightmost eigenvalue at 0
    red0 = kron_reduce(sys.A, sys.B, sys.B_w, sys.n_d)
    lam0, V0 = np.linalg.eig(red0.A_t)
    W0 = np.linalg.inv(V0)
    order = np.argsort(-lam0.real)
    sens_starts = []
    for idx in order[:max(2, n_starts // 2)]:
        # d lambda / dA~ = w v' (outer of left/right eigenvectors)
        Sens_dd = np.real(np.outer(W0[idx, :], V0[:, idx]))
        Sens = np.zeros_like(sys.A)
        Sens[:sys.n_d, :sys.n_d] = Sens_dd
        g = Sens[rows, cols]
        if np.linalg.norm(g) > 0:
            sens_starts.append(project(g * (ball.rho / np.linalg.norm(g))))

    best_vals = np.zeros(n_entries)
    best_obj = evaluate(best_vals)
    for start in range(n_starts):
        if start < len(sens_starts):
            vals = sens_starts[start].copy()
        else:
            vals = rng.standard_normal(n_entries)
            vals = project(vals * (ball.rho / np.linalg.norm(vals)))
        obj = evaluate(vals)
        step = ball.rho / 4.0
        budget = poll_budget
        while step > ball.rho * 1e-3 and budget > 0:
            improved = False
            coords = rng.permutation(n_entries)[:min(n_entries, 220)]
            for ci in coords:
                if budget <= 0:
                    break
                for sgn in (1.0, -1.0):
                    trial = vals.copy()
                    trial[ci] += sgn * step
                    trial = project(trial)
                    cand = evaluate(trial)
                    budget -= 1
                    if _objective_better(cand, obj):
                        vals, obj = trial, cand
                        improved = True
                        break
            if not improved:
                step *= 0.5
        if _objective_better(obj, best_obj):
            best_obj, best_vals = obj, vals.copy()

    dA = np.zeros_like(sys.A)
    dA[rows, cols] = best_vals
    return dA


def update_controller(sys: DaeSystem, dA, method: str,
                      weights: PerformanceWeights | None = None,
                      tag: str = "updated-WCS") -> ControllerGain:
    """Re-run a synthesis with A replaced by A + dA."""
    sys_p = _ShallowPerturbed(sys, sys.A + np.asarray(dA, dtype=float))
    gain = synthesize(sys_p, method, weights)
    gain.meta["update_tag"] = tag if np.any(dA) else "nominal"
    return gain


def closed_loop_matrices(sys: DaeSystem, gain: ControllerGain,
                         weights: PerformanceWeights, dA=None):
    """Reduced closed-loop quadruple (A, B, C, D) from w_tilde to z."""
    A_p = sys.A if dA is None else sys.A + dA
    A_cl = A_p + sys.B @ gain.K
    C_cl = weights.C + weights.D @ gain.K
    Bw_hat = disturbance_lift(sys)
    Dw_hat = lifted_weights(weights, sys)
    n_d = sys.n_d
    Aaa = A_cl[n_d:, n_d:]
    ainv_ad = np.linalg.solve(Aaa, A_cl[n_d:, :n_d])
    ainv_Bw = np.linalg.solve(Aaa, Bw_hat[n_d:])
    A_t = A_cl[:n_d, :n_d] - A_cl[:n_d, n_d:] @ ainv_ad
    B_t = Bw_hat[:n_d] - A_cl[:n_d, n_d:] @ ainv_Bw
    C_t = C_cl[:, :n_d] - C_cl[:, n_d:] @ ainv_ad
    D_t = Dw_hat - C_cl[:, n_d:] @ ainv_Bw
    return A_t, B_t, C_t, D_t


def closed_loop_norm(sys: DaeSystem, gain: ControllerGain,
                     weights: PerformanceWeights, dA=None) -> float:
    """H-infinity (or H2 for the H2 design) norm of the perturbed closed loop."""
    try:
        A_t, B_t, C_t, D_t = closed_loop_matrices(sys, gain, weights, dA)
    except np.linalg.LinAlgError:
        return math.inf
    if gain.method == "h2-ode":
        return nm.h2_norm(A_t, B_t, C_t)
    return nm.hinf_norm(A_t, B_t, C_t, D_t)
