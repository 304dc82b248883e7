"""Closed-loop time-domain simulation of the assembled NDAE.

Implicit trapezoidal rule on the differential rows with direct enforcement
of the algebraic rows, full-system modified Newton per step, event-aligned
stepping, and consistent reinitialization of the algebraic variables after
each network rewrite.  Disturbance scenarios follow the step-plus-noise
protocol: piecewise-constant Gaussian noise held over 10 ms intervals on
the active load and irradiance channels, optional Gaussian measurement
noise on the feedback path.

All randomness comes from one seed; identical seeds give bitwise-identical
trajectories.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .ndae import DaeSystem, LoadMults, OperatingPoint
from .netgrid import NetworkEvent, apply_network_event


class SimulationError(RuntimeError):
    """Raised when the integrator cannot continue for numerical reasons."""


@dataclass(frozen=True)
class ScenarioEvent:
    """One timed event: load step, irradiance step, fault, or restore."""

    t: float
    kind: str                      # 'load-step' | 'irradiance-step' | 'fault' | 'restore'
    delta: float = 0.0             # Delta_d or Delta_I
    branch: tuple[int, int] | None = None
    alpha: float = 0.5
    y_fault: float = 1e4
    t_clear_near: float = 0.05     # offsets from t
    t_clear_remote: float = 0.2

    def __post_init__(self):
        if self.kind not in ("load-step", "irradiance-step", "fault", "restore"):
            raise SimulationError(f"unknown scenario event kind {self.kind!r}")


@dataclass
class Scenario:
    """Event list plus noise model, horizon and integrator settings."""

    events: list = field(default_factory=list)
    horizon: float = 10.0
    dt: float = 1e-4
    dt_min: float = 1e-7
    dt_max: float = 1e-4
    seed: int = 0
    noise_interval: float = 0.01
    measurement_noise_var: float = 0.0
    load_noise: bool = True        # q_d(t) with variance 0.01 |Delta_d|
    irradiance_noise: bool = True  # q_I(t) with variance 0.01 |Delta_I|

    def __post_init__(self):
        for ev in self.events:
            if not 0.0 <= ev.t <= self.horizon:
                raise SimulationError(f"event at t={ev.t} outside horizon")
        if self.measurement_noise_var < 0:
            raise SimulationError("negative measurement noise variance")


@dataclass
class Trajectory:
    """Recorded state/input/disturbance series plus solver statistics."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    l2_z1: float = 0.0
    l2_w: float = 0.0
    newton_iters: int = 0
    step_rejections: int = 0
    max_alg_residual: float = 0.0
    diverged: bool = False
    divergence_reason: str = ""
    divergence_time: float = math.nan
    label: str = ""


@dataclass
class Metrics:
    """Stability and frequency-quality figures extracted from a trajectory."""

    nadir: float
    max_rocof: float
    settling_time: float
    gen_slip_max: float
    inv_slip_max: float
    l2_gain_ratio: float | None
    stable: bool
    peak_speed_dev: float
    osc_energy: float
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        d = {k: getattr(self, k) for k in
             ("nadir", "max_rocof", "settling_time", "gen_slip_max",
              "inv_slip_max", "l2_gain_ratio", "stable", "peak_speed_dev",
              "osc_energy")}
        d.update(self.detail)
        return d


def closed_loop_input(K, u_ref, x, x_ref):
    """Affine feedback law u = u_ref + K (x - x_ref); K may be None."""
    if K is None:
        return np.array(u_ref, copy=True)
    return u_ref + K @ (x - x_ref)


# --- scenario schedule ----------------------------------------------------------

class _Schedule:
    """Piecewise-constant (w, mults, Y, meas-noise) over time segments."""

    def __init__(self, sys: DaeSystem, point: OperatingPoint, sc: Scenario):
        self.sys = sys
        self.sc = sc
        R = len(sys.pvs)
        nP = sys.n_w - R
        rng = np.random.default_rng(sc.seed)
        n_int = int(math.ceil(sc.horizon / sc.noise_interval)) + 2
        self.noise_d = rng.standard_normal(n_int)
        self.noise_i = rng.standard_normal((n_int, R))
        if sc.measurement_noise_var > 0:
            self.noise_m = rng.standard_normal((n_int, sys.n)) * math.sqrt(
                sc.measurement_noise_var)
        else:
            self.noise_m = None

        self.load_events = sorted([e for e in sc.events if e.kind == "load-step"],
                                  key=lambda e: e.t)
        self.irr_events = sorted([e for e in sc.events
                                  if e.kind == "irradiance-step"], key=lambda e: e.t)
        self.w0 = point.w.copy()
        self.R, self.nP = R, nP
        self.p0 = point.w[R:].copy()
        self.p_share = self.p0 / max(float(np.sum(self.p0)), 1e-12)

        # admittance timeline from fault/restore events
        self.y_times = [0.0]
        self.y_mats = [sys.Y]
        for ev in sorted(sc.events, key=lambda e: e.t):
            if ev.kind == "fault":
                base = self.y_mats[0]
                br = ev.branch
                f = apply_network_event(base, sys.case.buses, sys.case.branches,
                                        NetworkEvent("fault", br, ev.alpha, ev.y_fault))
                nc = apply_network_event(base, sys.case.buses, sys.case.branches,
                                         NetworkEvent("near-clear", br, ev.alpha,
                                                      ev.y_fault))
                rc = apply_network_event(base, sys.case.buses, sys.case.branches,
                                         NetworkEvent("remote-clear", br, ev.alpha))
                self.y_times += [ev.t, ev.t + ev.t_clear_near,
                                 ev.t + ev.t_clear_remote]
                self.y_mats += [f, nc, rc]
            elif ev.kind == "restore":
                self.y_times.append(ev.t)
                self.y_mats.append(sys.Y)

    def boundaries(self):
        """All times where the right-hand side changes discontinuously."""
        b = set(self.y_times)
        for ev in self.load_events + self.irr_events:
            b.add(ev.t)
        t = 0.0
        while t < self.sc.horizon:
            b.add(round(t, 9))
            t += self.sc.noise_interval
        b.add(self.sc.horizon)
        return sorted(v for v in b if 0.0 <= v <= self.sc.horizon)

    def at(self, t):
        """(w, mults, Y) active on the segment starting at time t."""
        sc = self.sc
        k = min(int(t / sc.noise_interval), len(self.noise_d) - 1)
        delta_d = 0.0
        for ev in self.load_events:
            if t >= ev.t - 1e-12:
                delta_d = ev.delta
        delta_i = 0.0
        for ev in self.irr_events:
            if t >= ev.t - 1e-12:
                delta_i = ev.delta
        w = self.w0.copy()
        factor = 1.0 + delta_d
        if delta_d != 0.0:
            q_d = 0.0
            if sc.load_noise:
                q_d = self.noise_d[k] * math.sqrt(0.01 * abs(delta_d))
            w[self.R:] = factor * self.p0 + q_d * self.p_share
        if delta_i != 0.0:
            q_i = np.zeros(self.R)
            if sc.irradiance_noise:
                q_i = self.noise_i[k] * math.sqrt(0.01 * abs(delta_i))
            w[:self.R] = (1.0 - delta_i) + q_i
        mults = LoadMults(q=factor, z=factor, tm=factor)
        Y = self.y_mats[0]
        for tt, Ym in zip(self.y_times, self.y_mats):
            if t >= tt - 1e-12:
                Y = Ym
        return w, mults, Y

    def meas_noise(self, t):
        if self.noise_m is None:
            return None
        k = min(int(t / self.sc.noise_interval), len(self.noise_m) - 1)
        return self.noise_m[k]


# --- guards ----------------------------------------------------------------------

def _divergence_reason(sys: DaeSystem, x):
    if not np.all(np.isfinite(x)):
        return "non-finite state"
    if float(np.max(np.abs(x))) > 1e3:
        return "state magnitude above 1e3 pu"
    angles = [x[sl.start] for sl in sys.index.gen]
    angles += [x[sl.start + 5] for sl in sys.index.pv]
    if angles and (max(angles) - min(angles)) > 2.0 * math.pi:
        return "machine angle spread above 2 pi"
    for sl in sys.index.pv:
        if x[sl.start] <= 0.0:
            return "DC-link energy depleted"
    return None


# --- integrator --------------------------------------------------------------------

def integrate(sys: DaeSystem, point: OperatingPoint, gain, scenario: Scenario,
              weights=None, record_every: int = 10,
              newton_tol: float = 1e-9, newton_max: int = 12,
              label: str = "") -> Trajectory:
    """Simulate the (optionally closed-loop) NDAE over a disturbance scenario.

    ``gain`` is a ControllerGain or None (conventional control only).  When
    ``weights`` is given and a gain is active, the running integrals of
    ``z1' z1`` and ``w~' w~`` are accumulated at full step resolution for
    the L2-gain diagnostics, with the nonlinearity channel reconstructed by
    least squares through ``B_w``.
    """
    sched = _Schedule(sys, point, scenario)
    K = gain.K if gain is not None else None
    u_ref = point.u_ref
    x_ref = point.x
    n, n_d = sys.n, sys.n_d

    track = weights is not None and K is not None
    if track:
        Bw_pinv = np.linalg.pinv(sys.B_w)
        Cz, Dz, Dwz = weights.C, weights.D, weights.D_w

    bounds = sched.boundaries()
    x = point.x.copy()
    t = 0.0
    dt = min(scenario.dt, scenario.dt_max)

    rec_t, rec_x, rec_u, rec_w = [], [], [], []
    stats = dict(newton=0, rejections=0, max_alg=0.0)
    l2_z1 = l2_w = 0.0
    diverged = False
    div_reason, div_time = "", math.nan

    seg_idx = 0
    jac_lu = None
    jac_dt = -1.0
    J_cur = None

    def u_of(x_now, t_now):
        eta = sched.meas_noise(t_now)
        if K is None:
            return np.array(u_ref, copy=True)
        x_meas = x_now if eta is None else x_now + eta
        return u_ref + K @ (x_meas - x_ref)

    def residual_at(x_now, t_now, w, mults, Y):
        return sys.residual(x_now, u_of(x_now, t_now), w, ynet=Y, mults=mults)

    def refresh_jacobian(dt_now, w, mults, Y, x_lin, new_J=False):
        # modified Newton matrix: rows [I - dt/2 J_d ; J_a], J = dr/dx + B K
        nonlocal J_cur
        if new_J or J_cur is None:
            J = _fd_state_jacobian(sys, x_lin, u_of(x_lin, t), w, mults, Y)
            if K is not None:
                J = J + sys.B @ K
            J_cur = J
        M = np.empty((n, n))
        M[:n_d] = -0.5 * dt_now * J_cur[:n_d]
        M[:n_d, :n_d] += np.eye(n_d)
        M[n_d:] = J_cur[n_d:]
        return lu_factor(M, check_finite=False), J_cur

    def consistent_reinit(x_now, t_now, w, mults, Y):
        xa = x_now.copy()
        for _ in range(20):
            r = residual_at(xa, t_now, w, mults, Y)
            ra = r[n_d:]
            if float(np.max(np.abs(ra))) < newton_tol:
                return xa
            J = _fd_state_jacobian(sys, xa, u_of(xa, t_now), w, mults, Y)
            if K is not None:
                J = J + sys.B @ K
            dxa = np.linalg.solve(J[n_d:, n_d:], -ra)
            xa[n_d:] += dxa
        raise SimulationError("consistent reinitialization failed")

    def perf_terms(x_now, u_now, w_now, r_now):
        dx = x_now - x_ref
        du = u_now - u_ref
        dw = w_now - point.w
        df = r_now - sys.A @ dx - sys.B @ du - sys.B_w @ dw
        w_f = Bw_pinv @ df
        z1 = Cz @ dx + Dz @ du + Dwz @ dw + sys.B_w @ w_f
        return float(z1 @ z1), float(dw @ dw + w_f @ w_f)

    w, mults, Y = sched.at(0.0)
    # consistency at start (events at t=0 change the algebra immediately)
    r0 = residual_at(x, 0.0, w, mults, Y)
    if float(np.max(np.abs(r0[n_d:]))) > newton_tol:
        x = consistent_reinit(x, 0.0, w, mults, Y)
        r0 = residual_at(x, 0.0, w, mults, Y)
    u_now = u_of(x, 0.0)
    rec_t.append(0.0); rec_x.append(x.copy()); rec_u.append(u_now)
    rec_w.append(w.copy())
    if track:
        z_prev, wn_prev = perf_terms(x, u_now, w, r0)
    step_count = 0
    easy_streak = 0

    while t < scenario.horizon - 1e-12 and not diverged:
        while seg_idx + 1 < len(bounds) and bounds[seg_idx + 1] <= t + 1e-12:
            seg_idx += 1
        t_next_bound = bounds[seg_idx + 1] if seg_idx + 1 < len(bounds) \
            else scenario.horizon
        new_seg = abs(t - bounds[seg_idx]) < 1e-12 and step_count > 0
        if new_seg or step_count == 0:
            Y_prev = Y if step_count else None
            w, mults, Y = sched.at(t)
            if Y_prev is not None and Y is not Y_prev:
                J_cur = None  # network rewrite: the stale Jacobian is useless
            r_here = residual_at(x, t, w, mults, Y)
            if float(np.max(np.abs(r_here[n_d:]))) > 10 * newton_tol:
                try:
                    x = consistent_reinit(x, t, w, mults, Y)
                except SimulationError:
                    reason = _divergence_reason(sys, x) or "reinitialization failure"
                    diverged, div_reason, div_time = True, reason, t
                    break
            jac_lu = None

        h = min(dt, t_next_bound - t)
        if h < scenario.dt_min:
            h = t_next_bound - t
        if jac_lu is None or abs(h - jac_dt) > 1e-15:
            jac_lu, _ = refresh_jacobian(h, w, mults, Y, x)
            jac_dt = h

        r_k = residual_at(x, t, w, mults, Y)
        rhs_d = x[:n_d] + 0.5 * h * r_k[:n_d]
        xn = x + h * np.concatenate([r_k[:n_d], np.zeros(sys.n_a)])  # predictor
        converged = False
        for it in range(newton_max):
            r_n = residual_at(xn, t + h, w, mults, Y)
            F = np.empty(n)
            F[:n_d] = xn[:n_d] - rhs_d - 0.5 * h * r_n[:n_d]
            F[n_d:] = r_n[n_d:]
            fmax = float(np.max(np.abs(F)))
            stats["newton"] += 1
            if fmax < newton_tol:
                converged = True
                alg = float(np.max(np.abs(r_n[n_d:])))
                stats["max_alg"] = max(stats["max_alg"], alg)
                break
            if not np.isfinite(fmax):
                break
            dxn = lu_solve(jac_lu, F, check_finite=False)
            xn = xn - dxn
            if it == newton_max // 2:
                jac_lu, _ = refresh_jacobian(h, w, mults, Y, xn, new_J=True)
                jac_dt = h

        if not converged:
            stats["rejections"] += 1
            if dt <= scenario.dt_min * (1 + 1e-9):
                reason = _divergence_reason(sys, xn) \
                    or _divergence_reason(sys, x) or "newton failure at minimum step"
                diverged, div_reason, div_time = True, reason, t
                break
            dt = max(scenario.dt_min, 0.5 * dt)
            jac_lu = None
            easy_streak = 0
            continue

        t = t + h
        x = xn
        step_count += 1
        if it <= 3:
            easy_streak += 1
            if easy_streak >= 8 and dt < scenario.dt_max:
                dt = min(scenario.dt_max, 2.0 * dt)
                easy_streak = 0
        else:
            easy_streak = 0

        if track:
            u_now = u_of(x, t)
            z_now, wn_now = perf_terms(x, u_now, w, r_n)
            l2_z1 += 0.5 * h * (z_prev + z_now)
            l2_w += 0.5 * h * (wn_prev + wn_now)
            z_prev, wn_prev = z_now, wn_now

        reason = _divergence_reason(sys, x)
        if reason is not None:
            diverged, div_reason, div_time = True, reason, t

        if step_count % record_every == 0 or diverged \
                or abs(t - t_next_bound) < 1e-12:
            rec_t.append(t)
            rec_x.append(x.copy())
            rec_u.append(u_of(x, t))
            rec_w.append(w.copy())

    if rec_t[-1] < t:
        rec_t.append(t); rec_x.append(x.copy())
        rec_u.append(u_of(x, t)); rec_w.append(w.copy())
    return Trajectory(
        t=np.asarray(rec_t), x=np.asarray(rec_x), u=np.asarray(rec_u),
        w=np.asarray(rec_w), l2_z1=l2_z1, l2_w=l2_w,
        newton_iters=stats["newton"], step_rejections=stats["rejections"],
        max_alg_residual=stats["max_alg"], diverged=diverged,
        divergence_reason=div_reason, divergence_time=div_time, label=label)


def _fd_state_jacobian(sys, x0, u0, w, mults, Y):
    n = sys.n
    J = np.empty((n, n))
    r0 = sys.residual(x0, u0, w, ynet=Y, mults=mults)
    for i in range(n):
        h = max(1e-7, 1e-7 * abs(x0[i]))
        xp = x0.copy()
        xp[i] += h
        J[:, i] = (sys.residual(xp, u0, w, ynet=Y, mults=mults) - r0) / h
    return J


# --- metrics -----------------------------------------------------------------------

def compute_metrics(traj: Trajectory, sys: DaeSystem,
                    rocof_window: float = 0.1,
                    settle_band: float = 5e-4,
                    window_start: float = 0.0,
                    window_len: float = 5.0) -> Metrics:
    """Frequency nadir, RoCoF, slips, settling time and L2 ratio.

    Peak deviation and oscillation energy are taken over the generator
    speeds on ``[window_start, window_start + window_len]`` (the post-event
    assessment window); nadir and RoCoF cover the whole trajectory.
    """
    if traj.t.size == 0:
        raise SimulationError("empty trajectory")
    t = traj.t
    X = traj.x
    U = traj.u
    G = len(sys.gens)
    R = len(sys.pvs)

    speeds = []
    inertias = []
    for k, sl in enumerate(sys.index.gen):
        speeds.append(X[:, sl.start + 1])
        inertias.append(sys.gens[k].params.H)
    for k, i in enumerate(sys.index.motor):
        speeds.append(X[:, i])
        inertias.append(sys.motors[k].params.H_m * sys.motors[k].params.scale)
    speeds = np.stack(speeds, axis=1)
    inertias = np.asarray(inertias)
    w_e = speeds @ inertias / np.sum(inertias)
    gen_speeds = speeds[:, :G] if G else speeds

    nadir = float(np.min(gen_speeds))

    # max |d omega/dt| over a sliding window
    max_rocof = 0.0
    for col in range(speeds.shape[1]):
        om = speeds[:, col]
        j = np.searchsorted(t, t + rocof_window)
        valid = j < len(t)
        if np.any(valid):
            i_idx = np.flatnonzero(valid)
            dw = np.abs(om[j[valid]] - om[i_idx])
            dt_w = t[j[valid]] - t[i_idx]
            max_rocof = max(max_rocof, float(np.max(dw / np.maximum(dt_w, 1e-12))))

    # inverter frequency from the droop relation
    inv_slip_max = 0.0
    for k, sl in enumerate(sys.index.pv):
        kp = sys.pvs[k].params.k_p
        P_f = X[:, sl.start + 6]
        P_star = U[:, 2 * G + R + k]
        om_inv = 1.0 - kp * (P_f - P_star)
        slip = (w_e - om_inv) / np.maximum(w_e, 1e-9)
        inv_slip_max = max(inv_slip_max, float(np.max(np.abs(slip))))
    gen_slip_max = 0.0
    for col in range(G):
        slip = (w_e - speeds[:, col]) / np.maximum(w_e, 1e-9)
        gen_slip_max = max(gen_slip_max, float(np.max(np.abs(slip))))

    # settling: last time any machine speed leaves +-band around its final value
    final = speeds[-1]
    dev = np.max(np.abs(speeds - final[None, :]), axis=1)
    outside = np.flatnonzero(dev > settle_band)
    settling = float(t[outside[-1]]) if outside.size else 0.0

    mask = (t >= window_start) & (t <= window_start + window_len)
    if not np.any(mask):
        mask = slice(None)
    peak_dev = float(np.max(np.abs(gen_speeds[mask] - 1.0)))
    osc = 0.0
    for col in range(gen_speeds.shape[1]):
        osc += float(np.trapz((gen_speeds[mask, col] - 1.0) ** 2, t[mask]))
    ratio = (traj.l2_z1 / traj.l2_w) if traj.l2_w > 0 else None

    return Metrics(
        nadir=nadir, max_rocof=max_rocof, settling_time=settling,
        gen_slip_max=gen_slip_max, inv_slip_max=inv_slip_max,
        l2_gain_ratio=ratio, stable=not traj.diverged,
        peak_speed_dev=peak_dev, osc_energy=osc,
        detail={"divergence_reason": traj.divergence_reason,
                "divergence_time": traj.divergence_time,
                "omega_e_final": float(w_e[-1])})


def num_workers() -> int:
    env = os.environ.get("GRIDWAC_NUM_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def run_scenario(sys: DaeSystem, point: OperatingPoint, gains,
                 scenario: Scenario, weights=None, record_every: int = 10):
    """Run the scenario under conventional control plus each gain.

    Returns ``{label: (Trajectory, Metrics)}``; every run sees the same
    noise realization.  ``gains`` entries must match the system's case hash.
    """
    jobs = [("conventional", None)]
    for g in gains:
        if g.case_hash != sys.case.content_hash():
            raise SimulationError(
                f"gain {g.method} was synthesized for another case")
        jobs.append((g.method, g))

    t_event = min((e.t for e in scenario.events), default=0.0)

    def one(job):
        label, gain = job
        traj = integrate(sys, point, gain, scenario, weights=weights,
                         record_every=record_every, label=label)
        return label, (traj, compute_metrics(traj, sys, window_start=t_event))

    nw = num_workers()
    if nw > 1 and len(jobs) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=nw) as ex:
            results = list(ex.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    return dict(results)
