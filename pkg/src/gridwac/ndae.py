"""Global nonlinear differential-algebraic model.

Assembles the devices and the network of a :class:`~gridwac.case.GridCase`
into ``E x' = A x + f(x, u, w) + B u + B_w w`` with

* global state ordering ``[x_G (9 per gen) | x_R (12 per plant) | x_m (1 per
  motor) | I_Re | I_Im | V_Re | V_Im]``,
* input ordering ``[V_g* (G) | P_v* (G) | V_s* (R) | P_s* (R)]``,
* disturbance ordering ``[irradiance (R, pu of 1000 W/m^2) | P_demand (one
  per constant-power load)]``.

``A``, ``B`` and ``B_w`` are the Jacobians at the calibrated nominal
equilibrium and ``f`` is the residual minus its linear part, so the split
reproduces the full model exactly.  Algebraic rows hold the network current
balance ``I - Y V = 0`` (real/imaginary) followed by one device
current-injection relation per bus.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import devices as dv
from . import netgrid as ng
from .case import GridCase

GEN_NX, PV_NX, MOTOR_NX = 9, 12, 1


class ModelError(RuntimeError):
    """Raised when assembly or equilibrium solving fails."""


@dataclass
class OperatingPoint:
    """Equilibrium of the NDAE: dynamic/algebraic states, inputs, disturbance."""

    x_d: np.ndarray
    x_a: np.ndarray
    u_ref: np.ndarray
    w: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.x_d, self.x_a])


@dataclass
class LoadMults:
    """Deterministic scenario multipliers applied outside the w channels."""

    q: float = 1.0     # constant-power reactive demand
    z: float = 1.0     # impedance-load admittance
    tm: float = 1.0    # motor mechanical torque


@dataclass
class IndexMaps:
    """Positions of device states / algebraic variables in the global vector."""

    gen: list[slice]
    pv: list[slice]
    motor: list[int]
    i_re: slice
    i_im: slice
    v_re: slice
    v_im: slice
    state_names: list[str]
    input_names: list[str]
    dist_names: list[str]


@dataclass
class DaeSystem:
    """Assembled NDAE with its nominal linearization and index maps."""

    case: GridCase
    n_d: int
    n_a: int
    n_u: int
    n_w: int
    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    B_w: np.ndarray
    Y: np.ndarray
    index: IndexMaps
    point: OperatingPoint
    gens: list
    pvs: list
    motors: list
    loads: list
    cond_aa: float = math.nan

    @property
    def n(self) -> int:
        return self.n_d + self.n_a

    # -- residual -------------------------------------------------------------

    def residual(self, x, u, w, ynet=None, mults=None):
        """Full model residual r with E x' = r; algebraic rows must vanish.

        ``ynet`` overrides the nominal admittance matrix (network events) and
        ``mults`` carries the deterministic scenario load multipliers.
        """
        case = self.case
        idx = self.index
        Y = self.Y if ynet is None else ynet
        m = mults or _UNIT_MULTS
        nbus = len(case.buses)
        bus_of = self._bus_pos
        r = np.zeros(self.n)

        vre = x[idx.v_re]
        vim = x[idx.v_im]
        ire = x[idx.i_re]
        iim = x[idx.i_im]
        V = vre + 1j * vim
        I = ire + 1j * iim

        inj = [0j] * nbus  # device current injections per bus position
        G = len(self.gens)
        R = len(self.pvs)

        for k, gen in enumerate(self.gens):
            sl = idx.gen[k]
            b = bus_of[gen.bus]
            d, I_ph = dv.gen_derivatives(gen, x[sl], complex(V[b]),
                                         u[k], u[G + k], case.omega_b)
            r[sl] = d
            inj[b] += I_ph
        for k, pv in enumerate(self.pvs):
            sl = idx.pv[k]
            b = bus_of[pv.bus]
            d, I_ph = dv.pv_derivatives(pv, x[sl], complex(V[b]),
                                        u[2 * G + k], u[2 * G + R + k],
                                        w[k], case.omega_b)
            r[sl] = d
            inj[b] += I_ph
        for k, mot in enumerate(self.motors):
            i = idx.motor[k]
            b = bus_of[mot.bus]
            d, I_ph = dv.motor_derivative(mot, (x[i],), complex(V[b]), m.tm)
            r[i] = d[0]
            inj[b] += I_ph

        # network rows: I - Y V = 0
        mis = I - Y @ V
        base = self.n_d
        r[base:base + nbus] = mis.real
        r[base + nbus:base + 2 * nbus] = mis.imag

        # device rows: per-bus injection balance / static load relations
        dev = np.asarray(inj, dtype=complex)
        own = self._paper_form_load
        for k, ld in enumerate(self.loads):
            b = bus_of[ld.bus]
            if own[k]:
                continue
            if ld.kind == "power":
                dev[b] += dv.static_load_injection(ld, complex(V[b]),
                                                   P=w[R + self._pload_pos[k]],
                                                   Q=ld.Q * m.q)
            else:
                dev[b] += dv.static_load_injection(ld, complex(V[b]), z_mult=m.z)
        res_dev = I - dev
        for k, ld in enumerate(self.loads):
            if not own[k]:
                continue
            b = bus_of[ld.bus]
            if ld.kind == "power":
                res_dev[b] = dv.static_load_residual(
                    ld, complex(V[b]), complex(I[b]),
                    P=w[R + self._pload_pos[k]], Q=ld.Q * m.q)
            else:
                res_dev[b] = dv.static_load_residual(ld, complex(V[b]),
                                                     complex(I[b]), z_mult=m.z)
        r[base + 2 * nbus:base + 3 * nbus] = res_dev.real
        r[base + 3 * nbus:base + 4 * nbus] = res_dev.imag
        return r

    def f(self, x, u, w):
        """Nonlinear remainder: residual minus the linear (A, B, B_w) part."""
        return (self.residual(x, u, w) - self.A @ x - self.B @ u
                - self.B_w @ w)

    # -- assembly-time helpers --------------------------------------------------

    def _prepare(self):
        case = self.case
        self._bus_pos = case.bus_index()
        unit_buses = {g.bus for g in self.gens} | {p.bus for p in self.pvs} \
            | {mo.bus for mo in self.motors}
        counts = {}
        for ld in self.loads:
            counts[ld.bus] = counts.get(ld.bus, 0) + 1
        # a load bus keeps the textbook load relation when the load is alone
        self._paper_form_load = [
            counts[ld.bus] == 1 and ld.bus not in unit_buses for ld in self.loads
        ]
        pos = {}
        kp = 0
        for k, ld in enumerate(self.loads):
            if ld.kind == "power":
                pos[k] = kp
                kp += 1
        self._pload_pos = pos


_UNIT_MULTS = LoadMults()


def _build_index(case: GridCase) -> IndexMaps:
    G = len(case.generators)
    R = len(case.pv_plants)
    M = len(case.motors)
    nbus = len(case.buses)
    n_d = GEN_NX * G + PV_NX * R + MOTOR_NX * M
    gsl = [slice(GEN_NX * k, GEN_NX * (k + 1)) for k in range(G)]
    psl = [slice(GEN_NX * G + PV_NX * k, GEN_NX * G + PV_NX * (k + 1))
           for k in range(R)]
    mpos = [GEN_NX * G + PV_NX * R + k for k in range(M)]
    names = []
    for k, g in enumerate(case.generators):
        names += [f"gen{k + 1}.{s}" for s in dv.GEN_STATES]
    for k, p in enumerate(case.pv_plants):
        names += [f"pv{k + 1}.{s}" for s in dv.PV_STATES]
    for k, mo in enumerate(case.motors):
        names += [f"motor{mo.bus}.omega_m"]
    for tag in ("I_re", "I_im", "V_re", "V_im"):
        names += [f"bus{b.id}.{tag}" for b in case.buses]
    input_names = ([f"gen{k + 1}.V_ref" for k in range(G)]
                   + [f"gen{k + 1}.Pv_ref" for k in range(G)]
                   + [f"pv{k + 1}.V_ref" for k in range(R)]
                   + [f"pv{k + 1}.P_ref" for k in range(R)])
    dist_names = [f"pv{k + 1}.irradiance" for k in range(R)]
    dist_names += [f"load{ld.bus}.P" for ld in case.loads if ld.kind == "power"]
    return IndexMaps(
        gen=gsl, pv=psl, motor=mpos,
        i_re=slice(n_d, n_d + nbus),
        i_im=slice(n_d + nbus, n_d + 2 * nbus),
        v_re=slice(n_d + 2 * nbus, n_d + 3 * nbus),
        v_im=slice(n_d + 3 * nbus, n_d + 4 * nbus),
        state_names=names, input_names=input_names, dist_names=dist_names)


def _check_connected(case: GridCase):
    adj = {b.id: set() for b in case.buses}
    for br in case.branches:
        if br.status == "in":
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
    seen = {case.buses[0].id}
    stack = [case.buses[0].id]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    missing = [b.id for b in case.buses if b.id not in seen]
    if missing:
        raise ModelError(f"unconnected buses: {missing}")


def assemble_system(case: GridCase, pf_tol=1e-8) -> DaeSystem:
    """Build the NDAE: power flow, equilibrium calibration, linearization."""
    _check_connected(case)
    G = len(case.generators)
    R = len(case.pv_plants)
    M = len(case.motors)
    nbus = len(case.buses)
    n_d = GEN_NX * G + PV_NX * R + MOTOR_NX * M
    n_a = 4 * nbus
    n = n_d + n_a
    n_u = 2 * G + 2 * R
    n_plo = sum(1 for ld in case.loads if ld.kind == "power")
    n_w = R + n_plo

    idx = _build_index(case)
    Y = ng.build_admittance(case.buses, case.branches)
    E = np.zeros((n, n))
    E[:n_d, :n_d] = np.eye(n_d)

    sys = DaeSystem(case=case, n_d=n_d, n_a=n_a, n_u=n_u, n_w=n_w, E=E,
                    A=np.zeros((n, n)), B=np.zeros((n, n_u)),
                    B_w=np.zeros((n, n_w)), Y=Y, index=idx,
                    point=OperatingPoint(np.zeros(n_d), np.zeros(n_a),
                                         np.zeros(n_u), np.zeros(n_w)),
                    gens=[g.block for g in case.generators],
                    pvs=[p.block for p in case.pv_plants],
                    motors=list(case.motors), loads=list(case.loads))
    sys._prepare()

    pf = _run_power_flow(case, Y, pf_tol)
    _calibrate_equilibrium(sys, pf)

    A, B, B_w = linearize(sys, sys.point)
    sys.A, sys.B, sys.B_w = A, B, B_w
    Aaa = A[n_d:, n_d:]
    sys.cond_aa = float(np.linalg.cond(Aaa))
    if not np.isfinite(sys.cond_aa) or sys.cond_aa > 1e13:
        raise ModelError(f"algebraic block near singular (cond {sys.cond_aa:.2e})")
    return sys


def _run_power_flow(case: GridCase, Y, tol):
    bi = case.bus_index()
    nbus = len(case.buses)
    types = ["pq"] * nbus
    setpoints = {}
    demand = np.zeros(nbus, dtype=complex)
    types[bi[case.slack_bus]] = "slack"
    for g in case.generators:
        b = bi[g.block.bus]
        if b == bi[case.slack_bus]:
            setpoints[b] = (None, g.V_set)
        else:
            types[b] = "pv"
            setpoints[b] = (g.P_set, g.V_set)
    for p in case.pv_plants:
        b = bi[p.block.bus]
        types[b] = "pv"
        setpoints[b] = (p.P_set, p.V_set)
    Ypf = Y.copy()
    for ld in case.loads:
        if ld.kind == "power":
            demand[bi[ld.bus]] += complex(ld.P, ld.Q)
        else:
            Ypf[bi[ld.bus], bi[ld.bus]] += 1.0 / ld.Z
    from .case import _motor_pq, motor_balance_slip
    for mo in case.motors:
        s0 = motor_balance_slip(mo.params)
        pm, qm = _motor_pq(mo, s0)
        demand[bi[mo.bus]] += complex(pm, qm)
    pf = ng.solve_power_flow(Ypf, types, demand, setpoints, tol=tol)
    if not pf.converged:
        raise ModelError(f"power flow failed (mismatch {pf.mismatch:.2e})")
    return pf


def _calibrate_equilibrium(sys: DaeSystem, pf):
    """Square Newton solve of the steady state with free inputs and free PV
    array ratings; unit-bus voltage phasors are pinned to the power flow."""
    case = sys.case
    bi = sys._bus_pos
    n, n_u = sys.n, sys.n_u
    R = len(sys.pvs)
    G = len(sys.gens)
    idx = sys.index

    x0, u0, c0 = _seed_from_power_flow(sys, pf)
    unit_pos = [bi[g.bus] for g in sys.gens] + [bi[p.bus] for p in sys.pvs]
    v_pin = np.concatenate([pf.V[unit_pos].real, pf.V[unit_pos].imag])

    def extended(xi):
        x = xi[:n]
        u = xi[n:n + n_u]
        c = xi[n + n_u:]
        pvs = [replace_pv(p, c[k]) for k, p in enumerate(sys.pvs)]
        old = sys.pvs
        sys.pvs = pvs
        try:
            r = sys.residual(x, u, sys.point.w)
        finally:
            sys.pvs = old
        vre = x[idx.v_re][unit_pos]
        vim = x[idx.v_im][unit_pos]
        pins = np.concatenate([vre, vim]) - v_pin
        edc = np.array([x[idx.pv[k]][0] - 1.0 for k in range(R)])
        return np.concatenate([r, pins, edc])

    xi = np.concatenate([x0, u0, c0])
    xi, ok = _newton(extended, xi, tol=1e-11, max_iter=60)
    res = extended(xi)
    if not ok and np.max(np.abs(res)) > 1e-9:
        raise ModelError(
            f"equilibrium calibration failed (residual {np.max(np.abs(res)):.2e})")

    x = xi[:n]
    u = xi[n:n + n_u]
    c = xi[n + n_u:]
    sys.pvs = [replace_pv(p, c[k]) for k, p in enumerate(sys.pvs)]
    sys.point = OperatingPoint(x_d=x[:sys.n_d].copy(), x_a=x[sys.n_d:].copy(),
                               u_ref=u.copy(), w=sys.point.w.copy())


def replace_pv(block: dv.PvBlock, p_array: float) -> dv.PvBlock:
    return dv.PvBlock(bus=block.bus, params=replace(block.params, p_array=p_array))


def find_equilibrium(sys: DaeSystem, w, seed_point: OperatingPoint | None = None,
                     tol=1e-9) -> OperatingPoint:
    """Steady state of the assembled system for disturbance level ``w``.

    Inputs are held at ``u_ref``; the Newton iteration is seeded from the
    nominal (or given) operating point and solved in least-squares form to
    absorb the rotational null direction.
    """
    pt = seed_point or sys.point
    u = pt.u_ref
    idx = sys.index
    slack = sys._bus_pos[sys.case.slack_bus]
    th_ref = math.atan2(pt.x_a[idx.v_im.start - sys.n_d + slack],
                        pt.x_a[idx.v_re.start - sys.n_d + slack])

    def fun(x):
        r = sys.residual(x, u, w)
        anchor = (math.atan2(x[idx.v_im][slack], x[idx.v_re][slack]) - th_ref)
        return np.concatenate([r, [anchor]])

    x, ok = _newton(fun, pt.x.copy(), tol=tol, max_iter=60, lstsq=True)
    res = sys.residual(x, u, w)
    if np.max(np.abs(res)) > 1e-8:
        raise ModelError(
            f"equilibrium solve failed (residual {np.max(np.abs(res)):.2e})")
    return OperatingPoint(x_d=x[:sys.n_d].copy(), x_a=x[sys.n_d:].copy(),
                          u_ref=u.copy(), w=np.asarray(w, dtype=float).copy())


def _newton(fun, x0, tol=1e-10, max_iter=50, lstsq=False):
    x = x0.copy()
    fx = fun(x)
    best = np.max(np.abs(fx))
    for _ in range(max_iter):
        if best <= tol:
            return x, True
        J = fd_jacobian(fun, x)
        if lstsq:
            dx = -np.linalg.lstsq(J, fx, rcond=None)[0]
        else:
            try:
                dx = -np.linalg.solve(J, fx)
            except np.linalg.LinAlgError:
                dx = -np.linalg.lstsq(J, fx, rcond=None)[0]
        step = 1.0
        for _ in range(30):
            xn = x + step * dx
            fn = fun(xn)
            fmax = np.max(np.abs(fn))
            if fmax < best or not np.isfinite(best):
                x, fx, best = xn, fn, fmax
                break
            step *= 0.5
        else:
            return x, best <= tol
    return x, best <= tol


def fd_jacobian(fun, x0, cols=None):
    """Central finite-difference Jacobian, step max(1e-6, 1e-6 |x_i|)."""
    f0 = np.asarray(fun(x0))
    m = f0.size
    nn = x0.size if cols is None else len(cols)
    J = np.zeros((m, nn))
    cols = range(x0.size) if cols is None else cols
    for out, i in enumerate(cols):
        h = max(1e-6, 1e-6 * abs(x0[i]))
        xp = x0.copy(); xp[i] += h
        xm = x0.copy(); xm[i] -= h
        J[:, out] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2 * h)
    if not np.all(np.isfinite(J)):
        raise ModelError("non-finite entries in finite-difference Jacobian")
    return J


def linearize(sys: DaeSystem, point: OperatingPoint):
    """Jacobians (A, B, B_w) of the residual at an operating point."""
    x0, u0, w0 = point.x, point.u_ref, point.w
    A = fd_jacobian(lambda x: sys.residual(x, u0, w0), x0)
    B = fd_jacobian(lambda u: sys.residual(x0, u, w0), u0)
    B_w = fd_jacobian(lambda w: sys.residual(x0, u0, w), w0)
    return A, B, B_w


# --- seeding -----------------------------------------------------------------

def _seed_from_power_flow(sys: DaeSystem, pf):
    case = sys.case
    bi = sys._bus_pos
    idx = sys.index
    n = sys.n
    G = len(sys.gens)
    R = len(sys.pvs)
    x = np.zeros(n)
    V = pf.V
    S = pf.S_inj

    # subtract the local static-load draw to get the unit's own injection
    inj = S.copy()
    for ld in sys.loads:
        b = bi[ld.bus]
        if ld.kind == "power":
            inj[b] += complex(ld.P, ld.Q)
        else:
            inj[b] += abs(V[b]) ** 2 / ld.Z.conjugate()

    u = np.zeros(sys.n_u)
    cpv = np.zeros(R)
    for k, gen in enumerate(sys.gens):
        b = bi[gen.bus]
        p = gen.params
        Sg = inj[b]
        Ig = (Sg / V[b]).conjugate()
        if p.convention == "as-printed":
            # steady flux + stator relations align V + jcI with the d axis
            c = p.x_q + p.xp_d - p.xp_q
            delta = cmath.phase(V[b] + complex(p.r_s, c) * Ig) + math.pi / 2
        else:
            delta = cmath.phase(V[b] + complex(p.r_s, p.x_q) * Ig)
        rot = cmath.exp(-1j * (delta - math.pi / 2))
        vdq = V[b] * rot
        idq = Ig * rot
        i_d, i_q = idq.real, idq.imag
        E_d = vdq.real - p.xp_q * i_q + p.r_s * i_d
        E_q = vdq.imag + p.xp_d * i_d + p.r_s * i_q
        if p.convention == "as-printed":
            E_fd = E_d + (p.xp_d - p.x_d) * i_q
            v_a = p.k_e + dv.saturation(p, E_fd) * E_fd
        else:
            E_fd = E_q + (p.x_d - p.xp_d) * i_d
            v_a = (p.k_e + dv.saturation(p, E_fd)) * E_fd
        r_f = (p.k_f / p.t_f) * E_fd
        T_e = E_d * i_d + E_q * i_q
        sl = idx.gen[k]
        x[sl] = [delta, 1.0, E_q, E_d, T_e, T_e, E_fd, r_f, v_a]
        u[k] = v_a / p.k_a + abs(V[b])      # V* seed: v_err = v_a / k_a
        u[G + k] = T_e

    for k, pv in enumerate(sys.pvs):
        b = bi[pv.bus]
        p = pv.params
        Sp = inj[b]
        Ig = (Sp / V[b]).conjugate()
        delta_c = cmath.phase(V[b]) + math.pi / 2
        rot = cmath.exp(-1j * (delta_c - math.pi / 2))
        vo = V[b] * rot
        ig = Ig * rot
        vcap = vo / (1 + 1j * p.r_c * p.B_c)
        icap = 1j * p.B_c * vcap
        i_f = ig + icap
        P_e = (vo * ig.conjugate()).real
        Q_e = (vo * ig.conjugate()).imag
        z_do = i_f.real / p.kappa_pv - ig.real - icap.real
        z_qo = i_f.imag / p.kappa_pv - ig.imag - icap.imag
        v_df = p.r_f * i_f.real + vo.real - p.X_f * i_f.imag
        v_qf = p.r_f * i_f.imag + vo.imag + p.X_f * i_f.real
        P_c = v_df * i_f.real + v_qf * i_f.imag
        sl = idx.pv[k]
        x[sl] = [1.0, i_f.real, i_f.imag, vcap.real, vcap.imag, delta_c,
                 P_e, Q_e, z_do, z_qo, p.r_f * i_f.real, p.r_f * i_f.imag]
        u[2 * G + k] = vo.real - p.k_d * ig.imag
        u[2 * G + R + k] = P_e
        cpv[k] = P_c

    from .case import motor_balance_slip
    for k, mo in enumerate(sys.motors):
        x[idx.motor[k]] = 1.0 - motor_balance_slip(mo.params)

    x[idx.v_re] = V.real
    x[idx.v_im] = V.imag
    Ibus = sys.Y @ V
    x[idx.i_re] = Ibus.real
    x[idx.i_im] = Ibus.imag

    w = np.zeros(sys.n_w)
    w[:R] = 1.0
    kp = 0
    for ld in sys.loads:
        if ld.kind == "power":
            w[R + kp] = ld.P
            kp += 1
    sys.point = OperatingPoint(x_d=x[:sys.n_d], x_a=x[sys.n_d:],
                               u_ref=u, w=w)
    return x, u, cpv


# --- Kron reduction and regularity --------------------------------------------

@dataclass
class ReducedSystem:
    """ODE equivalent over the dynamic states plus the reduction maps."""

    A_t: np.ndarray                 # A_dd - A_da A_aa^-1 A_ad
    B_t: np.ndarray                 # B_d - A_da A_aa^-1 B_a
    Bw_t: np.ndarray                # B_wd - A_da A_aa^-1 B_wa
    da_ainv: np.ndarray             # A_da A_aa^-1
    ainv_ad: np.ndarray             # A_aa^-1 A_ad
    ainv_Ba: np.ndarray             # A_aa^-1 B_a
    ainv_Bwa: np.ndarray            # A_aa^-1 B_wa
    cond_aa: float


def kron_reduce(A, B, B_w, n_d) -> ReducedSystem:
    """Eliminate the algebraic block by a Schur complement on A_aa."""
    A = np.asarray(A, dtype=float)
    Add = A[:n_d, :n_d]
    Ada = A[:n_d, n_d:]
    Aad = A[n_d:, :n_d]
    Aaa = A[n_d:, n_d:]
    cond = float(np.linalg.cond(Aaa)) if Aaa.size else 1.0
    if Aaa.size and (not np.isfinite(cond) or cond > 1e14):
        raise ModelError(f"A_aa singular in Kron reduction (cond {cond:.2e})")
    Bd, Ba = B[:n_d], B[n_d:]
    Bwd, Bwa = B_w[:n_d], B_w[n_d:]
    if Aaa.size:
        ainv_ad = np.linalg.solve(Aaa, Aad)
        ainv_Ba = np.linalg.solve(Aaa, Ba)
        ainv_Bwa = np.linalg.solve(Aaa, Bwa)
        da_ainv = np.linalg.solve(Aaa.T, Ada.T).T
    else:
        ainv_ad = np.zeros((0, n_d))
        ainv_Ba = np.zeros((0, B.shape[1]))
        ainv_Bwa = np.zeros((0, B_w.shape[1]))
        da_ainv = np.zeros((n_d, 0))
    return ReducedSystem(
        A_t=Add - Ada @ ainv_ad,
        B_t=Bd - Ada @ ainv_Ba,
        Bw_t=Bwd - Ada @ ainv_Bwa,
        da_ainv=da_ainv, ainv_ad=ainv_ad, ainv_Ba=ainv_Ba,
        ainv_Bwa=ainv_Bwa, cond_aa=cond)


def check_regularity(E, A, n_samples=20, seed=7):
    """Probabilistic regularity test: det(sE - A) sampled at random s.

    Returns ``(regular, witness)`` where the witness holds the sample point
    with the largest |det| (regular) or the list of degenerate samples.
    """
    E = np.asarray(E, dtype=float)
    A = np.asarray(A, dtype=float)
    rng = np.random.default_rng(seed)
    scale = max(1.0, np.linalg.norm(A, np.inf) / max(np.linalg.norm(E, np.inf), 1e-12))
    best = (-math.inf, None)
    for _ in range(n_samples):
        s = complex(rng.standard_normal(), rng.standard_normal()) * scale
        sign, logdet = np.linalg.slogdet(s * E - A)
        if sign != 0 and np.isfinite(logdet):
            if logdet > best[0]:
                best = (logdet, s)
    if best[1] is None:
        return False, {"samples": n_samples, "witness": None}
    return True, {"samples": n_samples, "witness": best[1], "logdet": best[0]}
