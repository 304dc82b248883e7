"""Per-device nonlinear dynamics.

Four device families:

* 9th-order synchronous generator with thermal/hydro turbine, governor and
  DC1-type excitation system (states: delta_g, omega_g, E_q, E_d, T_M, P_v,
  E_fd, r_f, v_a);
* 12th-order grid-forming PV plant: DC link, LCL filter, droop angle, power
  filters, and PI voltage/current regulators (states: E_dc, i_df, i_qf,
  v_dc, v_qc, delta_c, P_e_f, Q_e_f, z_do, z_qo, z_df, z_qf);
* single-state induction-motor load driven by the steady-state
  equivalent-circuit torque;
* static constant-power / constant-impedance load relations.

Per-device quantities live in a local dq frame attached to the device angle;
the frame transform to network phasors is ``ph = (d + 1j q) * exp(1j (delta -
pi/2))``.  Everything is per-unit on the system base; time in seconds;
speeds in pu of synchronous speed.

The flux equations of the generator are implemented in two conventions: the
``as-printed`` one (field voltage entering the d-axis equation, the default)
and the usual two-axis ``standard`` form; see ``docs/params_provenance.md``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace

GEN_STATES = ("delta", "omega", "E_q", "E_d", "T_M", "P_v", "E_fd", "r_f", "v_a")
PV_STATES = ("E_dc", "i_df", "i_qf", "v_dc", "v_qc", "delta_c",
             "P_e_f", "Q_e_f", "z_do", "z_qo", "z_df", "z_qf")
MOTOR_STATES = ("omega_m",)

_HALF_PI = math.pi / 2


class DeviceError(ValueError):
    """Raised for invalid device parameters or states."""


def _check_positive(name, **vals):
    for k, v in vals.items():
        if not v > 0:
            raise DeviceError(f"{name}: parameter {k} must be > 0 (got {v})")


# --- synchronous generator ---------------------------------------------------

@dataclass(frozen=True)
class GeneratorParams:
    """Machine, turbine/governor and exciter constants (pu / seconds)."""

    H: float = 6.4
    x_d: float = 0.8958
    x_q: float = 0.8645
    xp_d: float = 0.12
    xp_q: float = 0.12
    t_do: float = 6.0
    t_qo: float = 0.535
    r_s: float = 0.0
    turbine_kind: str = "thermal"   # 'thermal' or 'hydro'
    t_ch: float = 0.3
    t_w: float = 1.0
    t_v: float = 0.1
    R_d: float = 0.05
    t_fd: float = 0.314
    t_f: float = 0.35
    t_a: float = 0.2
    k_e: float = 1.0
    k_f: float = 0.063
    k_a: float = 20.0
    a_sat: float = 0.0039
    b_sat: float = 1.555
    convention: str = "as-printed"  # 'as-printed' or 'standard'

    def __post_init__(self):
        _check_positive("generator", H=self.H, t_do=self.t_do, t_qo=self.t_qo,
                        t_ch=self.t_ch, t_w=self.t_w, t_v=self.t_v,
                        t_fd=self.t_fd, t_f=self.t_f, t_a=self.t_a)
        if self.turbine_kind not in ("thermal", "hydro"):
            raise DeviceError(f"unknown turbine kind {self.turbine_kind!r}")
        if self.convention not in ("as-printed", "standard"):
            raise DeviceError(f"unknown flux convention {self.convention!r}")


@dataclass(frozen=True)
class GeneratorBlock:
    """A generator instance: parameters plus its bus id."""

    bus: int
    params: GeneratorParams = field(default_factory=GeneratorParams)


def saturation(params: GeneratorParams, E_fd: float) -> float:
    """Exciter saturation S_e = a * exp(b * E_fd)."""
    return params.a_sat * math.exp(params.b_sat * E_fd)


def gen_stator_currents(params, delta, E_q, E_d, V_ph):
    """dq currents from the transient-reactance stator relations.

    Solves ``v_d = E_d + xp_q i_q - r_s i_d`` and
    ``v_q = E_q - xp_d i_d - r_s i_q`` with the terminal voltage rotated
    into the rotor frame.
    """
    vdq = V_ph * cmath.exp(-1j * (delta - _HALF_PI))
    v_d, v_q = vdq.real, vdq.imag
    rs, xpd, xpq = params.r_s, params.xp_d, params.xp_q
    det = rs * rs + xpd * xpq
    b_d = v_d - E_d
    b_q = v_q - E_q
    i_d = (-rs * b_d - xpq * b_q) / det
    i_q = (xpd * b_d - rs * b_q) / det
    return i_d, i_q, v_d, v_q


def gen_derivatives(block: GeneratorBlock, state, V_ph, u_V, u_Pv,
                    omega_b: float, omega_0: float = 1.0):
    """Time derivatives of the 9 generator states plus injected current phasor.

    Parameters
    ----------
    state : sequence of 9 floats, ordered as GEN_STATES
    V_ph : complex terminal voltage phasor (pu)
    u_V, u_Pv : voltage and valve-position set points (pu)
    omega_b : base speed (rad/s); omega_0: synchronous speed (pu)
    """
    p = block.params
    delta, omega, E_q, E_d, T_M, P_v, E_fd, r_f, v_a = state
    if not (math.isfinite(delta) and math.isfinite(omega)):
        raise DeviceError("non-finite generator state")
    i_d, i_q, _, _ = gen_stator_currents(p, delta, E_q, E_d, V_ph)
    T_e = E_d * i_d + E_q * i_q

    d_delta = omega_b * (omega - omega_0)
    d_omega = (T_M - T_e) / (2.0 * p.H)
    if p.convention == "as-printed":
        d_Eq = -(E_q - (p.xp_q - p.x_q) * i_d) / p.t_qo
        d_Ed = -(E_d + (p.xp_d - p.x_d) * i_q - E_fd) / p.t_do
        d_Efd = -(p.k_e + saturation(p, E_fd) * E_fd - v_a) / p.t_fd
    else:
        d_Eq = (-E_q - (p.x_d - p.xp_d) * i_d + E_fd) / p.t_do
        d_Ed = (-E_d + (p.x_q - p.xp_q) * i_q) / p.t_qo
        d_Efd = -((p.k_e + saturation(p, E_fd)) * E_fd - v_a) / p.t_fd

    d_Pv = -(P_v - u_Pv + (omega - 1.0) / p.R_d) / p.t_v
    if p.turbine_kind == "thermal":
        d_TM = -(T_M - P_v) / p.t_ch
    else:
        d_TM = -2.0 / p.t_w * (T_M - P_v + p.t_ch * d_Pv)

    v_err = u_V - abs(V_ph) + r_f - (p.k_f / p.t_f) * E_fd
    d_rf = -(r_f - (p.k_f / p.t_f) * E_fd) / p.t_f
    d_va = -(v_a - p.k_a * v_err) / p.t_a

    I_ph = complex(i_d, i_q) * cmath.exp(1j * (delta - _HALF_PI))
    return (d_delta, d_omega, d_Eq, d_Ed, d_TM, d_Pv, d_Efd, d_rf, d_va), I_ph


# --- grid-forming PV plant ----------------------------------------------------

@dataclass(frozen=True)
class PvParams:
    """Grid-forming PV plant constants (pu on the system base / seconds)."""

    B_C: float = 1.0       # DC-link capacitance (pu energy per pu voltage)
    r_f: float = 0.02      # LCL series resistance
    X_f: float = 0.5       # LCL series reactance
    B_c: float = 0.05      # LCL shunt capacitor susceptance
    r_c: float = 0.2       # capacitor branch resistance
    k_p: float = 0.05      # active-power droop gain
    tau_s: float = 0.02    # power measurement filter time constant
    k_d: float = 0.2       # reactive current compensation gain
    kappa_pv: float = 0.8  # voltage regulator gain (< 1: the current command
                           # feeds back kappa_pv * i_f through the i_g + i_c term)
    tau_v: float = 0.05    # voltage regulator time constant
    kappa_p: float = 1.0   # current regulator gain
    tau_i: float = 0.02    # current regulator time constant
    p_array: float = 1.0   # DC array output at standard irradiance (pu)
    coupling: str = "standard"  # dq cross-coupling signs: 'standard' or 'as-printed'

    def __post_init__(self):
        _check_positive("pv", B_C=self.B_C, X_f=self.X_f, B_c=self.B_c,
                        r_c=self.r_c, tau_s=self.tau_s, tau_v=self.tau_v,
                        tau_i=self.tau_i)
        if self.coupling not in ("standard", "as-printed"):
            raise DeviceError(f"unknown coupling mode {self.coupling!r}")


@dataclass(frozen=True)
class PvBlock:
    bus: int
    params: PvParams = field(default_factory=PvParams)


def pv_array_power(params: PvParams, irradiance: float) -> float:
    """DC power from the array, proportional to irradiance (pu of 1000 W/m^2)."""
    if irradiance < 0:
        raise DeviceError(f"negative irradiance {irradiance}")
    return params.p_array * irradiance


def pv_derivatives(block: PvBlock, state, V_ph, u_V, u_P, irradiance,
                   omega_b: float, omega_0: float = 1.0):
    """Time derivatives of the 12 PV-plant states plus injected current phasor.

    The plant output node (LCL capacitor branch) is the terminal bus; the
    grid-side current follows from the capacitor branch relation
    ``v_bus = v_c + r_c (i_f - i_g)``.  Irradiance is in pu of the standard
    1000 W/m^2.
    """
    p = block.params
    (E_dc, i_df, i_qf, v_dc, v_qc, delta_c,
     P_e_f, Q_e_f, z_do, z_qo, z_df, z_qf) = state

    rot = cmath.exp(-1j * (delta_c - _HALF_PI))
    vo = V_ph * rot
    v_do, v_qo = vo.real, vo.imag

    # grid-side current from the capacitor branch
    i_dg = i_df + (v_dc - v_do) / p.r_c
    i_qg = i_qf + (v_qc - v_qo) / p.r_c
    i_dc = i_df - i_dg  # capacitor branch current
    i_qc = i_qf - i_qg

    omega_c = 1.0 - p.k_p * (P_e_f - u_P)
    P_e = v_do * i_dg + v_qo * i_qg
    Q_e = v_qo * i_dg - v_do * i_qg

    # voltage regulator
    vref_d = u_V + p.k_d * i_qg
    vref_q = 0.0
    d_zdo = p.kappa_pv / p.tau_v * (vref_d - v_do)
    d_zqo = p.kappa_pv / p.tau_v * (vref_q - v_qo)

    # current regulator
    iref_d = p.kappa_pv * (vref_d - v_do + z_do + i_dg + i_dc)
    iref_q = p.kappa_pv * (vref_q - v_qo + z_qo + i_qg + i_qc)
    d_zdf = p.kappa_p / p.tau_i * (iref_d - i_df)
    d_zqf = p.kappa_p / p.tau_i * (iref_q - i_qf)

    # inverter bridge voltage: PI output plus voltage/decoupling feedforward
    v_df = p.kappa_p * (iref_d - i_df) + z_df + v_do - omega_c * p.X_f * i_qf
    v_qf = p.kappa_p * (iref_q - i_qf) + z_qf + v_qo + omega_c * p.X_f * i_df

    sgn = 1.0 if p.coupling == "as-printed" else -1.0
    d_idf = omega_b / p.X_f * (-p.r_f * i_df + omega_c * p.X_f * i_qf + v_df - v_do)
    d_iqf = omega_b / p.X_f * (-p.r_f * i_qf + sgn * omega_c * p.X_f * i_df + v_qf - v_qo)
    d_vdc = omega_b / p.B_c * (omega_c * p.B_c * v_qc + i_df - i_dg)
    d_vqc = omega_b / p.B_c * (sgn * omega_c * p.B_c * v_dc + i_qf - i_qg)

    d_delta = omega_b * (omega_c - omega_0)
    d_Pef = (P_e - P_e_f) / p.tau_s
    d_Qef = (Q_e - Q_e_f) / p.tau_s

    P_c = v_df * i_df + v_qf * i_qf  # power drawn from the DC link
    d_Edc = (pv_array_power(p, irradiance) - P_c) / p.B_C

    I_ph = complex(i_dg, i_qg) / rot
    derivs = (d_Edc, d_idf, d_iqf, d_vdc, d_vqc, d_delta,
              d_Pef, d_Qef, d_zdo, d_zqo, d_zdf, d_zqf)
    return derivs, I_ph


# --- induction motor load ------------------------------------------------------

@dataclass(frozen=True)
class MotorParams:
    """Induction motor equivalent circuit (pu) and inertia (s)."""

    H_m: float = 0.6
    r_s: float = 0.02
    x_s: float = 0.1
    r_r: float = 0.02
    x_r: float = 0.1
    x_m: float = 3.0
    T_m: float = 1.0       # constant mechanical torque (pu of its own base)
    scale: float = 1.0     # size multiplier onto the system base

    def __post_init__(self):
        _check_positive("motor", H_m=self.H_m, x_m=self.x_m, scale=self.scale)
        if self.r_r <= 0:
            raise DeviceError("motor rotor resistance must be > 0 (slip singularity)")


@dataclass(frozen=True)
class MotorBlock:
    bus: int
    params: MotorParams = field(default_factory=MotorParams)


def motor_circuit(params: MotorParams, V_ph, slip):
    """Stator current drawn and air-gap torque at a given slip (single unit)."""
    p = params
    if abs(slip) < 1e-12:
        # rotor branch open: magnetizing path only, zero torque
        Z = complex(p.r_s, p.x_s + p.x_m)
        I1 = V_ph / Z
        return I1, 0.0
    Zr = complex(p.r_r / slip, p.x_r)
    Zm = complex(0.0, p.x_m)
    Zrm = Zr * Zm / (Zr + Zm)
    Z = complex(p.r_s, p.x_s) + Zrm
    I1 = V_ph / Z
    I2 = I1 * Zm / (Zr + Zm)
    T_e = abs(I2) ** 2 * p.r_r / slip  # air-gap power / synchronous speed (=1)
    return I1, T_e


def motor_derivative(block: MotorBlock, state, V_ph, torque_mult: float = 1.0):
    """Speed derivative of the motor plus injected (negative) current phasor."""
    p = block.params
    omega_m = state[0]
    slip = 1.0 - omega_m
    I1, T_e_unit = motor_circuit(p, V_ph, slip)
    T_e = T_e_unit * p.scale
    d_omega = (T_e - p.T_m * p.scale * torque_mult) / (2.0 * p.H_m)
    return (d_omega,), -I1 * p.scale


# --- static loads --------------------------------------------------------------

@dataclass(frozen=True)
class StaticLoadSpec:
    """Constant-power (P, Q) or constant-impedance (Z) load at a bus."""

    bus: int
    kind: str              # 'power' or 'impedance'
    P: float = 0.0
    Q: float = 0.0
    Z: complex = 0j

    def __post_init__(self):
        if self.kind not in ("power", "impedance"):
            raise DeviceError(f"unknown static load kind {self.kind!r}")
        if self.kind == "impedance" and self.Z == 0:
            raise DeviceError("impedance load needs Z != 0")


def static_load_residual(spec: StaticLoadSpec, V_ph, I_ph,
                         P=None, Q=None, z_mult: float = 1.0):
    """Complex residual of the load relation; zero at a consistent point.

    Constant power: ``conj(I) V + (P + jQ)``; constant impedance:
    ``V + I Z``.  ``I_ph`` is the bus net injection, so a consuming load has
    ``Re(V conj(I)) < 0``.  P/Q/z_mult override the nominal values (used by
    disturbance scenarios).
    """
    if spec.kind == "power":
        Pv = spec.P if P is None else P
        Qv = spec.Q if Q is None else Q
        return I_ph.conjugate() * V_ph + complex(Pv, Qv)
    return V_ph + I_ph * (spec.Z / z_mult)


def static_load_injection(spec: StaticLoadSpec, V_ph, P=None, Q=None,
                          z_mult: float = 1.0):
    """Injected current phasor of a static load (negative of the draw)."""
    if spec.kind == "power":
        Pv = spec.P if P is None else P
        Qv = spec.Q if Q is None else Q
        return -complex(Pv, -Qv) / V_ph.conjugate()
    return -V_ph / (spec.Z / z_mult)
