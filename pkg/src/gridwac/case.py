"""Test-system description: buses, branches, devices, loads and dispatch.

A :class:`GridCase` is the complete input of a study.  The shipped
``wecc9`` case is a 9-bus system with one synchronous generator (slack,
bus 1), two grid-forming PV plants (buses 2 and 3), constant-power loads at
buses 5 and 6, and a motor plus constant-impedance load at bus 8.  Every
parameter that the source material does not pin down is documented in
``docs/params_provenance.md``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

from .devices import (GeneratorBlock, GeneratorParams, MotorBlock, MotorParams,
                      PvBlock, PvParams, StaticLoadSpec)
from .netgrid import BranchSpec, BusSpec, NetworkError

OMEGA_BASE = 120.0 * math.pi   # rad/s
S_BASE_MVA = 100.0
IRRADIANCE_BASE = 1000.0       # W/m^2 == 1 pu irradiance


@dataclass
class GenUnit:
    """Generator device plus its dispatch (V set point; P only off-slack)."""

    block: GeneratorBlock
    V_set: float = 1.0
    P_set: float | None = None


@dataclass
class PvUnit:
    """PV plant plus its grid-side dispatch."""

    block: PvBlock
    V_set: float = 1.0
    P_set: float = 0.0


@dataclass
class GridCase:
    """Complete input description of a test system (all pu on base_mva)."""

    name: str
    buses: list[BusSpec]
    branches: list[BranchSpec]
    generators: list[GenUnit]
    pv_plants: list[PvUnit]
    loads: list[StaticLoadSpec] = field(default_factory=list)
    motors: list[MotorBlock] = field(default_factory=list)
    base_mva: float = S_BASE_MVA
    omega_b: float = OMEGA_BASE

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise NetworkError("duplicate bus id")
        slacks = [b for b in self.buses if b.kind == "slack"]
        if len(slacks) != 1:
            raise NetworkError(f"case needs exactly one slack bus, got {len(slacks)}")
        known = set(ids)
        for unit in self.generators:
            if unit.block.bus not in known:
                raise NetworkError(f"generator at unknown bus {unit.block.bus}")
        for unit in self.pv_plants:
            if unit.block.bus not in known:
                raise NetworkError(f"pv plant at unknown bus {unit.block.bus}")

    @property
    def slack_bus(self) -> int:
        return next(b.id for b in self.buses if b.kind == "slack")

    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    def nominal_demand(self) -> complex:
        """Sum of rated load demand (motor and impedance loads rated at V=1)."""
        total = 0j
        for ld in self.loads:
            if ld.kind == "power":
                total += complex(ld.P, ld.Q)
            else:
                total += (1.0 / (ld.Z)).conjugate()
        for mo in self.motors:
            from .case import _motor_pq, motor_balance_slip
            pm, qm = _motor_pq(mo, motor_balance_slip(mo.params))
            total += complex(pm, qm)
        return total

    def to_dict(self) -> dict:
        def cplx(z):
            return [z.real, z.imag]

        return {
            "name": self.name,
            "base_mva": self.base_mva,
            "omega_b": self.omega_b,
            "buses": [{"id": b.id, "kind": b.kind, "base_kV": b.base_kV,
                       "shunt": cplx(b.shunt)} for b in self.buses],
            "branches": [{"from": br.from_bus, "to": br.to_bus,
                          "z": cplx(br.z), "b": br.b, "status": br.status}
                         for br in self.branches],
            "generators": [{"bus": g.block.bus, "V_set": g.V_set, "P_set": g.P_set,
                            "params": vars(g.block.params)} for g in self.generators],
            "pv_plants": [{"bus": p.block.bus, "V_set": p.V_set, "P_set": p.P_set,
                           "params": vars(p.block.params)} for p in self.pv_plants],
            "loads": [{"bus": ld.bus, "kind": ld.kind, "p": ld.P, "q": ld.Q,
                       "z": cplx(ld.Z)} for ld in self.loads],
            "motors": [{"bus": m.bus, "params": vars(m.params)} for m in self.motors],
        }

    def content_hash(self) -> str:
        """Stable content hash used to tie artifacts to their input case."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def case_from_dict(d: dict) -> GridCase:
    def cplx(v):
        return complex(v[0], v[1])

    buses = [BusSpec(id=b["id"], kind=b["kind"], base_kV=b["base_kV"],
                     shunt=cplx(b["shunt"])) for b in d["buses"]]
    branches = [BranchSpec(from_bus=b["from"], to_bus=b["to"], z=cplx(b["z"]),
                           b=b["b"], status=b["status"]) for b in d["branches"]]
    gens = [GenUnit(GeneratorBlock(bus=g["bus"], params=GeneratorParams(**g["params"])),
                    V_set=g["V_set"], P_set=g["P_set"]) for g in d["generators"]]
    pvs = [PvUnit(PvBlock(bus=p["bus"], params=PvParams(**p["params"])),
                  V_set=p["V_set"], P_set=p["P_set"]) for p in d["pv_plants"]]
    loads = [StaticLoadSpec(bus=l["bus"], kind=l["kind"], P=l["p"], Q=l["q"],
                            Z=cplx(l["z"])) for l in d["loads"]]
    motors = [MotorBlock(bus=m["bus"], params=MotorParams(**m["params"]))
              for m in d["motors"]]
    return GridCase(name=d["name"], buses=buses, branches=branches,
                    generators=gens, pv_plants=pvs, loads=loads, motors=motors,
                    base_mva=d["base_mva"], omega_b=d["omega_b"])


def wecc9_case(convention: str = "as-printed") -> GridCase:
    """Modified WECC 9-bus case: generator at bus 1, PV plants at 2 and 3,
    motor load at bus 8, overall rated demand 0.77 + j0.25 pu."""
    buses = [
        BusSpec(1, "slack", 16.5), BusSpec(2, "pv-plant", 18.0),
        BusSpec(3, "pv-plant", 13.8), BusSpec(4, "non-unit", 230.0),
        BusSpec(5, "load", 230.0), BusSpec(6, "load", 230.0),
        BusSpec(7, "non-unit", 230.0), BusSpec(8, "load", 230.0),
        BusSpec(9, "non-unit", 230.0),
    ]
    branches = [
        BranchSpec(1, 4, 0.0576j), BranchSpec(2, 7, 0.0625j),
        BranchSpec(3, 9, 0.0586j),
        BranchSpec(4, 5, 0.010 + 0.085j, 0.176),
        BranchSpec(4, 6, 0.017 + 0.092j, 0.158),
        BranchSpec(5, 7, 0.032 + 0.161j, 0.306),
        BranchSpec(6, 9, 0.039 + 0.170j, 0.358),
        BranchSpec(7, 8, 0.0085 + 0.072j, 0.149),
        BranchSpec(8, 9, 0.0119 + 0.1008j, 0.209),
    ]
    gen = GenUnit(
        GeneratorBlock(bus=1, params=GeneratorParams(convention=convention)),
        V_set=1.04, P_set=None)
    pvs = [
        PvUnit(PvBlock(bus=2, params=PvParams(p_array=0.25)), V_set=1.025, P_set=0.25),
        PvUnit(PvBlock(bus=3, params=PvParams(p_array=0.20)), V_set=1.025, P_set=0.20),
    ]
    # Standard 9-bus loads scaled to total 0.77 + j0.25 pu; bus 8 split into a
    # motor (P ~ 0.10) and an impedance load absorbing the remainder at V = 1.
    loads = [
        StaticLoadSpec(bus=5, kind="power", P=0.305556, Q=0.108696),
        StaticLoadSpec(bus=6, kind="power", P=0.220000, Q=0.065217),
    ]
    motor = MotorBlock(bus=8, params=MotorParams())
    p_bus8, q_bus8 = 0.244444, 0.076087
    motor, s_m = _size_motor(motor, p_target=0.10)
    pm, qm = _motor_pq(motor, s_m)
    rem = complex(p_bus8 - pm, q_bus8 - qm)
    loads.append(StaticLoadSpec(bus=8, kind="impedance", Z=(1.0 / rem).conjugate()))
    return GridCase(name="wecc9", buses=buses, branches=branches,
                    generators=[gen], pv_plants=pvs, loads=loads, motors=[motor])


def _motor_pq(motor: MotorBlock, slip: float):
    from .devices import motor_circuit
    I1, _ = motor_circuit(motor.params, 1.0 + 0j, slip)
    S = (1.0 + 0j) * I1.conjugate() * motor.params.scale
    return S.real, S.imag


def motor_balance_slip(params: MotorParams) -> float:
    """Slip at which the unit machine's torque balances T_m at V = 1.

    The bisection bracket stays below the breakdown slip so the stable
    crossing is found.
    """
    from .devices import motor_circuit
    lo, hi = 1e-5, 0.08
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        _, te = motor_circuit(params, 1.0 + 0j, mid)
        if te < params.T_m:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _size_motor(motor: MotorBlock, p_target: float):
    """Scale the unit machine so it draws p_target at its torque-balance slip."""
    from .devices import motor_circuit
    p = motor.params
    s_star = motor_balance_slip(p)
    I1, _ = motor_circuit(p, 1.0 + 0j, s_star)
    p_unit = ((1.0 + 0j) * I1.conjugate()).real
    scaled = replace(p, scale=p_target / p_unit)
    return MotorBlock(bus=motor.bus, params=scaled), s_star
