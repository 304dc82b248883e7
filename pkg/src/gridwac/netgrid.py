"""Static network model: buses, branches, admittance matrix, power flow,
and network-event (fault / line-switching) rewrites of the admittance matrix.

All quantities are per-unit on the system MVA base.  Bus ids are arbitrary
integers in the input data and are normalized to contiguous 0-based indices
internally; the mapping is kept on :class:`GridCase`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BUS_KINDS = ("slack", "generator", "pv-plant", "load", "non-unit")


class NetworkError(ValueError):
    """Raised for inconsistent network data or invalid network events."""


@dataclass(frozen=True)
class BusSpec:
    """A single bus: identity, role and shunt admittance (pu)."""

    id: int
    kind: str = "non-unit"
    base_kV: float = 230.0
    shunt: complex = 0j

    def __post_init__(self):
        if self.kind not in BUS_KINDS:
            raise NetworkError(f"unknown bus kind {self.kind!r}")


@dataclass(frozen=True)
class BranchSpec:
    """A transmission line or transformer branch (series z, total charging b)."""

    from_bus: int
    to_bus: int
    z: complex
    b: float = 0.0
    status: str = "in"

    def __post_init__(self):
        if self.z == 0:
            raise NetworkError(f"branch {self.from_bus}-{self.to_bus} has z = 0")
        if self.from_bus == self.to_bus:
            raise NetworkError(f"branch {self.from_bus}-{self.to_bus} is a self loop")
        if self.status not in ("in", "out"):
            raise NetworkError(f"branch status {self.status!r} not in/out")


@dataclass
class PowerFlowSolution:
    """Result of a Newton-Raphson power-flow solve."""

    V: np.ndarray            # complex bus voltages (pu)
    S_inj: np.ndarray        # complex net injections V * conj(Y V) (pu)
    converged: bool
    iterations: int
    mismatch: float          # final max power mismatch (pu)


def _index_map(buses):
    ids = [b.id for b in buses]
    if len(set(ids)) != len(ids):
        raise NetworkError("duplicate bus id in bus list")
    return {bid: k for k, bid in enumerate(ids)}


def branch_stamp(branch: BranchSpec) -> np.ndarray:
    """2x2 admittance stamp [[y+jb/2, -y], [-y, y+jb/2]] of one branch."""
    y = 1.0 / branch.z
    sh = 0.5j * branch.b
    return np.array([[y + sh, -y], [-y, y + sh]], dtype=complex)


def build_admittance(buses, branches) -> np.ndarray:
    """Assemble the complex bus admittance matrix from bus/branch data.

    Out-of-service branches are skipped; bus shunts are added on the
    diagonal.  Raises :class:`NetworkError` on duplicate or unknown ids.
    """
    idx = _index_map(buses)
    n = len(buses)
    Y = np.zeros((n, n), dtype=complex)
    for br in branches:
        if br.from_bus not in idx or br.to_bus not in idx:
            raise NetworkError(f"branch {br.from_bus}-{br.to_bus} references unknown bus")
        if br.status != "in":
            continue
        i, j = idx[br.from_bus], idx[br.to_bus]
        st = branch_stamp(br)
        Y[i, i] += st[0, 0]
        Y[i, j] += st[0, 1]
        Y[j, i] += st[1, 0]
        Y[j, j] += st[1, 1]
    for b in buses:
        Y[idx[b.id], idx[b.id]] += b.shunt
    return Y


def solve_power_flow(Y, bus_types, demand, setpoints, tol=1e-8, max_iter=30):
    """Full Newton power flow in polar coordinates.

    Parameters
    ----------
    Y : (N, N) complex ndarray
        Bus admittance matrix.
    bus_types : sequence of str
        Per-bus type, 'slack' | 'pv' | 'pq' (positional, normalized indices).
    demand : (N,) complex ndarray
        Complex load demand per bus (pu, positive = consumption).
    setpoints : dict
        ``{bus_index: (P_gen, V_mag)}`` for pv buses and
        ``{slack_index: (None, V_mag)}`` for the slack bus.

    Returns
    -------
    PowerFlowSolution
        Converged flag is False when the iteration cap is reached; the best
        iterate is still returned.
    """
    n = Y.shape[0]
    types = list(bus_types)
    if types.count("slack") != 1:
        raise NetworkError("power flow needs exactly one slack bus")
    slack = types.index("slack")
    pv = [i for i, t in enumerate(types) if t == "pv"]
    pq = [i for i, t in enumerate(types) if t == "pq"]

    # Scheduled net injections; slack P and slack/pv Q are free.
    P_sched = -demand.real.copy()
    Q_sched = -demand.imag.copy()
    Vm = np.ones(n)
    Va = np.zeros(n)
    Vm[slack] = setpoints[slack][1]
    for i in pv:
        P_sched[i] += setpoints[i][0]
        Vm[i] = setpoints[i][1]

    def injections(Vm, Va):
        V = Vm * np.exp(1j * Va)
        return V, V * np.conj(Y @ V)

    iters = 0
    V, S = injections(Vm, Va)
    mis_P = P_sched - S.real
    mis_Q = Q_sched - S.imag
    ang_idx = pv + pq
    mismatch = _pf_mismatch(mis_P, mis_Q, ang_idx, pq)
    while mismatch > tol and iters < max_iter:
        J = _pf_jacobian(Y, V, Vm, ang_idx, pq)
        rhs = np.concatenate([mis_P[ang_idx], mis_Q[pq]])
        try:
            dx = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError as exc:
            raise NetworkError("singular power-flow Jacobian") from exc
        Va[ang_idx] += dx[: len(ang_idx)]
        Vm[pq] += dx[len(ang_idx):]
        V, S = injections(Vm, Va)
        mis_P = P_sched - S.real
        mis_Q = Q_sched - S.imag
        mismatch = _pf_mismatch(mis_P, mis_Q, ang_idx, pq)
        iters += 1
    return PowerFlowSolution(V=V, S_inj=S, converged=mismatch <= tol,
                             iterations=iters, mismatch=mismatch)


def _pf_mismatch(mis_P, mis_Q, ang_idx, pq):
    m = 0.0
    if ang_idx:
        m = float(np.max(np.abs(mis_P[ang_idx])))
    if pq:
        m = max(m, float(np.max(np.abs(mis_Q[pq]))))
    return m


def _pf_jacobian(Y, V, Vm, ang_idx, pq):
    """Polar power-flow Jacobian [[dP/da, dP/dVm], [dQ/da, dQ/dVm]]."""
    n = Y.shape[0]
    Ibus = Y @ V
    diagV = np.diag(V)
    diagI = np.diag(Ibus)
    diagVnorm = np.diag(V / np.abs(V))
    dS_dVa = 1j * diagV @ np.conj(diagI - Y @ diagV)
    dS_dVm = diagV @ np.conj(Y @ diagVnorm) + np.conj(diagI) @ diagVnorm
    J11 = dS_dVa[np.ix_(ang_idx, ang_idx)].real
    J12 = dS_dVm[np.ix_(ang_idx, pq)].real
    J21 = dS_dVa[np.ix_(pq, ang_idx)].imag
    J22 = dS_dVm[np.ix_(pq, pq)].imag
    return np.block([[J11, J12], [J21, J22]])


# --- network events ---------------------------------------------------------

@dataclass(frozen=True)
class NetworkEvent:
    """A switching event rewriting the admittance matrix.

    kind:
      'fault'        line-to-ground fault at fraction ``alpha`` along a
                     branch, fault admittance ``y_fault`` to ground at the
                     split node (the split node is eliminated back into Y);
      'near-clear'   near-end breaker opens, fault still fed from remote end;
      'remote-clear' branch fully out, fault isolated;
      'restore'      back to the pre-fault admittance matrix.
    """

    kind: str
    branch: tuple[int, int] | None = None
    alpha: float = 0.5
    y_fault: float = 1e4

    def __post_init__(self):
        if self.kind not in ("fault", "near-clear", "remote-clear", "restore"):
            raise NetworkError(f"unknown network event kind {self.kind!r}")
        if self.kind != "restore":
            if self.branch is None:
                raise NetworkError(f"{self.kind} event needs a branch")
            if not 0.0 <= self.alpha <= 1.0:
                raise NetworkError(f"fault location alpha={self.alpha} outside [0, 1]")


def _find_branch(branches, key):
    for br in branches:
        if (br.from_bus, br.to_bus) == key or (br.to_bus, br.from_bus) == key:
            return br
    raise NetworkError(f"no branch {key[0]}-{key[1]} in case")


def apply_network_event(Y, buses, branches, event: NetworkEvent) -> np.ndarray:
    """Return a rewritten admittance matrix for a switching event.

    ``Y`` must be the pre-fault matrix; it is never modified.  The faulted
    branch is split at ``alpha`` into two pi sections, the fault admittance
    is attached at the split node, and the split node is eliminated by a
    Schur complement so the matrix size is unchanged.
    """
    if event.kind == "restore":
        return Y.copy()
    br = _find_branch(branches, event.branch)
    if br.status != "in":
        raise NetworkError(f"event on out-of-service branch {event.branch}")
    idx = _index_map(buses)
    i, j = idx[br.from_bus], idx[br.to_bus]
    Yn = Y.copy()
    st = branch_stamp(br)
    # Remove the healthy branch in every event kind.
    Yn[i, i] -= st[0, 0]
    Yn[i, j] -= st[0, 1]
    Yn[j, i] -= st[1, 0]
    Yn[j, j] -= st[1, 1]
    if event.kind == "remote-clear":
        return Yn

    a = event.alpha
    y1 = 1.0 / (br.z * a) if a > 0 else None          # near section i--f
    y2 = 1.0 / (br.z * (1 - a)) if a < 1 else None    # far section f--j
    sh1 = 0.5j * br.b * a                             # per-end charging, near section
    sh2 = 0.5j * br.b * (1 - a)                       # per-end charging, far section
    yf = event.y_fault + 0j

    if event.kind == "fault":
        # Split node f carries y1, y2, the fault and the f-end section
        # charging; eliminate f: Y'' = Y' - col * row / d.
        d = yf + sh1 + sh2
        add_ii = sh1
        add_jj = sh2
        col = np.zeros(2, dtype=complex)  # coupling (i, j) <-> f
        if y1 is not None:
            d += y1
            add_ii += y1
            col[0] = -y1
        if y2 is not None:
            d += y2
            add_jj += y2
            col[1] = -y2
        Yn[i, i] += add_ii
        Yn[j, j] += add_jj
        Yn[i, i] -= col[0] * col[0] / d
        Yn[i, j] -= col[0] * col[1] / d
        Yn[j, i] -= col[1] * col[0] / d
        Yn[j, j] -= col[1] * col[1] / d
        return Yn

    # near-clear: breaker at i open; the far section plus the faulted stub
    # remain, fed from j only.  The open stub contributes its f-end charging.
    d = yf + sh1 + sh2
    add_jj = sh2
    col_j = 0j
    if y2 is not None:
        d += y2
        add_jj += y2
        col_j = -y2
    Yn[j, j] += add_jj
    Yn[j, j] -= col_j * col_j / d
    return Yn
