"""Reduced-order phasor model of an islanded, droop-controlled microgrid
with distributed secondary voltage/frequency control.

Each DG is an ideal voltage source ``V_od * exp(j delta)`` behind a
coupling impedance. Network transients are taken as instantaneous, so every
derivative evaluation does one complex nodal solve. Quantities are carried
in a line-to-line RMS equivalent circuit: with V the line-to-line voltage,
``V * conj(I)`` is the three-phase power (the phase RMS value is V / sqrt(3)).

Per DG the states are the filtered powers P, Q, the secondary set points
V_n, omega_n and the angle delta relative to a frame rotating at omega_ref:

    V_od  = V_n - n_Q Q             omega = omega_n - m_P P
    dP/dt = omega_c (Re S - P)      dQ/dt = omega_c (Im S - Q)
    dV_n/dt = u_v + n_Q dQ/dt       domega_n/dt = u_omega + u_p
    ddelta/dt = omega - omega_ref

    u_v     = -c_v     (L e_v + G Z e_v)        e_v = V_od - V_ref
    u_omega = -c_omega (L e_w + G Z e_w)        e_w = omega - omega_ref
    u_p     = -c_p      L (m_P P)

With secondary control inactive the set points are frozen and the DGs run
on droop alone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .consensus import ControllerGains, NotSettledError, check_step
from .netgraph import CommNetwork, PinningConfig, laplacian
from .spectral import closed_loop_matrix

ISLAND = "ISLAND"
LOAD_ADD = "LOAD_ADD"
LOAD_REMOVE = "LOAD_REMOVE"
ACTIONS = (ISLAND, LOAD_ADD, LOAD_REMOVE)

OK = "OK"
UNSTABLE = "UNSTABLE"
PEAK_FLOOR = 1e-9


class PlantConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DGParams:
    m_P: float
    n_Q: float
    omega_c: float = 31.41
    type_label: str = "I"

    def __post_init__(self):
        if not (self.m_P > 0 and self.n_Q > 0 and self.omega_c > 0):
            raise PlantConfigError(f"droop slopes and filter corner must be positive: {self}")


TYPE_I = DGParams(9.4e-5, 1.3e-3, 31.41, "I")
TYPE_II = DGParams(12.5e-5, 1.5e-3, 31.41, "II")


@dataclass(frozen=True)
class Line:
    a: int
    b: int
    R: float
    X: float

    @property
    def impedance(self) -> complex:
        return complex(self.R, self.X)


@dataclass(frozen=True)
class Load:
    id: str
    bus: int
    P: float
    Q: float

    def admittance(self, v_nominal: float) -> complex:
        return complex(self.P, -self.Q) / v_nominal**2


@dataclass(frozen=True)
class PlantTopology:
    """Electrical network. Buses are 0-based.

    ``coupling[i]`` is the impedance between DG ``i`` and its bus ``dg_bus[i]``;
    zero puts the source directly on the bus. ``pcc_bus`` marks where the
    main grid connects through ``grid_impedance`` before islanding.
    """

    n_buses: int
    lines: tuple[Line, ...]
    loads: tuple[Load, ...]
    dg_bus: tuple[int, ...]
    coupling: tuple[complex, ...]
    pcc_bus: int | None = None
    grid_impedance: complex = 0.01 + 0.05j
    v_nominal: float = 380.0

    def __post_init__(self):
        nb = self.n_buses
        if nb < 1:
            raise PlantConfigError("plant needs at least one bus")
        if len(self.coupling) != len(self.dg_bus):
            raise PlantConfigError("one coupling impedance per DG is required")
        for b in self.dg_bus:
            if not 0 <= b < nb:
                raise PlantConfigError(f"DG bus {b} outside 0..{nb - 1}")
        direct = [b for b, z in zip(self.dg_bus, self.coupling) if z == 0]
        if len(set(direct)) != len(direct):
            raise PlantConfigError("two DGs directly on the same bus")
        for ln in self.lines:
            if not (0 <= ln.a < nb and 0 <= ln.b < nb) or ln.a == ln.b:
                raise PlantConfigError(f"bad line endpoints {ln}")
            if not abs(ln.impedance) > 0 or ln.R < 0:
                raise PlantConfigError(f"line impedance must be nonzero with R >= 0: {ln}")
        for z in self.coupling:
            if z != 0 and (z.real < 0 or not abs(z) > 0):
                raise PlantConfigError(f"bad coupling impedance {z}")
        for ld in self.loads:
            self.check_bus(ld.bus)
        if self.pcc_bus is not None:
            self.check_bus(self.pcc_bus)
        if not _bus_graph_connected(nb, self.lines):
            raise PlantConfigError("electrical network is not connected")

    @property
    def n_dgs(self) -> int:
        return len(self.dg_bus)

    def check_bus(self, bus: int) -> None:
        if not 0 <= bus < self.n_buses:
            raise PlantConfigError(f"bus {bus} outside 0..{self.n_buses - 1}")


def _bus_graph_connected(nb: int, lines) -> bool:
    parent = list(range(nb))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for ln in lines:
        parent[find(ln.a)] = find(ln.b)
    return len({find(i) for i in range(nb)}) == 1


# -- network solve ---------------------------------------------------------

@dataclass
class NetworkSolution:
    S_dg: np.ndarray
    S_grid: complex
    S_loads: np.ndarray
    S_branches: np.ndarray
    V_bus: np.ndarray


class _Circuit:
    """Node-admittance model for one load set; sources are DGs (+ grid)."""

    def __init__(self, topo: PlantTopology, loads, grid: bool):
        nb = topo.n_buses
        self.topo = topo
        self.loads = tuple(loads)
        self.grid = grid
        node_of_dg = []
        n_nodes = nb
        branches = [(ln.a, ln.b, 1 / ln.impedance) for ln in topo.lines]
        for b, z in zip(topo.dg_bus, topo.coupling):
            if z == 0:
                node_of_dg.append(b)
            else:
                node_of_dg.append(n_nodes)
                branches.append((n_nodes, b, 1 / z))
                n_nodes += 1
        sources = list(node_of_dg)
        if grid:
            if topo.pcc_bus is None:
                raise PlantConfigError("grid-connected solve needs a PCC bus")
            if topo.grid_impedance == 0:
                sources.append(topo.pcc_bus)
            else:
                branches.append((n_nodes, topo.pcc_bus, 1 / topo.grid_impedance))
                sources.append(n_nodes)
                n_nodes += 1
        if len(set(sources)) != len(sources):
            raise PlantConfigError("grid and a DG share a source node")
        Y = np.zeros((n_nodes, n_nodes), dtype=complex)
        for a, b, y in branches:
            Y[a, a] += y
            Y[b, b] += y
            Y[a, b] -= y
            Y[b, a] -= y
        for ld in self.loads:
            Y[ld.bus, ld.bus] += ld.admittance(topo.v_nominal)
        free = [i for i in range(n_nodes) if i not in sources]
        self.Y, self.branches, self.sources, self.free = Y, branches, sources, free
        Yss = Y[np.ix_(sources, sources)]
        if free:
            Yff = Y[np.ix_(free, free)]
            Yfs = Y[np.ix_(free, sources)]
            try:
                self._ff_solve = np.linalg.solve(Yff, -Yfs)
            except np.linalg.LinAlgError as exc:
                raise PlantConfigError(f"singular admittance matrix: {exc}") from exc
            if not np.isfinite(self._ff_solve).all():
                raise PlantConfigError("singular admittance matrix")
            self.Y_red = Yss + Y[np.ix_(sources, free)] @ self._ff_solve
        else:
            self._ff_solve = np.zeros((0, len(sources)))
            self.Y_red = Yss

    def source_voltages(self, E_dg, grid_voltage):
        E = np.asarray(E_dg, dtype=complex)
        return np.append(E, grid_voltage) if self.grid else E

    def dg_power(self, E_dg, grid_voltage=None) -> np.ndarray:
        Vs = self.source_voltages(E_dg, grid_voltage)
        S = Vs * np.conj(self.Y_red @ Vs)
        return S[: self.topo.n_dgs]

    def solve(self, E_dg, grid_voltage=None) -> NetworkSolution:
        Vs = self.source_voltages(E_dg, grid_voltage)
        V = np.zeros(self.Y.shape[0], dtype=complex)
        V[self.sources] = Vs
        V[self.free] = self._ff_solve @ Vs
        S_src = Vs * np.conj(self.Y_red @ Vs)
        n = self.topo.n_dgs
        S_loads = np.array([abs(V[ld.bus]) ** 2 * np.conj(ld.admittance(self.topo.v_nominal)) for ld in self.loads])
        S_br = np.array([(V[a] - V[b]) * np.conj(y * (V[a] - V[b])) for a, b, y in self.branches])
        return NetworkSolution(
            S_dg=S_src[:n],
            S_grid=complex(S_src[n]) if self.grid else 0j,
            S_loads=S_loads,
            S_branches=S_br,
            V_bus=V[: self.topo.n_buses],
        )


def solve_network(topology: PlantTopology, dg_outputs, loads=None, grid_voltage=None) -> np.ndarray:
    """Complex power ``S_i = V_i conj(I_i)`` delivered by each DG.

    ``dg_outputs`` are DG voltage phasors. With ``grid_voltage`` set, the
    main grid is connected at the PCC bus.
    """
    E = np.asarray(dg_outputs, dtype=complex)
    if E.shape != (topology.n_dgs,):
        raise PlantConfigError(f"expected {topology.n_dgs} DG voltages, got shape {E.shape}")
    if np.any(np.abs(E) <= 0):
        raise PlantConfigError("DG voltage magnitudes must be positive")
    circuit = _Circuit(topology, topology.loads if loads is None else loads, grid_voltage is not None)
    return circuit.dg_power(E, grid_voltage)


def network_solution(topology: PlantTopology, dg_outputs, loads=None, grid_voltage=None) -> NetworkSolution:
    """Full nodal solution: DG, grid, load and branch powers plus bus voltages."""
    circuit = _Circuit(topology, topology.loads if loads is None else loads, grid_voltage is not None)
    return circuit.solve(np.asarray(dg_outputs, dtype=complex), grid_voltage)


# -- dynamics --------------------------------------------------------------

@dataclass
class DGState:
    """Per-DG state arrays (one entry per DG)."""

    P: np.ndarray
    Q: np.ndarray
    V_n: np.ndarray
    omega_n: np.ndarray
    delta: np.ndarray

    def pack(self) -> np.ndarray:
        return np.concatenate([self.P, self.Q, self.V_n, self.omega_n, self.delta])

    @classmethod
    def unpack(cls, x: np.ndarray) -> "DGState":
        return cls(*(np.array(part) for part in np.split(x, 5)))

    def copy(self) -> "DGState":
        return DGState.unpack(self.pack())


class Plant:
    def __init__(self, topology: PlantTopology, dgs, net: CommNetwork):
        dgs = tuple(dgs)
        if len(dgs) != topology.n_dgs or net.n_nodes != topology.n_dgs:
            raise PlantConfigError(
                f"{len(dgs)} DG parameter sets, {topology.n_dgs} DG placements and "
                f"{net.n_nodes} network nodes must agree"
            )
        self.topology = topology
        self.dgs = dgs
        self.net = net
        self.m_P = np.array([d.m_P for d in dgs])
        self.n_Q = np.array([d.n_Q for d in dgs])
        self.omega_c = np.array([d.omega_c for d in dgs])
        self.L = laplacian(net)
        self._circuits: dict = {}

    @property
    def n_dgs(self) -> int:
        return len(self.dgs)

    def circuit(self, loads, grid: bool = False) -> _Circuit:
        key = (tuple(loads), grid)
        if key not in self._circuits:
            self._circuits[key] = _Circuit(self.topology, loads, grid)
        return self._circuits[key]

    def outputs(self, s: DGState) -> tuple[np.ndarray, np.ndarray]:
        """Terminal voltage magnitude and frequency from the droop laws."""
        return s.V_n - self.n_Q * s.Q, s.omega_n - self.m_P * s.P

    def grid_connected_state(self, loads, gains: ControllerGains) -> DGState:
        """Pre-islanding operating point: the grid holds V_ref and omega_ref."""
        n = self.n_dgs
        E = np.full(n, gains.v_ref, dtype=complex)
        S = self.circuit(loads, grid=True).dg_power(E, gains.v_ref)
        return DGState(
            P=S.real.copy(),
            Q=S.imag.copy(),
            V_n=gains.v_ref + self.n_Q * S.imag,
            omega_n=gains.omega_ref + self.m_P * S.real,
            delta=np.zeros(n),
        )

    def controls(self, s: DGState, gains: ControllerGains, pin: PinningConfig):
        V_od, omega = self.outputs(s)
        gz = pin.gains * pin.indicator
        e_v = V_od - gains.v_ref
        e_w = omega - gains.omega_ref
        u_v = -gains.c_v * (self.L @ e_v + gz * e_v)
        u_w = -gains.c_omega * (self.L @ e_w + gz * e_w)
        u_p = -gains.c_p * (self.L @ (self.m_P * s.P))
        return u_v, u_w, u_p

    def derivatives(self, x: np.ndarray, gains, pin, circuit: _Circuit, secondary: bool) -> np.ndarray:
        s = DGState.unpack(x)
        V_od, omega = self.outputs(s)
        S = circuit.dg_power(V_od * np.exp(1j * s.delta))
        dP = self.omega_c * (S.real - s.P)
        dQ = self.omega_c * (S.imag - s.Q)
        if secondary:
            u_v, u_w, u_p = self.controls(s, gains, pin)
            dV = u_v + self.n_Q * dQ
            dW = u_w + u_p
        else:
            dV = np.zeros_like(dQ)
            dW = np.zeros_like(dQ)
        return np.concatenate([dP, dQ, dV, dW, omega - gains.omega_ref])


def step(plant: Plant, states: DGState, gains: ControllerGains, pin: PinningConfig, dt: float,
         loads=None, secondary: bool = True) -> DGState:
    """One classical RK4 step of the islanded plant."""
    check_step(closed_loop_matrix(plant.net, pin), max(gains.c_v, gains.c_omega), dt)
    circuit = plant.circuit(plant.topology.loads if loads is None else loads)
    return DGState.unpack(_rk4(plant, states.pack(), gains, pin, circuit, secondary, dt))


def _rk4(plant, x, gains, pin, circuit, secondary, dt):
    f = plant.derivatives
    k1 = f(x, gains, pin, circuit, secondary)
    k2 = f(x + 0.5 * dt * k1, gains, pin, circuit, secondary)
    k3 = f(x + 0.5 * dt * k2, gains, pin, circuit, secondary)
    k4 = f(x + dt * k3, gains, pin, circuit, secondary)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


# -- scenarios -------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    time: float
    action: str
    bus: int | None = None
    P: float = 0.0
    Q: float = 0.0
    load_id: str | None = None

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise PlantConfigError(f"unknown event action {self.action!r}")


@dataclass(frozen=True)
class RelayBand:
    v_pu: tuple[float, float] = (0.88, 1.1)
    omega: tuple[float, float] = (295.3, 317.3)
    cycles: int = 20


@dataclass(frozen=True)
class Scenario:
    t_end: float
    dt: float = 1e-4
    events: tuple[Event, ...] = ()
    relay_band: RelayBand = RelayBand()
    record_every: int = 10

    def __post_init__(self):
        if not self.dt > 0 or self.t_end < 0:
            raise PlantConfigError("scenario needs dt > 0 and t_end >= 0")
        times = [e.time for e in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise PlantConfigError(f"event times must be strictly increasing: {times}")
        if any(t < 0 or t > self.t_end for t in times):
            raise PlantConfigError(f"event times must lie in [0, {self.t_end}]")


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    v_od: np.ndarray
    omega: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    mp_p: np.ndarray
    v_n: np.ndarray
    u_v: np.ndarray
    v_ref: float
    omega_ref: float
    labels: tuple[str, ...]
    status: str = OK
    island_time: float | None = None
    event_log: list[tuple[float, str]] = field(default_factory=list)
    violations: dict = field(default_factory=dict)

    @property
    def e_v(self) -> np.ndarray:
        return self.v_od - self.v_ref

    @property
    def e_omega(self) -> np.ndarray:
        return self.omega - self.omega_ref

    def write_csv(self, path: str | Path) -> None:
        cols = [("V_od", self.v_od), ("w", self.omega), ("P", self.P), ("Q", self.Q), ("mP_P", self.mp_p)]
        header = ["t"] + [f"{name}_{lab}" for name, _ in cols for lab in self.labels]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k, t in enumerate(self.times):
                w.writerow([_fmt(t)] + [_fmt(x) for _, arr in cols for x in arr[k]])

    def write_violations_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["quantity", "samples_outside", "samples_outside_after_grace"])
            for key in ("voltage", "frequency", "any"):
                v = self.violations.get(key, {})
                w.writerow([key, v.get("total", 0), v.get("after_grace", 0)])
            w.writerow(["status", self.status, ""])


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def run_scenario(plant: Plant, scenario: Scenario, gains: ControllerGains, pin: PinningConfig) -> TrajectoryRecord:
    topo = plant.topology
    n = plant.n_dgs
    loads = {ld.id: ld for ld in topo.loads}
    for ev in scenario.events:
        if ev.action == LOAD_ADD:
            if ev.bus is None:
                raise PlantConfigError(f"LOAD_ADD at t={ev.time} needs a bus")
            topo.check_bus(ev.bus)
        elif ev.action == LOAD_REMOVE and ev.bus is not None:
            topo.check_bus(ev.bus)
    check_step(closed_loop_matrix(plant.net, pin), max(gains.c_v, gains.c_omega), scenario.dt)

    islanded = False
    state = plant.grid_connected_state(tuple(loads.values()), gains)
    pending = list(scenario.events)
    steps = int(round(scenario.t_end / scenario.dt))
    every = scenario.record_every
    n_rec = steps // every + 1
    rec = {k: np.empty((n_rec, n)) for k in ("v_od", "omega", "P", "Q", "mp_p", "v_n", "u_v")}
    times = np.empty(n_rec)
    record = TrajectoryRecord(times, *(rec[k] for k in ("v_od", "omega", "P", "Q", "mp_p", "v_n", "u_v")),
                              v_ref=gains.v_ref, omega_ref=gains.omega_ref, labels=plant.net.node_labels)
    v_lim = gains.v_ref
    w_lim = 0.5 * gains.omega_ref
    r = 0
    circuit = None
    for k in range(steps + 1 if steps else 0):
        t = k * scenario.dt
        changed = False
        while pending and pending[0].time <= t + 0.5 * scenario.dt:
            ev = pending.pop(0)
            if ev.action == ISLAND:
                islanded = True
                record.island_time = ev.time
            elif ev.action == LOAD_ADD:
                lid = ev.load_id or f"event@{ev.time:g}"
                if lid in loads:
                    raise PlantConfigError(f"load id {lid!r} already present")
                loads[lid] = Load(lid, ev.bus, ev.P, ev.Q)
            else:
                if ev.load_id not in loads or (ev.bus is not None and loads[ev.load_id].bus != ev.bus):
                    raise PlantConfigError(f"LOAD_REMOVE at t={ev.time}: no load {ev.load_id!r} on bus {ev.bus}")
                del loads[ev.load_id]
            record.event_log.append((ev.time, ev.action))
            changed = True
        if changed or circuit is None:
            current = tuple(loads.values())
            if islanded:
                circuit = plant.circuit(current)
            else:
                circuit = plant.circuit(current, grid=True)
                state = plant.grid_connected_state(current, gains)

        V_od, omega = plant.outputs(state)
        e_v = V_od - gains.v_ref
        e_w = omega - gains.omega_ref
        if not (np.isfinite(state.pack()).all() and np.all(np.abs(e_v) <= v_lim) and np.all(np.abs(e_w) <= w_lim)):
            record.status = UNSTABLE
            break
        if k % every == 0:
            u_v = plant.controls(state, gains, pin)[0] if islanded else np.zeros(n)
            times[r] = t
            for key, val in (("v_od", V_od), ("omega", omega), ("P", state.P), ("Q", state.Q),
                             ("mp_p", plant.m_P * state.P), ("v_n", state.V_n), ("u_v", u_v)):
                rec[key][r] = val
            r += 1
        if k == steps:
            break
        if islanded:
            x = _rk4(plant, state.pack(), gains, pin, circuit, True, scenario.dt)
            state = DGState.unpack(x)

    record.times = times[:r]
    for key in rec:
        setattr(record, key, rec[key][:r])
    record.violations = relay_violations(record, scenario.relay_band)
    return record


def relay_violations(record: TrajectoryRecord, band: RelayBand) -> dict:
    """Count recorded samples with any DG outside the relay band.

    ``after_grace`` ignores the first ``band.cycles`` cycles after islanding.
    """
    v_pu = record.v_od / record.v_ref
    v_bad = ((v_pu < band.v_pu[0]) | (v_pu > band.v_pu[1])).any(axis=1)
    w_bad = ((record.omega < band.omega[0]) | (record.omega > band.omega[1])).any(axis=1)
    grace_end = -math.inf
    if record.island_time is not None:
        grace_end = record.island_time + band.cycles * 2 * math.pi / record.omega_ref
    late = record.times >= grace_end
    out = {}
    for key, bad in (("voltage", v_bad), ("frequency", w_bad), ("any", v_bad | w_bad)):
        out[key] = {"total": int(bad.sum()), "after_grace": int((bad & late).sum())}
    return out


# -- metrics ---------------------------------------------------------------

def is_settled(record: TrajectoryRecord, tail: float = 0.1, rel_tol: float = 1e-3) -> bool:
    """Power outputs flat over the last ``tail`` fraction of the record."""
    if record.status != OK or len(record.times) < 3:
        return False
    start = min(int(len(record.times) * (1 - tail)), len(record.times) - 2)
    window = record.mp_p[start:]
    scale = float(np.abs(record.mp_p[-1]).mean()) or 1.0
    return bool(np.ptp(window, axis=0).max() <= rel_tol * scale)


def power_sharing_error(record: TrajectoryRecord) -> float:
    """max_ij |m_Pi P_i - m_Pj P_j| at the final sample (rad/s)."""
    if not is_settled(record):
        raise NotSettledError("record has not settled; power sharing is undefined")
    final = record.mp_p[-1]
    return float(final.max() - final.min())


@dataclass(frozen=True)
class EventResponse:
    peak_v: float
    peak_omega: float
    recovery_v: float
    recovery_omega: float
    final_v: float
    final_omega: float


def event_response(record: TrajectoryRecord, t_start: float, t_stop: float, band: float = 0.01) -> EventResponse:
    """Peak deviation and recovery time inside ``[t_start, t_stop)``.

    Recovery is the time from ``t_start`` until the max-norm error stays
    within ``band`` times its peak in the window; ``inf`` if it does not.
    """
    mask = (record.times >= t_start - 1e-12) & (record.times < t_stop - 1e-12)
    t = record.times[mask]
    out = []
    for err in (record.e_v[mask], record.e_omega[mask]):
        norm = np.abs(err).max(axis=1)
        peak = float(norm.max()) if len(norm) else 0.0
        outside = np.flatnonzero(norm > band * peak)
        if peak <= PEAK_FLOOR or not len(outside):
            rec = 0.0
        elif outside[-1] == len(t) - 1:
            rec = math.inf
        else:
            rec = float(t[outside[-1] + 1] - t_start)
        out.append((peak, rec, float(norm[-1]) if len(norm) else 0.0))
    (pv, rv, fv), (pw, rw, fw) = out
    return EventResponse(pv, pw, rv, rw, fv, fw)


def islanding_snapshot(plant: Plant, gains: ControllerGains, t_settle: float = 1.0, dt: float = 1e-4):
    """Regulation errors left by droop alone after islanding at rated load.

    Starts from the grid-connected point, drops the grid and integrates with
    frozen set points; the settled errors are what the secondary control
    has to remove.
    """
    loads = plant.topology.loads
    state = plant.grid_connected_state(loads, gains)
    circuit = plant.circuit(loads)
    dummy = PinningConfig.uniform([0], 1.0, plant.n_dgs)
    x = state.pack()
    for _ in range(int(round(t_settle / dt))):
        x = _rk4(plant, x, gains, dummy, circuit, False, dt)
    V_od, omega = plant.outputs(DGState.unpack(x))
    return V_od - gains.v_ref, omega - gains.omega_ref


def with_loads(topology: PlantTopology, loads) -> PlantTopology:
    return replace(topology, loads=tuple(loads))
