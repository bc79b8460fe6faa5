"""YAML experiment configuration.

One document describes the network, gains, pinning, selection, simulation
and (optionally) the electrical plant and scenario. ``resolve`` turns it
into typed objects; ``ResolvedConfig.to_document`` writes the fully
expanded form back out (inline network, every default filled in) so a run
can be replayed from its manifest alone.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from . import plant as pl
from .consensus import ControllerGains
from .netgraph import CommNetwork, NetworkError, build_network, load_network
from .spectral import LOWER_READINGS, UPPER_READINGS

SELECTION_MODES = ("fixed-m", "target-rate", "exhaustive")
SIM_MODES = ("errors", "plant")

DEFAULT_LINES = [
    [1, 2, 0.023, 0.010],
    [2, 3, 0.035, 0.058],
    [3, 4, 0.023, 0.010],
    [4, 5, 0.035, 0.058],
    [5, 1, 0.023, 0.010],
]
DEFAULT_TYPES = {
    "I": {"m_P": 9.4e-5, "n_Q": 1.3e-3, "omega_c": 31.41},
    "II": {"m_P": 12.5e-5, "n_Q": 1.5e-3, "omega_c": 31.41},
}
DEFAULT_COUPLING = [0.03, 0.11]


class ConfigError(ValueError):
    pass


# -- YAML with line numbers --------------------------------------------------

class _Map(dict):
    line = 0
    lines: dict


class _Seq(list):
    line = 0
    lines: list


class _Loader(yaml.SafeLoader):
    pass


def _construct_map(loader, node):
    loader.flatten_mapping(node)
    out = _Map()
    out.line = node.start_mark.line + 1
    out.lines = {}
    for k_node, v_node in node.value:
        key = loader.construct_object(k_node, deep=True)
        out[key] = loader.construct_object(v_node, deep=True)
        out.lines[key] = k_node.start_mark.line + 1
    return out


def _construct_seq(loader, node):
    out = _Seq(loader.construct_object(v, deep=True) for v in node.value)
    out.line = node.start_mark.line + 1
    out.lines = [v.start_mark.line + 1 for v in node.value]
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_map)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_seq)


def parse_document(text: str, source: str = "<config>") -> dict:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from exc
    if doc is None:
        doc = _Map()
        doc.lines = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}:1: top level must be a mapping")
    return doc


class _Node:
    """Typed accessor over one mapping that knows its path and line numbers."""

    def __init__(self, data, path: str, source: str):
        self.data = data if data is not None else {}
        self.path = path
        self.source = source

    def where(self, key=None) -> str:
        line = getattr(self.data, "lines", {}).get(key) if key is not None else None
        line = line or getattr(self.data, "line", 0)
        loc = f"{self.source}:{line}" if line else self.source
        name = f"{self.path}.{key}" if key is not None and self.path else (key or self.path or "<root>")
        return f"{loc}: field '{name}'"

    def fail(self, key, msg):
        raise ConfigError(f"{self.where(key)}: {msg}")

    def has(self, key) -> bool:
        return key in self.data and self.data[key] is not None

    def sub(self, key) -> "_Node":
        val = self.data.get(key)
        if val is not None and not isinstance(val, dict):
            self.fail(key, "expected a mapping")
        return _Node(val, f"{self.path}.{key}" if self.path else key, self.source)

    def number(self, key, default=None, positive=False, nonneg=False, integer=False):
        if not self.has(key):
            if default is None:
                self.fail(key, "required")
            return default
        val = self.data[key]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.fail(key, f"expected a number, got {val!r}")
        if integer and int(val) != val:
            self.fail(key, f"expected an integer, got {val!r}")
        if positive and not val > 0:
            self.fail(key, f"must be > 0, got {val!r}")
        if nonneg and val < 0:
            self.fail(key, f"must be >= 0, got {val!r}")
        return int(val) if integer else float(val)

    def choice(self, key, options, default=None):
        val = self.data.get(key, default)
        if val is None:
            return None
        if val not in options:
            self.fail(key, f"expected one of {', '.join(map(str, options))}, got {val!r}")
        return val

    def seq(self, key, default=None):
        if not self.has(key):
            return default
        val = self.data[key]
        if not isinstance(val, list):
            self.fail(key, "expected a list")
        return val

    def check_keys(self, allowed):
        for key in self.data:
            if key not in allowed:
                self.fail(key, f"unknown key (allowed: {', '.join(allowed)})")


# -- resolved form -----------------------------------------------------------

@dataclass
class PlantSetup:
    topology: pl.PlantTopology
    dgs: tuple[pl.DGParams, ...]
    scenario: pl.Scenario
    document: dict


@dataclass
class ResolvedConfig:
    network: CommNetwork
    gains: ControllerGains
    pin_gain: float = 0.2
    pinning: list[int] | None = None
    candidates: list[list[int]] | None = None
    selection_mode: str = "target-rate"
    m: int | None = None
    lambda_star: float | None = None
    bounds: bool = True
    upper_reading: str = "two_block"
    lower_reading: str = "layer_chain"
    sim_mode: str = "errors"
    dt: float = 1e-4
    t_end: float = 1.0
    record_every: int = 10
    band: float = 0.01
    initial_errors: Any = None
    plant: PlantSetup | None = None
    source: str = "<config>"
    extra: dict = field(default_factory=dict)

    def to_document(self) -> dict:
        net = self.network
        labels = list(net.node_labels)
        doc = {
            "network": {
                "n": net.n_nodes,
                "labels": labels,
                "edges": [[a + 1, b + 1] for a, b in net.edges()],
            },
            "gains": {
                "c_v": self.gains.c_v,
                "c_omega": self.gains.c_omega,
                "c_p": self.gains.c_p,
                "v_ref": self.gains.v_ref,
                "omega_ref": self.gains.omega_ref,
            },
            "pinning": {"gain": self.pin_gain},
            "selection": {"mode": self.selection_mode},
            "analysis": {
                "bounds": self.bounds,
                "upper_reading": self.upper_reading,
                "lower_reading": self.lower_reading,
            },
            "simulation": {
                "mode": self.sim_mode,
                "dt": self.dt,
                "t_end": self.t_end,
                "record_every": self.record_every,
                "band": self.band,
            },
        }
        if self.pinning is not None:
            doc["pinning"]["set"] = [labels[i] for i in self.pinning]
        if self.candidates is not None:
            doc["pinning"]["candidates"] = [[labels[i] for i in c] for c in self.candidates]
        if self.m is not None:
            doc["selection"]["m"] = self.m
        if self.lambda_star is not None:
            doc["selection"]["lambda_star"] = self.lambda_star
        if self.initial_errors is not None:
            doc["simulation"]["initial_errors"] = copy.deepcopy(self.initial_errors)
        if self.plant is not None:
            doc["plant"] = copy.deepcopy(self.plant.document["plant"])
            doc["scenario"] = copy.deepcopy(self.plant.document["scenario"])
        return _plain(doc)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_plain(v) for v in obj]
    return obj


def dump_document(doc: dict) -> str:
    return yaml.safe_dump(_plain(doc), sort_keys=False, default_flow_style=None)


TOP_KEYS = ("network", "gains", "pinning", "selection", "analysis", "simulation", "plant", "scenario")


def load_config(path: str | Path, overrides: dict | None = None) -> ResolvedConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return resolve(parse_document(text, str(path)), base_dir=path.parent, source=str(path), overrides=overrides)


def resolve(doc: dict, base_dir: Path | None = None, source: str = "<config>",
            overrides: dict | None = None) -> ResolvedConfig:
    """Build typed objects from a parsed document. ``overrides`` (from the
    command line) take precedence over document fields."""
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    root = _Node(doc, "", source)
    root.check_keys(TOP_KEYS)
    net = _resolve_network(root.sub("network"), base_dir)

    g = root.sub("gains")
    g.check_keys(("c_v", "c_omega", "c_p", "v_ref", "omega_ref"))
    gains = ControllerGains(
        c_v=g.number("c_v", 400.0, positive=True),
        c_omega=g.number("c_omega", 400.0, positive=True),
        c_p=g.number("c_p", 400.0, nonneg=True),
        v_ref=g.number("v_ref", 380.0, positive=True),
        omega_ref=g.number("omega_ref", 314.15, positive=True),
    )

    p = root.sub("pinning")
    p.check_keys(("gain", "set", "candidates"))
    pin_gain = float(ov.get("gain", p.number("gain", 0.2, positive=True)))
    if not pin_gain > 0:
        raise ConfigError(f"--gain must be > 0, got {pin_gain}")
    pinning = None
    if "pinning" in ov:
        pinning = node_list(ov["pinning"], net, lambda msg: ConfigError(f"--pinning: {msg}"))
    elif p.has("set"):
        pinning = node_list(p.seq("set"), net, lambda msg: ConfigError(f"{p.where('set')}: {msg}"))
    candidates = None
    if p.has("candidates"):
        candidates = []
        for c in p.seq("candidates"):
            items = c if isinstance(c, list) else [c]
            candidates.append(node_list(items, net, lambda msg: ConfigError(f"{p.where('candidates')}: {msg}")))

    s = root.sub("selection")
    s.check_keys(("mode", "m", "lambda_star"))
    sel_mode = s.choice("mode", SELECTION_MODES, "target-rate")
    m = s.number("m", integer=True, positive=True) if s.has("m") else None
    lam = s.number("lambda_star", positive=True) if s.has("lambda_star") else None
    m = ov.get("m", m)
    lam = ov.get("lambda_star", lam)

    a = root.sub("analysis")
    a.check_keys(("bounds", "upper_reading", "lower_reading"))
    bounds = a.data.get("bounds", True)
    if not isinstance(bounds, bool):
        a.fail("bounds", "expected true or false")

    sim = root.sub("simulation")
    sim.check_keys(("mode", "dt", "t_end", "record_every", "band", "initial_errors"))
    cfg = ResolvedConfig(
        network=net,
        gains=gains,
        pin_gain=pin_gain,
        pinning=pinning,
        candidates=candidates,
        selection_mode=sel_mode,
        m=m,
        lambda_star=lam,
        bounds=bounds,
        upper_reading=a.choice("upper_reading", UPPER_READINGS, "two_block"),
        lower_reading=a.choice("lower_reading", LOWER_READINGS, "layer_chain"),
        sim_mode=sim.choice("mode", SIM_MODES, "errors"),
        dt=float(ov.get("dt", sim.number("dt", 1e-4, positive=True))),
        t_end=float(ov.get("t_end", sim.number("t_end", 1.0, nonneg=True))),
        record_every=sim.number("record_every", 10, positive=True, integer=True),
        band=sim.number("band", 0.01, positive=True),
        initial_errors=_initial_errors(sim, net.n_nodes),
        source=source,
    )
    if not cfg.dt > 0 or cfg.t_end < 0:
        raise ConfigError(f"need dt > 0 and t_end >= 0 (got dt={cfg.dt}, t_end={cfg.t_end})")
    if not 0 < cfg.band < 1:
        sim.fail("band", "must be in (0, 1)")
    if root.has("plant"):
        cfg.plant = _resolve_plant(root, net, cfg, truncate="t_end" in ov)
    elif root.has("scenario"):
        root.fail("scenario", "a scenario needs a 'plant' section")
    return cfg


def _resolve_network(node: _Node, base_dir: Path | None) -> CommNetwork:
    node.check_keys(("file", "n", "labels", "edges", "directed"))
    if node.has("file"):
        ref = node.data["file"]
        candidates = [Path(ref)] if Path(ref).is_absolute() else [(base_dir or Path.cwd()) / ref]
        candidates.append(Path(str(resources.files("gridpin") / "data" / ref)))
        for cand in candidates:
            if cand.is_file():
                try:
                    return load_network(cand)
                except NetworkError as exc:
                    raise ConfigError(str(exc)) from exc
        node.fail("file", f"network file {ref!r} not found")
    if not node.has("n"):
        node.fail(None, "give either 'file' or an inline 'n' with 'edges'")
    n = node.number("n", integer=True, positive=True)
    labels = node.seq("labels", [])
    if labels and len(labels) != n:
        node.fail("labels", f"expected {n} labels, got {len(labels)}")
    raw = node.seq("edges", [])
    directed = node.data.get("directed", True)
    edges = []
    seq_lines = getattr(raw, "lines", [None] * len(raw))
    for k, e in enumerate(raw):
        line = seq_lines[k] if k < len(seq_lines) else None
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) and not isinstance(x, bool) for x in e)):
            raise ConfigError(f"{node.source}:{line}: field 'network.edges[{k}]': expected [from, to] integers")
        a, b = e[0] - 1, e[1] - 1
        edges.append((a, b))
        if not directed:
            edges.append((b, a))
    try:
        return build_network(edges, n, [str(x) for x in labels])
    except NetworkError as exc:
        raise ConfigError(f"{node.where('edges')}: {exc}") from exc


def node_list(items, net: CommNetwork, err) -> list[int]:
    if isinstance(items, str):
        items = [x for x in items.replace(",", " ").split() if x]
    out = []
    for it in items:
        try:
            if isinstance(it, int) and not isinstance(it, bool):
                if not 1 <= it <= net.n_nodes:
                    raise KeyError(it)
                idx = it - 1
            elif isinstance(it, str) and it.isdigit():
                idx = int(it) - 1
                if not 0 <= idx < net.n_nodes:
                    raise KeyError(it)
            else:
                idx = net.index(str(it))
        except (KeyError, ValueError, NetworkError):
            raise err(f"unknown node {it!r}") from None
        if idx in out:
            raise err(f"node {it!r} listed twice")
        out.append(idx)
    return out


def _initial_errors(sim: _Node, n: int):
    if not sim.has("initial_errors"):
        return None
    val = sim.data["initial_errors"]
    if val in ("snapshot", "synthetic"):
        return val
    if isinstance(val, dict):
        sub = sim.sub("initial_errors")
        sub.check_keys(("e_v", "e_omega"))
        out = {}
        for key in ("e_v", "e_omega"):
            vec = sub.seq(key)
            if vec is None or len(vec) != n or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in vec):
                sub.fail(key, f"expected a list of {n} numbers")
            out[key] = [float(x) for x in vec]
        return out
    sim.fail("initial_errors", "expected 'snapshot', 'synthetic' or a mapping with e_v and e_omega")


def _pair(node: _Node, key, default, what="[R, X] in ohm"):
    val = node.data.get(key, default)
    if not (isinstance(val, list) and len(val) == 2 and all(isinstance(x, (int, float)) for x in val)):
        node.fail(key, f"expected {what}")
    return [float(val[0]), float(val[1])]


def _resolve_plant(root: _Node, net: CommNetwork, cfg: ResolvedConfig, truncate: bool = False) -> PlantSetup:
    """``truncate`` drops events after t_end (a shortened horizon from the command line)."""
    p = root.sub("plant")
    p.check_keys(("buses", "pcc_bus", "grid_impedance", "lines", "loads", "dgs", "types"))
    n_buses = p.number("buses", integer=True, positive=True)

    def bus(node, key, value):
        if isinstance(value, bool) or not isinstance(value, int) or not 1 <= value <= n_buses:
            node.fail(key, f"bus {value!r} outside 1..{n_buses}")
        return value - 1

    types = copy.deepcopy(DEFAULT_TYPES)
    tnode = p.sub("types")
    for name in tnode.data:
        t = tnode.sub(name)
        t.check_keys(("m_P", "n_Q", "omega_c"))
        types[str(name)] = {
            "m_P": t.number("m_P", positive=True),
            "n_Q": t.number("n_Q", positive=True),
            "omega_c": t.number("omega_c", 31.41, positive=True),
        }

    lines_doc = []
    lines = []
    raw_lines = p.seq("lines", DEFAULT_LINES if n_buses == 5 else None)
    if raw_lines is None:
        p.fail("lines", "required unless the plant has the default 5 buses")
    for k, ln in enumerate(raw_lines):
        if not (isinstance(ln, list) and len(ln) == 4):
            p.fail("lines", f"entry {k}: expected [bus_a, bus_b, R, X]")
        a, b = bus(p, "lines", ln[0]), bus(p, "lines", ln[1])
        lines.append(pl.Line(a, b, float(ln[2]), float(ln[3])))
        lines_doc.append([a + 1, b + 1, float(ln[2]), float(ln[3])])

    loads, loads_doc = [], []
    for k, ld in enumerate(p.seq("loads", [])):
        node = _Node(ld, f"plant.loads[{k}]", root.source)
        if not isinstance(ld, dict):
            p.fail("loads", f"entry {k}: expected a mapping")
        node.check_keys(("id", "bus", "P", "Q"))
        lid = str(ld.get("id", f"Load{k + 1}"))
        b = bus(node, "bus", ld.get("bus"))
        P, Q = node.number("P", nonneg=True), node.number("Q", 0.0)
        loads.append(pl.Load(lid, b, P, Q))
        loads_doc.append({"id": lid, "bus": b + 1, "P": P, "Q": Q})

    raw_dgs = p.seq("dgs")
    if raw_dgs is None:
        raw_dgs = [{"bus": i + 1} for i in range(net.n_nodes)]
    if len(raw_dgs) != net.n_nodes:
        p.fail("dgs", f"expected {net.n_nodes} DGs to match the communication network, got {len(raw_dgs)}")
    dgs, dg_bus, coupling, dgs_doc = [], [], [], []
    for k, d in enumerate(raw_dgs):
        node = _Node(d, f"plant.dgs[{k}]", root.source)
        node.check_keys(("bus", "type", "coupling"))
        tname = str(d.get("type", "I"))
        if tname not in types:
            node.fail("type", f"unknown DG type {tname!r} (known: {', '.join(types)})")
        t = types[tname]
        dgs.append(pl.DGParams(t["m_P"], t["n_Q"], t["omega_c"], tname))
        dg_bus.append(bus(node, "bus", d.get("bus")))
        rx = _pair(node, "coupling", DEFAULT_COUPLING)
        coupling.append(complex(*rx))
        dgs_doc.append({"bus": dg_bus[-1] + 1, "type": tname, "coupling": rx})

    pcc = p.data.get("pcc_bus", 1)
    pcc_idx = bus(p, "pcc_bus", pcc)
    grid_z = _pair(p, "grid_impedance", [0.01, 0.05])
    try:
        topo = pl.PlantTopology(n_buses, tuple(lines), tuple(loads), tuple(dg_bus), tuple(coupling),
                                pcc_bus=pcc_idx, grid_impedance=complex(*grid_z), v_nominal=cfg.gains.v_ref)
    except pl.PlantConfigError as exc:
        raise ConfigError(f"{p.where(None)}: {exc}") from exc

    sc = root.sub("scenario")
    sc.check_keys(("events", "relay_band"))
    events, events_doc = [], []
    raw_events = sc.seq("events", [{"time": 0.0, "action": pl.ISLAND}])
    for k, ev in enumerate(raw_events):
        node = _Node(ev, f"scenario.events[{k}]", root.source)
        if not isinstance(ev, dict):
            sc.fail("events", f"entry {k}: expected a mapping")
        node.check_keys(("time", "action", "bus", "P", "Q", "id"))
        action = node.choice("action", pl.ACTIONS)
        if action is None:
            node.fail("action", "required")
        t = node.number("time", nonneg=True) if node.has("time") else node.fail("time", "required")
        b = bus(node, "bus", ev["bus"]) if ev.get("bus") is not None else None
        if action == pl.LOAD_ADD and b is None:
            node.fail("bus", "LOAD_ADD needs a bus")
        if action == pl.LOAD_REMOVE and ev.get("id") is None:
            node.fail("id", "LOAD_REMOVE needs the id of the load to drop")
        P = node.number("P", 0.0, nonneg=True)
        Q = node.number("Q", 0.0)
        lid = str(ev["id"]) if ev.get("id") is not None else None
        events.append(pl.Event(t, action, b, P, Q, lid))
        entry = {"time": t, "action": action}
        if b is not None:
            entry["bus"] = b + 1
        if action == pl.LOAD_ADD:
            entry.update(P=P, Q=Q)
        if lid is not None:
            entry["id"] = lid
        events_doc.append(entry)
    if truncate:
        kept = sum(1 for e in events if e.time <= cfg.t_end)
        if kept < len(events):
            cfg.extra["dropped_events"] = len(events) - kept
            events, events_doc = events[:kept], events_doc[:kept]
    rb = sc.sub("relay_band")
    rb.check_keys(("v_pu", "omega", "cycles"))
    band = pl.RelayBand(
        v_pu=tuple(_pair(rb, "v_pu", [0.88, 1.1], "[low, high] in p.u.")),
        omega=tuple(_pair(rb, "omega", [295.3, 317.3], "[low, high] in rad/s")),
        cycles=rb.number("cycles", 20, nonneg=True, integer=True),
    )
    try:
        scenario = pl.Scenario(cfg.t_end, cfg.dt, tuple(events), band, cfg.record_every)
    except pl.PlantConfigError as exc:
        raise ConfigError(f"{sc.where('events')}: {exc}") from exc
    document = {
        "plant": {
            "buses": n_buses,
            "pcc_bus": pcc_idx + 1,
            "grid_impedance": grid_z,
            "lines": lines_doc,
            "loads": loads_doc,
            "dgs": dgs_doc,
            "types": types,
        },
        "scenario": {
            "events": events_doc,
            "relay_band": {"v_pu": list(band.v_pu), "omega": list(band.omega), "cycles": band.cycles},
        },
    }
    return PlantSetup(topo, tuple(dgs), scenario, document)
