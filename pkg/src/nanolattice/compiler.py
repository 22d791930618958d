"""Compile a target lattice into drive tones and mode assignments.

Input is a JSON lattice spec (schema in docs/lattice_spec_schema.md); output is
a :class:`DrivePlan` that serializes losslessly to JSON. Floats are written
with Python's shortest round-trip representation, so parse(emit(x)) == x.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Any

from .models import DriveTone, LatticeGraph, elimination_rates
from .operators import ModeKind, ModeSpec, OperatorError

DEFAULT_ADIABATICITY = 0.1
GUARD_FACTOR = 10.0


class SpecError(ValueError):
    """Malformed or inconsistent lattice spec / plan document."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + loc)
        self.line, self.column = line, column


class InfeasibleError(ValueError):
    def __init__(self, message: str, report: "GuardBandReport | None" = None):
        super().__init__(message)
        self.report = report


# spec types -------------------------------------------------------------------

@dataclass(frozen=True)
class PairSpec:
    label: str
    members: tuple[str, str]
    s: float


@dataclass(frozen=True)
class HardwareRegistry:
    modes: tuple[ModeSpec, ...]
    g: tuple[tuple[str, str, float], ...] = ()       # (mech, aux, g)
    pairs: tuple[PairSpec, ...] = ()
    f: tuple[tuple[str, str, float], ...] = ()       # (mech, pair label, f)

    def mode(self, label: str) -> ModeSpec:
        for m in self.modes:
            if m.label == label:
                return m
        raise KeyError(label)

    def pair(self, label: str) -> PairSpec:
        for p in self.pairs:
            if p.label == label:
                return p
        raise KeyError(label)

    def g_value(self, mech: str, aux: str) -> float:
        return next((v for m, a, v in self.g if m == mech and a == aux), 0.0)

    def f_value(self, mech: str, pair: str) -> float:
        return next((v for m, p, v in self.f if m == mech and p == pair), 0.0)


@dataclass(frozen=True)
class Constraints:
    guard_band: float | None = None
    max_beta: float = 1.0
    max_alpha: float = 10.0
    adiabaticity: float = DEFAULT_ADIABATICITY
    min_hop_quality: float = 0.0
    min_kerr_quality: float = 0.0
    default_detuning: float | None = None
    default_drive_detuning: float | None = None


@dataclass(frozen=True)
class NodeOptions:
    drive_detuning: float | None = None
    modulation: float = 0.0


@dataclass(frozen=True)
class LatticeSpec:
    graph: LatticeGraph
    hardware: HardwareRegistry
    constraints: Constraints = Constraints()
    edge_detunings: tuple[tuple[tuple[str, str], float], ...] = ()
    node_options: tuple[tuple[str, NodeOptions], ...] = ()

    def edge_detuning(self, edge: tuple[str, str]) -> float | None:
        key = frozenset(edge)
        return next((v for e, v in self.edge_detunings if frozenset(e) == key), None)

    def options(self, node: str) -> NodeOptions:
        return dict(self.node_options).get(node, NodeOptions())


# plan types ----------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeAssignment:
    nodes: tuple[str, str]
    aux: str
    detuning: float
    hop_phase: float
    tone_indices: tuple[int, int]
    coupling: float       # g|beta|, equal on both legs
    lam: float
    gamma_prime: float


@dataclass(frozen=True)
class SiteAssignment:
    node: str
    pair: str
    members: tuple[str, str]
    s: float
    resonance_detuning: float    # Delta in 2 s = omega_n + Delta (+ modulation)
    modulation: float
    qubit_delta: float           # Delta of the qubit Hamiltonian, half the above
    f: float
    epsilon: float
    drive_detuning: float
    alpha: float
    tone_index: int
    chi: float
    Gamma: float


@dataclass(frozen=True)
class GuardBandEntry:
    mech: str
    aux: str
    tone: int
    detuning: float


@dataclass(frozen=True)
class GuardBandReport:
    spurious: tuple[GuardBandEntry, ...]
    intended: tuple[GuardBandEntry, ...]
    minimum: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.minimum >= self.threshold

    def worst(self) -> GuardBandEntry | None:
        return min(self.spurious, key=lambda e: e.detuning, default=None)

    def describe(self) -> str:
        w = self.worst()
        if w is None:
            return "guard band: no spurious triples"
        status = "ok" if self.passed else "VIOLATION"
        return (f"guard band {status}: closest spurious triple ({w.mech}, {w.aux}, tone {w.tone}) "
                f"at {w.detuning:.6g} rad/s, threshold {self.threshold:.6g} rad/s")


@dataclass(frozen=True)
class DrivePlan:
    tones: tuple[DriveTone, ...] = ()
    edges: tuple[EdgeAssignment, ...] = ()
    sites: tuple[SiteAssignment, ...] = ()
    guard_band: GuardBandReport | None = None

    def predicted_rates(self) -> dict[str, dict[str, float]]:
        out = {}
        for e in self.edges:
            out[f"{e.nodes[0]}-{e.nodes[1]}"] = {"lambda": e.lam, "gamma_prime": e.gamma_prime}
        for s in self.sites:
            out[s.node] = {"chi": s.chi, "Gamma": s.Gamma}
        return out

    def max_rate(self) -> float:
        rates = [abs(e.lam) for e in self.edges] + [abs(s.chi) for s in self.sites]
        return max(rates, default=0.0)


# parsing ------------------------------------------------------------------------------

def _obj(x, path: str, required=(), optional=()) -> dict:
    if not isinstance(x, dict):
        raise SpecError(f"{path}: expected an object")
    unknown = set(x) - set(required) - set(optional)
    if unknown:
        raise SpecError(f"{path}: unknown field(s) {sorted(unknown)}")
    missing = [k for k in required if k not in x]
    if missing:
        raise SpecError(f"{path}: missing field(s) {missing}")
    return x


def _num(x, path: str, minimum: float | None = None, strict: bool = False) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise SpecError(f"{path}: expected a number")
    v = float(x)
    if not math.isfinite(v):
        raise SpecError(f"{path}: must be finite")
    if minimum is not None and (v < minimum or (strict and v == minimum)):
        raise SpecError(f"{path}: must be {'>' if strict else '>='} {minimum}")
    return v


def _list(x, path: str) -> list:
    if not isinstance(x, list):
        raise SpecError(f"{path}: expected a list")
    return x


def _str(x, path: str) -> str:
    if not isinstance(x, str) or not x:
        raise SpecError(f"{path}: expected a non-empty string")
    return x


def _loads(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"syntax error: {exc.msg}", exc.lineno, exc.colno) from None


def parse_lattice_spec(text: str) -> LatticeSpec:
    doc = _obj(_loads(text), "document", ("hardware", "lattice"), ("constraints",))
    hw = _parse_hardware(doc["hardware"])
    graph, edge_det, node_opts = _parse_lattice(doc["lattice"], hw)
    cons = _parse_constraints(doc.get("constraints", {}))
    return LatticeSpec(graph, hw, cons, edge_det, node_opts)


def _parse_hardware(x) -> HardwareRegistry:
    h = _obj(x, "hardware", ("modes",), ("g", "pairs", "f"))
    modes = []
    for i, m in enumerate(_list(h["modes"], "hardware.modes")):
        path = f"hardware.modes[{i}]"
        _obj(m, path, ("label", "kind", "frequency", "truncation"), ("damping",))
        kind = m["kind"]
        if kind not in [k.value for k in ModeKind]:
            raise SpecError(f"{path}.kind: unknown kind {kind!r}")
        trunc = m["truncation"]
        if isinstance(trunc, bool) or not isinstance(trunc, int):
            raise SpecError(f"{path}.truncation: expected an integer")
        if trunc < 2:
            raise SpecError(f"{path}.truncation: must be >= 2, got {trunc}")
        try:
            modes.append(ModeSpec(_str(m["label"], f"{path}.label"), ModeKind(kind),
                                  _num(m["frequency"], f"{path}.frequency", 0, True),
                                  _num(m.get("damping", 0.0), f"{path}.damping", 0), trunc))
        except OperatorError as exc:
            raise SpecError(f"{path}: {exc}") from None
    labels = [m.label for m in modes]
    if len(set(labels)) != len(labels):
        raise SpecError("hardware.modes: duplicate mode labels")
    kinds = {m.label: m.kind for m in modes}

    pairs = []
    for i, p in enumerate(_list(h.get("pairs", []), "hardware.pairs")):
        path = f"hardware.pairs[{i}]"
        _obj(p, path, ("label", "members", "s"))
        members = _list(p["members"], f"{path}.members")
        if len(members) != 2 or members[0] == members[1]:
            raise SpecError(f"{path}.members: need two distinct mode labels")
        for mm in members:
            if kinds.get(mm) is not ModeKind.AUXILIARY_PAIR_MEMBER:
                raise SpecError(f"{path}.members: {mm!r} is not an auxiliary_pair_member mode")
        a, b = (modes[labels.index(mm)] for mm in members)
        if a.frequency != b.frequency or a.damping_rate != b.damping_rate:
            raise SpecError(f"{path}: members must share frequency and damping")
        pairs.append(PairSpec(_str(p["label"], f"{path}.label"), (members[0], members[1]),
                              _num(p["s"], f"{path}.s")))
    plabels = [p.label for p in pairs]
    if len(set(plabels)) != len(plabels):
        raise SpecError("hardware.pairs: duplicate pair labels")
    used = [mm for p in pairs for mm in p.members]
    if len(set(used)) != len(used):
        raise SpecError("hardware.pairs: a mode belongs to more than one pair")

    g = []
    for i, e in enumerate(_list(h.get("g", []), "hardware.g")):
        path = f"hardware.g[{i}]"
        _obj(e, path, ("mech", "aux", "value"))
        if kinds.get(e["mech"]) is not ModeKind.MECHANICAL:
            raise SpecError(f"{path}.mech: unknown mechanical mode {e['mech']!r}")
        if kinds.get(e["aux"]) is not ModeKind.AUXILIARY:
            raise SpecError(f"{path}.aux: unknown auxiliary mode {e['aux']!r}")
        g.append((e["mech"], e["aux"], _num(e["value"], f"{path}.value")))
    if len({(m, a) for m, a, _ in g}) != len(g):
        raise SpecError("hardware.g: duplicate (mech, aux) entry")

    f = []
    for i, e in enumerate(_list(h.get("f", []), "hardware.f")):
        path = f"hardware.f[{i}]"
        _obj(e, path, ("mech", "pair", "value"))
        if kinds.get(e["mech"]) is not ModeKind.MECHANICAL:
            raise SpecError(f"{path}.mech: unknown mechanical mode {e['mech']!r}")
        if e["pair"] not in plabels:
            raise SpecError(f"{path}.pair: unknown pair {e['pair']!r}")
        f.append((e["mech"], e["pair"], _num(e["value"], f"{path}.value")))
    if len({(m, p) for m, p, _ in f}) != len(f):
        raise SpecError("hardware.f: duplicate (mech, pair) entry")
    return HardwareRegistry(tuple(modes), tuple(g), tuple(pairs), tuple(f))


def _parse_lattice(x, hw: HardwareRegistry):
    lat = _obj(x, "lattice", ("nodes",), ("edges",))
    mech = {m.label for m in hw.modes if m.kind is ModeKind.MECHANICAL}
    nodes, opts = [], []
    for i, n in enumerate(_list(lat["nodes"], "lattice.nodes")):
        path = f"lattice.nodes[{i}]"
        _obj(n, path, ("label",), ("xi", "drive_detuning", "modulation"))
        lbl = _str(n["label"], f"{path}.label")
        if lbl not in mech:
            raise SpecError(f"{path}.label: {lbl!r} is not a mechanical mode of the hardware")
        nodes.append((lbl, _num(n.get("xi", 0.0), f"{path}.xi")))
        dd = n.get("drive_detuning")
        o = NodeOptions(None if dd is None else _num(dd, f"{path}.drive_detuning"),
                        _num(n.get("modulation", 0.0), f"{path}.modulation"))
        if o != NodeOptions():
            opts.append((lbl, o))
    edges, det = [], []
    known = {lbl for lbl, _ in nodes}
    for i, e in enumerate(_list(lat.get("edges", []), "lattice.edges")):
        path = f"lattice.edges[{i}]"
        _obj(e, path, ("nodes", "zeta"), ("detuning",))
        pair = _list(e["nodes"], f"{path}.nodes")
        if len(pair) != 2:
            raise SpecError(f"{path}.nodes: need exactly two node labels")
        for lbl in pair:
            if lbl not in known:
                raise SpecError(f"{path}.nodes: unknown node {lbl!r}")
        edges.append(((pair[0], pair[1]), _num(e["zeta"], f"{path}.zeta")))
        if "detuning" in e:
            det.append(((pair[0], pair[1]), _num(e["detuning"], f"{path}.detuning", 0, True)))
    try:
        graph = LatticeGraph(tuple(nodes), tuple(edges))
    except ValueError as exc:
        raise SpecError(f"lattice: {exc}") from None
    return graph, tuple(det), tuple(opts)


def _parse_constraints(x) -> Constraints:
    names = [f for f in Constraints.__dataclass_fields__]
    c = _obj(x, "constraints", (), names)
    kw = {}
    for k, v in c.items():
        if v is None and k in ("guard_band", "default_detuning", "default_drive_detuning"):
            kw[k] = None
        else:
            kw[k] = _num(v, f"constraints.{k}", 0)
    return Constraints(**kw)


def emit_lattice_spec(spec: LatticeSpec) -> str:
    hw = spec.hardware
    modes = [{"label": m.label, "kind": m.kind.value, "frequency": m.frequency,
              "damping": m.damping_rate, "truncation": m.truncation_dim} for m in hw.modes]
    doc = {"hardware": {"modes": modes,
                        "g": [{"mech": m, "aux": a, "value": v} for m, a, v in hw.g],
                        "pairs": [{"label": p.label, "members": list(p.members), "s": p.s}
                                  for p in hw.pairs],
                        "f": [{"mech": m, "pair": p, "value": v} for m, p, v in hw.f]}}
    opts = dict(spec.node_options)
    nodes = []
    for lbl, xi in spec.graph.nodes:
        n = {"label": lbl, "xi": xi}
        if lbl in opts:
            if opts[lbl].drive_detuning is not None:
                n["drive_detuning"] = opts[lbl].drive_detuning
            if opts[lbl].modulation:
                n["modulation"] = opts[lbl].modulation
        nodes.append(n)
    edges = []
    for (a, b), z in spec.graph.edges:
        e = {"nodes": [a, b], "zeta": z}
        d = spec.edge_detuning((a, b))
        if d is not None:
            e["detuning"] = d
        edges.append(e)
    doc["lattice"] = {"nodes": nodes, "edges": edges}
    doc["constraints"] = asdict(spec.constraints)
    return json.dumps(doc, indent=2) + "\n"


# compilation ----------------------------------------------------------------------------------

def _edge_key(edge: tuple[str, str]) -> tuple[str, str]:
    a, b = edge
    return (a, b) if a <= b else (b, a)


def compile_drive_plan(spec: LatticeSpec, guard_band: float | None = None) -> DrivePlan:
    """Greedy deterministic assignment of auxiliaries and tones.

    Edges are handled in lexicographic order of their (sorted) node labels and
    take the lowest-frequency free auxiliary coupled to both nodes. Each edge
    gets one tone per mechanical mode, both at detuning Δω from the red
    sideband of the shared auxiliary; the second tone's phase makes the hop
    real (hop_phase 0) for ζ > 0, or π for ζ < 0.
    """
    hw, cons = spec.hardware, spec.constraints
    tones: list[DriveTone] = []
    edges: list[EdgeAssignment] = []
    sites: list[SiteAssignment] = []
    used_aux: set[str] = set()
    for (a, b), zeta in sorted(((_edge_key(e), z) for e, z in spec.graph.edges)):
        if zeta == 0:
            continue
        edges.append(_compile_edge(spec, a, b, zeta, used_aux, tones))
    used_pairs: set[str] = set()
    for node, xi in sorted(spec.graph.nodes):
        if xi == 0:
            continue
        sites.append(_compile_site(spec, node, xi, used_pairs, tones))
    plan = DrivePlan(tuple(tones), tuple(edges), tuple(sites))
    threshold = guard_band if guard_band is not None else cons.guard_band
    if threshold is None:
        threshold = GUARD_FACTOR * plan.max_rate()
    report = guard_band_report(plan, hw, threshold)
    plan = DrivePlan(plan.tones, plan.edges, plan.sites, report)
    if not report.passed:
        raise InfeasibleError(report.describe(), report)
    return plan


def _compile_edge(spec: LatticeSpec, a: str, b: str, zeta: float, used: set[str],
                  tones: list[DriveTone]) -> EdgeAssignment:
    hw, cons = spec.hardware, spec.constraints
    cands = sorted((m.frequency, m.label) for m in hw.modes
                   if m.kind is ModeKind.AUXILIARY and m.label not in used
                   and hw.g_value(a, m.label) != 0 and hw.g_value(b, m.label) != 0)
    if not cands:
        raise InfeasibleError(f"edge ({a}, {b}): no free auxiliary mode coupled to both nodes")
    aux = cands[0][1]
    used.add(aux)
    mode = hw.mode(aux)
    kappa = mode.damping_rate
    dw = spec.edge_detuning((a, b))
    if dw is None:
        if kappa > 0:
            dw = max(kappa, kappa * cons.min_hop_quality)
        elif cons.default_detuning is not None:
            dw = cons.default_detuning
        else:
            raise InfeasibleError(f"edge ({a}, {b}): auxiliary {aux!r} is undamped; give a "
                                  "detuning or constraints.default_detuning")
    if kappa > 0 and dw / kappa < cons.min_hop_quality:
        raise InfeasibleError(f"edge ({a}, {b}): λ/γ' = Δω/κ = {dw / kappa:.4g} below "
                              f"min_hop_quality {cons.min_hop_quality}")
    G = math.sqrt(abs(zeta) * (dw ** 2 + kappa ** 2) / dw)
    phase = 0.0 if zeta > 0 else math.pi
    idx = []
    for node, ph in ((a, 0.0), (b, phase)):
        g = hw.g_value(node, aux)
        beta = G / abs(g)
        if beta > cons.max_beta:
            raise InfeasibleError(f"edge ({a}, {b}): required |β| = {beta:.6g} on {node!r} "
                                  f"exceeds max_beta {cons.max_beta}")
        # g β must carry the leg phase; fold the sign of g into β
        amp = beta * (1 if g > 0 else -1) * complex(math.cos(ph), math.sin(ph))
        if ph == 0.0:
            amp = complex(amp.real, 0.0)
        nu = mode.frequency - hw.mode(node).frequency + dw
        if not nu > 0:
            raise InfeasibleError(f"edge ({a}, {b}): tone for {node!r} would need ν = {nu:.6g} <= 0")
        idx.append(len(tones))
        tones.append(DriveTone(aux, nu, amp))
    lam, gam = elimination_rates(G, dw, kappa)
    return EdgeAssignment((a, b), aux, dw, phase, (idx[0], idx[1]), G, lam, gam)


def _compile_site(spec: LatticeSpec, node: str, xi: float, used: set[str],
                  tones: list[DriveTone]) -> SiteAssignment:
    hw, cons = spec.hardware, spec.constraints
    opts = spec.options(node)
    omega_n = hw.mode(node).frequency
    cands = sorted((hw.mode(p.members[0]).frequency, p.label) for p in hw.pairs
                   if p.label not in used and hw.f_value(node, p.label) != 0)
    if not cands:
        raise InfeasibleError(f"site {node!r}: no free auxiliary pair coupled to it")
    pair = hw.pair(cands[0][1])
    used.add(pair.label)
    base = hw.mode(pair.members[0])
    kappa = base.damping_rate
    f = hw.f_value(node, pair.label)
    delta_res = 2 * pair.s - omega_n - opts.modulation
    if delta_res == 0:
        raise InfeasibleError(f"site {node!r}: pair {pair.label!r} is exactly resonant "
                              "(2s = ω_n), no dispersive regime")
    qd = delta_res / 2
    eps = f / qd
    wd = opts.drive_detuning
    if wd is None:
        if kappa > 0:
            wd = max(kappa, kappa * cons.min_kerr_quality)
        elif cons.default_drive_detuning is not None:
            wd = cons.default_drive_detuning
        else:
            raise InfeasibleError(f"site {node!r}: pair is undamped; give drive_detuning or "
                                  "constraints.default_drive_detuning")
    wd = math.copysign(abs(wd), xi)
    if kappa > 0 and abs(wd) / kappa < cons.min_kerr_quality:
        raise InfeasibleError(f"site {node!r}: χ/Γ = Ω/κ below min_kerr_quality")
    K = math.sqrt(abs(xi) * (wd ** 2 + kappa ** 2) / abs(wd))
    alpha = 2 * K / abs(eps * f)
    if alpha > cons.max_alpha:
        raise InfeasibleError(f"site {node!r}: required α = {alpha:.6g} exceeds max_alpha "
                              f"{cons.max_alpha}")
    nu = base.frequency + pair.s + wd
    if not nu > 0:
        raise InfeasibleError(f"site {node!r}: drive frequency {nu:.6g} <= 0")
    chi, Gamma = elimination_rates(K, wd, kappa)
    tones.append(DriveTone(pair.members[0], nu, complex(alpha, 0.0)))
    return SiteAssignment(node, pair.label, pair.members, pair.s, delta_res, opts.modulation, qd,
                          f, eps, wd, alpha, len(tones) - 1, chi, Gamma)


# validation --------------------------------------------------------------------------------------

def _aux_channels(plan: DrivePlan, hw: HardwareRegistry):
    """(mech, aux label, aux frequency, reference rotation or None) for every coupled pair."""
    refs = {e.aux: e.detuning for e in plan.edges}
    out = []
    for m, a, v in hw.g:
        if v:
            out.append((m, a, hw.mode(a).frequency, refs.get(a)))
    for m, p, v in hw.f:
        if not v:
            continue
        pr = hw.pair(p)
        w = hw.mode(pr.members[0]).frequency
        out.append((m, f"{p}:c", w + pr.s, None))
        out.append((m, f"{p}:d", w - pr.s, None))
    return out


def guard_band_report(plan: DrivePlan, hw: HardwareRegistry, threshold: float) -> GuardBandReport:
    """Enumerate every (mechanical mode, auxiliary, tone) triple.

    For a spurious triple both sidebands are checked: the red term rotates at
    ν + ω_n − Ω_j and the blue at ν − ω_n − Ω_j. Its detuning is the smallest
    distance of either rotation from 0 or from the auxiliary's intended
    rotation (the edge Δω), since near either value it would join the
    engineered dynamics. Intended triples are listed separately with their
    resonance residual ν + ω_n − Ω_j − Δω.
    """
    intended = {}
    for e in plan.edges:
        for node, k in zip(e.nodes, e.tone_indices):
            intended[(node, e.aux, k)] = e.detuning
    spurious, hits = [], []
    for k, tone in enumerate(plan.tones):
        for mech, aux, w_aux, ref in _aux_channels(plan, hw):
            w_m = hw.mode(mech).frequency
            red = tone.frequency + w_m - w_aux
            if (mech, aux, k) in intended:
                hits.append(GuardBandEntry(mech, aux, k, abs(red - intended[(mech, aux, k)])))
                continue
            blue = tone.frequency - w_m - w_aux
            cands = [abs(red), abs(blue)]
            if ref is not None:
                cands += [abs(red - ref), abs(blue - ref)]
            spurious.append(GuardBandEntry(mech, aux, k, min(cands)))
    minimum = min((e.detuning for e in spurious), default=math.inf)
    return GuardBandReport(tuple(spurious), tuple(hits), minimum, float(threshold))


@dataclass(frozen=True)
class ValidationReport:
    guard_band: GuardBandReport
    rates: tuple[dict, ...]
    resonance_residuals: tuple[float, ...]

    @property
    def passed(self) -> bool:
        return self.guard_band.passed and all(r["ok"] for r in self.rates)


def validate_plan(plan: DrivePlan, spec: LatticeSpec, guard_band: float | None = None
                  ) -> ValidationReport:
    hw, cons = spec.hardware, spec.constraints
    threshold = guard_band if guard_band is not None else (
        plan.guard_band.threshold if plan.guard_band else GUARD_FACTOR * plan.max_rate())
    report = guard_band_report(plan, hw, threshold)
    rows = []
    for e in plan.edges:
        kappa = hw.mode(e.aux).damping_rate
        adi = e.coupling / math.hypot(e.detuning, kappa)
        quality = e.lam / e.gamma_prime if e.gamma_prime else math.inf
        ratio = e.detuning / kappa if kappa else math.inf
        ok = adi <= cons.adiabaticity and quality >= cons.min_hop_quality
        rows.append({"element": f"{e.nodes[0]}-{e.nodes[1]}", "kind": "edge",
                     "effective": e.lam, "parasitic": e.gamma_prime, "quality": quality,
                     "detuning_over_kappa": ratio, "adiabaticity": adi, "ok": ok})
    for s in plan.sites:
        kappa = hw.mode(s.members[0]).damping_rate
        K = abs(s.epsilon * s.f * s.alpha) / 2
        adi = K / math.hypot(s.drive_detuning, kappa)
        quality = abs(s.chi) / s.Gamma if s.Gamma else math.inf
        ratio = abs(s.drive_detuning) / kappa if kappa else math.inf
        ok = adi <= cons.adiabaticity and quality >= cons.min_kerr_quality and abs(s.epsilon) <= 0.3
        rows.append({"element": s.node, "kind": "site", "effective": s.chi,
                     "parasitic": s.Gamma, "quality": quality, "detuning_over_kappa": ratio,
                     "adiabaticity": adi, "epsilon": s.epsilon, "ok": ok})
    return ValidationReport(report, tuple(rows), tuple(e.detuning for e in report.intended))


def plan_table(plan: DrivePlan) -> str:
    lines = [f"{'element':<14}{'aux':<10}{'detuning':>14}{'rate':>14}{'parasitic':>14}"]
    for e in plan.edges:
        lines.append(f"{e.nodes[0] + '-' + e.nodes[1]:<14}{e.aux:<10}{e.detuning:>14.6g}"
                     f"{e.lam:>14.6g}{e.gamma_prime:>14.6g}")
    for s in plan.sites:
        lines.append(f"{s.node:<14}{s.pair:<10}{s.drive_detuning:>14.6g}{s.chi:>14.6g}"
                     f"{s.Gamma:>14.6g}")
    lines.append("")
    lines.append(f"{'tone':<6}{'target':<10}{'frequency':>22}{'amplitude':>36}")
    for k, t in enumerate(plan.tones):
        lines.append(f"{k:<6}{t.target:<10}{t.frequency:>22.17g}{str(t.amplitude):>36}")
    if plan.guard_band:
        lines.append(plan.guard_band.describe())
    return "\n".join(lines)


# plan serialization --------------------------------------------------------------------------------

def _cplx(z: complex) -> dict:
    return {"re": float(z.real), "im": float(z.imag)}


def _entry(e: GuardBandEntry) -> dict:
    return {"mech": e.mech, "aux": e.aux, "tone": e.tone, "detuning": e.detuning}


def emit_plan(plan: DrivePlan) -> str:
    doc: dict[str, Any] = {
        "tones": [{"target": t.target, "frequency": t.frequency, "amplitude": _cplx(t.amplitude)}
                  for t in plan.tones],
        "edges": [{**asdict(e), "nodes": list(e.nodes), "tone_indices": list(e.tone_indices)}
                  for e in plan.edges],
        "sites": [{**asdict(s), "members": list(s.members)} for s in plan.sites],
    }
    if plan.guard_band is not None:
        gb = plan.guard_band
        doc["guard_band"] = {"threshold": gb.threshold,
                             "minimum": gb.minimum if math.isfinite(gb.minimum) else None,
                             "passed": gb.passed,
                             "spurious": [_entry(e) for e in gb.spurious],
                             "intended": [_entry(e) for e in gb.intended]}
    doc["predicted_rates"] = plan.predicted_rates()
    return json.dumps(doc, indent=2) + "\n"


def parse_plan(text: str) -> DrivePlan:
    doc = _obj(_loads(text), "plan", ("tones", "edges", "sites"),
               ("guard_band", "predicted_rates"))
    try:
        tones = tuple(DriveTone(t["target"], t["frequency"],
                                complex(t["amplitude"]["re"], t["amplitude"]["im"]))
                      for t in doc["tones"])
        edges = tuple(EdgeAssignment(**{**e, "nodes": tuple(e["nodes"]),
                                        "tone_indices": tuple(e["tone_indices"])})
                      for e in doc["edges"])
        sites = tuple(SiteAssignment(**{**s, "members": tuple(s["members"])})
                      for s in doc["sites"])
        gb = None
        if "guard_band" in doc:
            g = doc["guard_band"]
            gb = GuardBandReport(tuple(GuardBandEntry(**e) for e in g["spurious"]),
                                 tuple(GuardBandEntry(**e) for e in g["intended"]),
                                 math.inf if g["minimum"] is None else g["minimum"],
                                 g["threshold"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"malformed plan: {exc}") from None
    return DrivePlan(tones, edges, sites, gb)


__all__ = [
    "SpecError", "InfeasibleError", "PairSpec", "HardwareRegistry", "Constraints", "NodeOptions",
    "LatticeSpec", "EdgeAssignment", "SiteAssignment", "GuardBandEntry", "GuardBandReport",
    "DrivePlan", "ValidationReport", "parse_lattice_spec", "emit_lattice_spec",
    "compile_drive_plan", "guard_band_report", "validate_plan", "plan_table", "emit_plan",
    "parse_plan", "DriveTone",
]
