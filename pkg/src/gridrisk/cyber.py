"""RTU / meter intrusion model and minimum-cost capture of attacking subgraphs.

Meters are identified by their measurement descriptor (``inj:<bus>`` or
``flow:<from>-<to>``). Each meter reports through exactly one RTU; capturing
an RTU captures every meter it owns.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping

from .errors import CaptureError
from .grid import PowerNetwork, flow_label, injection_label

STRATEGIES = ("meter-only", "rtu-only", "combined")


@dataclass(frozen=True)
class Rtu:
    id: str
    bus: int | None
    weight: float = 1.0


@dataclass(frozen=True)
class CyberGraph:
    rtus: tuple[Rtu, ...]
    meter_weights: Mapping[str, float]
    ownership: Mapping[str, frozenset]

    def __post_init__(self):
        owner: dict[str, str] = {}
        for rtu in self.rtus:
            if not rtu.weight > 0:
                raise CaptureError(f"RTU {rtu.id} has nonpositive weight")
            for meter in self.ownership.get(rtu.id, ()):
                if meter in owner:
                    raise CaptureError(f"meter {meter} is owned by both {owner[meter]} and {rtu.id}")
                owner[meter] = rtu.id
        for meter, w in self.meter_weights.items():
            if not w > 0:
                raise CaptureError(f"meter {meter} has nonpositive weight")
            if meter not in owner:
                raise CaptureError(f"meter {meter} is not owned by any RTU")
        object.__setattr__(self, "_owner", owner)
        object.__setattr__(self, "_rtu_weight", {r.id: r.weight for r in self.rtus})

    def owner(self, meter: str) -> str:
        return self._owner[meter]

    def rtu_weight(self, rtu_id: str) -> float:
        return self._rtu_weight[rtu_id]

    def meter_weight(self, meter: str) -> float:
        try:
            return self.meter_weights[meter]
        except KeyError:
            raise CaptureError(f"meter {meter} is missing from the cyber graph") from None

    def reweighted(self, rtu_weight: float | None = None, meter_weight: float | None = None) -> "CyberGraph":
        rtus = tuple(Rtu(r.id, r.bus, r.weight if rtu_weight is None else rtu_weight) for r in self.rtus)
        mw = dict(self.meter_weights) if meter_weight is None else {m: meter_weight for m in self.meter_weights}
        return CyberGraph(rtus, mw, self.ownership)

    def scaled(self, factor: float) -> "CyberGraph":
        rtus = tuple(Rtu(r.id, r.bus, r.weight * factor) for r in self.rtus)
        return CyberGraph(rtus, {m: w * factor for m, w in self.meter_weights.items()}, self.ownership)


def default_cyber_graph(net: PowerNetwork, rtu_weight: float = 1.0, meter_weight: float = 1.0) -> CyberGraph:
    """One RTU per bus owning the bus injection and the flows metered at that bus (from-end)."""
    owned: dict[int, set[str]] = {b.id: {injection_label(b.id)} for b in net.buses}
    for br in net.branches:
        owned[br.from_bus].add(flow_label(br))
    rtus = tuple(Rtu(f"RTU{b.id}", b.id, rtu_weight) for b in net.buses)
    meters = {m: meter_weight for ms in owned.values() for m in ms}
    return CyberGraph(rtus, meters, {f"RTU{bus}": frozenset(ms) for bus, ms in owned.items()})


def cyber_graph_from_dict(doc: dict, net: PowerNetwork | None = None) -> CyberGraph:
    """Build a graph from ``{rtus: [{id, bus, weight, meters}], meter_weights: {...}}``.

    Meters without an explicit weight get weight 1. When ``net`` is given the
    graph must cover every full-placement meter of that network.
    """
    try:
        rtus = tuple(Rtu(str(r["id"]), r.get("bus"), float(r.get("weight", 1.0))) for r in doc["rtus"])
        ownership = {str(r["id"]): frozenset(r.get("meters", ())) for r in doc["rtus"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise CaptureError(f"malformed cyber graph document: {exc}") from None
    weights = {m: 1.0 for ms in ownership.values() for m in ms}
    weights.update({m: float(w) for m, w in doc.get("meter_weights", {}).items()})
    graph = CyberGraph(rtus, weights, ownership)
    if net is not None:
        needed = {injection_label(b.id) for b in net.buses} | {flow_label(br) for br in net.branches}
        missing = needed - set(weights)
        if missing:
            raise CaptureError(f"cyber graph lacks meters {sorted(missing)}")
    return graph


def cyber_graph_to_dict(graph: CyberGraph) -> dict:
    return {
        "rtus": [
            {"id": r.id, "bus": r.bus, "weight": r.weight, "meters": sorted(graph.ownership.get(r.id, ()))}
            for r in graph.rtus
        ],
        "meter_weights": dict(sorted(graph.meter_weights.items())),
    }


def load_cyber_graph(path, net: PowerNetwork | None = None) -> CyberGraph:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CaptureError(f"cyber graph {path} is not valid JSON: {exc}") from None
    return cyber_graph_from_dict(doc, net)


@dataclass(frozen=True)
class AttackSubgraph:
    target_bus: int
    required_meters: tuple[str, ...]


@dataclass(frozen=True)
class CapturePlan:
    target_bus: int
    strategy: str
    captured_rtus: tuple[str, ...]
    captured_meters: tuple[str, ...]
    total_cost: float

    @property
    def kind(self) -> str:
        """What the plan actually buys, regardless of the strategy that produced it."""
        if self.captured_rtus and self.captured_meters:
            return "combined"
        return "rtu-only" if self.captured_rtus else "meter-only"

    def covered(self, graph: CyberGraph) -> set[str]:
        out = set(self.captured_meters)
        for r in self.captured_rtus:
            out |= graph.ownership.get(r, frozenset())
        return out


def attacking_subgraph(net: PowerNetwork, target_bus: int, placement: str = "full") -> AttackSubgraph:
    """Meters an attacker must control to shift one bus angle without tripping BDD.

    That is the target's injection, every flow on an incident branch and the
    injection at each neighbouring bus.
    """
    if placement != "full":
        raise ValueError(f"unknown placement rule {placement!r}")
    if target_bus == net.ref_bus:
        raise CaptureError(f"bus {target_bus} is the reference bus")
    meters = {injection_label(target_bus)}
    for k in net.incident_branches(target_bus):
        br = net.branches[k]
        meters.add(flow_label(br))
        meters.add(injection_label(br.to_bus if br.from_bus == target_bus else br.from_bus))
    return AttackSubgraph(target_bus, tuple(sorted(meters)))


def capture_cost(subgraph: AttackSubgraph, graph: CyberGraph, unit_weights: bool = False) -> tuple[int, float]:
    """Unweighted meter count and weighted meter cost of a subgraph."""
    muc = len(subgraph.required_meters)
    if unit_weights:
        return muc, float(muc)
    return muc, math.fsum(graph.meter_weight(m) for m in subgraph.required_meters)


def _relevant_rtus(required: Iterable[str], graph: CyberGraph) -> list[str]:
    out = set()
    for m in required:
        try:
            out.add(graph.owner(m))
        except KeyError:
            pass
    return sorted(out)


def min_cost_capture(subgraph: AttackSubgraph, graph: CyberGraph, strategy: str = "combined") -> CapturePlan:
    """Cheapest way to control every required meter under a capture strategy.

    Combined plans enumerate every subset of the relevant RTUs (those owning at
    least one required meter) and buy the leftover meters individually. Ties
    go to fewer RTUs, then to the lexicographically smallest RTU set.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    required = subgraph.required_meters
    wm = {m: graph.meter_weight(m) for m in required}
    if strategy == "meter-only":
        return CapturePlan(subgraph.target_bus, strategy, (), required, math.fsum(wm.values()))

    relevant = _relevant_rtus(required, graph)
    req = set(required)
    covers = {r: graph.ownership[r] & req for r in relevant}
    if strategy == "rtu-only":
        orphans = req - set().union(*covers.values()) if covers else req
        if orphans:
            raise CaptureError(f"meters {sorted(orphans)} have no owning RTU; rtu-only capture is infeasible")

    best_key, best = None, None
    for size in range(len(relevant) + 1):
        for subset in combinations(relevant, size):
            covered = set().union(*(covers[r] for r in subset)) if subset else set()
            leftover = tuple(sorted(req - covered))
            if strategy == "rtu-only" and leftover:
                continue
            cost = math.fsum([graph.rtu_weight(r) for r in subset] + [wm[m] for m in leftover])
            key = (round(cost, 9), size, subset)
            if best_key is None or key < best_key:
                best_key, best = key, (subset, leftover, cost)
    subset, leftover, cost = best
    return CapturePlan(subgraph.target_bus, strategy, tuple(subset), leftover, cost)


def rank_cyber_targets(net: PowerNetwork, graph: CyberGraph, strategy: str = "combined") -> list[tuple[int, CapturePlan]]:
    """Capture plans for every non-reference bus, cheapest first (ties by bus order)."""
    plans = []
    for pos, bus in enumerate(net.bus_ids):
        if bus == net.ref_bus:
            continue
        plan = min_cost_capture(attacking_subgraph(net, bus), graph, strategy)
        plans.append((round(plan.total_cost, 9), pos, bus, plan))
    plans.sort(key=lambda t: (t[0], t[1]))
    return [(bus, plan) for _, _, bus, plan in plans]


@dataclass(frozen=True)
class CyberAssessment:
    """Capture plans of one network under every strategy."""

    rankings: dict = field(default_factory=dict)

    def best(self, bus: int) -> CapturePlan:
        plans = [dict(r)[bus] for r in self.rankings.values()]
        return min(plans, key=lambda p: (round(p.total_cost, 9), STRATEGIES.index(p.strategy)))


def assess_cyber(net: PowerNetwork, graph: CyberGraph, strategies=STRATEGIES) -> CyberAssessment:
    return CyberAssessment({s: rank_cyber_targets(net, graph, s) for s in strategies})
