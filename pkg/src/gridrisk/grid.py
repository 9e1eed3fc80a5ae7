"""Physical network, DC measurement model, base-case flows and statistical peak loading.

All internal quantities are per-unit on the case MVA base; case documents and
scenario files are in MW.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CaseError, ScenarioError

BALANCE_TOL = 1e-9


@dataclass(frozen=True)
class Bus:
    id: int
    load_mw: float = 0.0
    gen_mw: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    x_pu: float
    cap_mw: float

    @property
    def label(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class PowerNetwork:
    """Buses, branches and the reference bus of a transmission network.

    Construction validates the record set; instances are immutable.
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    ref_bus: int
    base_mva: float = 100.0
    name: str = "case"

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        _validate_network(self)

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def n_state(self) -> int:
        return len(self.buses) - 1

    @cached_property
    def _bus_pos(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    @cached_property
    def _incident(self) -> dict[int, tuple[int, ...]]:
        adj: dict[int, list[int]] = {b.id: [] for b in self.buses}
        for k, br in enumerate(self.branches):
            adj[br.from_bus].append(k)
            adj[br.to_bus].append(k)
        return {bus: tuple(ks) for bus, ks in adj.items()}

    def bus_index(self, bus_id: int) -> int:
        try:
            return self._bus_pos[bus_id]
        except KeyError:
            raise CaseError(f"unknown bus {bus_id}") from None

    def state_index(self, bus_id: int) -> int:
        """Column of ``bus_id``'s angle in the reduced state vector."""
        if bus_id == self.ref_bus:
            raise CaseError(f"bus {bus_id} is the reference bus and has no state column")
        k = self.bus_index(bus_id)
        return k if k < self.bus_index(self.ref_bus) else k - 1

    def state_buses(self) -> list[int]:
        return [b.id for b in self.buses if b.id != self.ref_bus]

    def branch_index(self, ref) -> int:
        """Resolve a branch given as an index, a ``"f-t"`` label or a ``(f, t)`` pair.

        Labels match either orientation.
        """
        if isinstance(ref, (int, np.integer)):
            if not 0 <= ref < len(self.branches):
                raise CaseError(f"branch index {ref} out of range")
            return int(ref)
        if isinstance(ref, str):
            parts = ref.replace("flow:", "").split("-")
            if len(parts) != 2:
                raise CaseError(f"cannot parse branch label {ref!r}")
            ref = (int(parts[0]), int(parts[1]))
        f, t = ref
        for k, br in enumerate(self.branches):
            if (br.from_bus, br.to_bus) in ((f, t), (t, f)):
                return k
        raise CaseError(f"no branch between buses {f} and {t}")

    def neighbours(self, bus_id: int) -> list[int]:
        out = []
        for k in self.incident_branches(bus_id):
            br = self.branches[k]
            out.append(br.to_bus if br.from_bus == bus_id else br.from_bus)
        return out

    def incident_branches(self, bus_id: int) -> list[int]:
        self.bus_index(bus_id)
        return list(self._incident[bus_id])

    def degree(self, bus_id: int) -> int:
        return len(self.incident_branches(bus_id))

    @property
    def susceptance(self) -> np.ndarray:
        return np.array([1.0 / br.x_pu for br in self.branches])

    @property
    def capacity_pu(self) -> np.ndarray:
        return np.array([br.cap_mw for br in self.branches]) / self.base_mva

    @property
    def injections_mw(self) -> np.ndarray:
        """Net scheduled injection (generation minus load) per bus."""
        return np.array([b.gen_mw - b.load_mw for b in self.buses])

    def incidence(self) -> np.ndarray:
        """Branch-bus incidence, +1 at the from-bus and -1 at the to-bus (L x N)."""
        A = np.zeros((self.n_branch, self.n_bus))
        for k, br in enumerate(self.branches):
            A[k, self.bus_index(br.from_bus)] = 1.0
            A[k, self.bus_index(br.to_bus)] = -1.0
        return A

    def reduced_incidence(self) -> np.ndarray:
        """Incidence with the reference-bus column removed (L x n)."""
        return np.delete(self.incidence(), self.bus_index(self.ref_bus), axis=1)


def _validate_network(net: PowerNetwork) -> None:
    ids = [b.id for b in net.buses]
    if not ids:
        raise CaseError("case has no buses")
    if len(set(ids)) != len(ids):
        raise CaseError("duplicate bus ids")
    known = set(ids)
    if net.ref_bus not in known:
        raise CaseError(f"reference bus {net.ref_bus} does not exist")
    seen = set()
    for k, br in enumerate(net.branches):
        tag = f"branch {k} ({br.from_bus}-{br.to_bus})"
        if br.from_bus not in known or br.to_bus not in known:
            missing = br.from_bus if br.from_bus not in known else br.to_bus
            raise CaseError(f"{tag} references nonexistent bus {missing}")
        if br.from_bus == br.to_bus:
            raise CaseError(f"{tag} is a self-loop")
        if not br.x_pu > 0:
            raise CaseError(f"{tag} has nonpositive reactance {br.x_pu}")
        if not br.cap_mw > 0:
            raise CaseError(f"{tag} has nonpositive capacity {br.cap_mw}")
        key = frozenset((br.from_bus, br.to_bus))
        if key in seen:
            raise CaseError(f"{tag} duplicates an existing branch; merge parallel circuits first")
        seen.add(key)
    # connectivity by flood fill
    adj = {i: set() for i in ids}
    for br in net.branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    stack, reached = [ids[0]], {ids[0]}
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in reached:
                reached.add(nb)
                stack.append(nb)
    if len(reached) != len(ids):
        cut = sorted(known - reached)
        raise CaseError(f"network is disconnected; unreachable buses {cut}")


# --------------------------------------------------------------------------
# case documents


def parse_case(case_text: str, name: str | None = None) -> PowerNetwork:
    """Parse a JSON case document or a MATPOWER ``mpc`` case file.

    JSON layout::

        {"name": ..., "base_mva": 100, "ref_bus": 1,
         "bus": [{"id": 1, "load_mw": 0.0, "gen_mw": 232.4}, ...],
         "branch": [{"from": 1, "to": 2, "x_pu": 0.05917, "cap_mw": 200}, ...]}
    """
    stripped = case_text.lstrip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(case_text)
        except json.JSONDecodeError as exc:
            raise CaseError(f"malformed JSON case document: {exc}") from None
        return _case_from_dict(doc, name)
    if "mpc.bus" in case_text:
        return parse_matpower(case_text, name)
    raise CaseError("unrecognised case document (expected JSON or a MATPOWER mpc file)")


def _case_from_dict(doc: dict, name: str | None) -> PowerNetwork:
    if not isinstance(doc, dict) or "bus" not in doc or "branch" not in doc:
        raise CaseError("case document needs 'bus' and 'branch' tables")
    buses = []
    for k, rec in enumerate(doc["bus"]):
        try:
            buses.append(Bus(int(rec["id"]), float(rec.get("load_mw", 0.0)), float(rec.get("gen_mw", 0.0))))
        except (KeyError, TypeError, ValueError) as exc:
            raise CaseError(f"bus record {k} is malformed: {rec!r}") from exc
    branches = []
    for k, rec in enumerate(doc["branch"]):
        try:
            branches.append(Branch(int(rec["from"]), int(rec["to"]), float(rec["x_pu"]), float(rec["cap_mw"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise CaseError(f"branch record {k} is malformed: {rec!r}") from exc
    if "ref_bus" not in doc:
        raise CaseError("case document has no ref_bus")
    return PowerNetwork(
        buses=tuple(buses),
        branches=tuple(branches),
        ref_bus=int(doc["ref_bus"]),
        base_mva=float(doc.get("base_mva", 100.0)),
        name=name or doc.get("name", "case"),
    )


def case_to_dict(net: PowerNetwork) -> dict:
    return {
        "name": net.name,
        "base_mva": net.base_mva,
        "ref_bus": net.ref_bus,
        "bus": [{"id": b.id, "load_mw": b.load_mw, "gen_mw": b.gen_mw} for b in net.buses],
        "branch": [
            {"from": br.from_bus, "to": br.to_bus, "x_pu": br.x_pu, "cap_mw": br.cap_mw}
            for br in net.branches
        ],
    }


def serialize_case(net: PowerNetwork) -> str:
    return json.dumps(case_to_dict(net), indent=2)


_MATRIX_RE = r"mpc\.{}\s*=\s*\[(.*?)\];"


def _matpower_table(text: str, key: str, required: bool = True) -> np.ndarray | None:
    m = re.search(_MATRIX_RE.format(key), text, re.S)
    if m is None:
        if required:
            raise CaseError(f"MATPOWER case has no mpc.{key} table")
        return None
    rows = []
    for line in m.group(1).splitlines():
        line = line.split("%")[0].strip().rstrip(";").strip()
        if not line:
            continue
        for chunk in line.split(";"):
            if chunk.strip():
                try:
                    rows.append([float(v) for v in chunk.split()])
                except ValueError:
                    raise CaseError(f"mpc.{key}: cannot parse row {chunk.strip()!r}") from None
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise CaseError(f"mpc.{key}: ragged table")
    return np.array(rows)


def parse_matpower(text: str, name: str | None = None) -> PowerNetwork:
    """Convert a MATPOWER case file (bus/gen/branch tables) into a network.

    Uses bus type 3 as the reference bus, branch column ``x`` as reactance and
    ``rateA`` as the rating. Out-of-service generators and branches are dropped.
    Transformer taps are ignored (plain 1/x susceptance).
    """
    m = re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)", text)
    base = float(m.group(1)) if m else 100.0
    bus = _matpower_table(text, "bus")
    branch = _matpower_table(text, "branch")
    gen = _matpower_table(text, "gen", required=False)
    if bus.shape[1] < 3 or branch.shape[1] < 6:
        raise CaseError("MATPOWER tables are too narrow")
    gen_mw: dict[int, float] = {}
    if gen is not None:
        for row in gen:
            if gen.shape[1] > 7 and row[7] <= 0:
                continue
            gen_mw[int(row[0])] = gen_mw.get(int(row[0]), 0.0) + float(row[1])
    buses = tuple(Bus(int(r[0]), float(r[2]), gen_mw.get(int(r[0]), 0.0)) for r in bus)
    slack = [int(r[0]) for r in bus if int(r[1]) == 3]
    if len(slack) != 1:
        raise CaseError(f"expected exactly one slack bus, found {len(slack)}")
    branches = []
    for row in branch:
        if branch.shape[1] > 10 and row[10] <= 0:
            continue
        branches.append(Branch(int(row[0]), int(row[1]), float(row[3]), float(row[5])))
    if name is None:
        fm = re.search(r"function\s+mpc\s*=\s*(\w+)", text)
        name = fm.group(1) if fm else "case"
    return PowerNetwork(buses, tuple(branches), slack[0], base, name)


def load_case(path: str | Path) -> PowerNetwork:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CaseError(f"cannot read case file {path}: {exc.strerror}") from None
    return parse_case(text, name=None)


def synthetic_chain(n_bus: int, chord_every: int = 4, seed: int = 0) -> PowerNetwork:
    """Sparse test grid: a path of ``n_bus`` buses plus a chord ``i -- i+2`` every few buses.

    Maximum bus degree stays at 4 regardless of size. Loads and reactances are
    drawn from ``seed``; bus 1 carries all generation.
    """
    if n_bus < 2:
        raise ValueError("need at least two buses")
    rng = np.random.default_rng(seed)
    loads = rng.uniform(5.0, 30.0, n_bus)
    loads[0] = 0.0
    buses = [Bus(i + 1, float(loads[i]), float(loads.sum()) if i == 0 else 0.0) for i in range(n_bus)]
    branches = [Branch(i, i + 1, float(rng.uniform(0.05, 0.3)), 1e4) for i in range(1, n_bus)]
    for i in range(1, n_bus - 1, chord_every):
        branches.append(Branch(i, i + 2, float(rng.uniform(0.05, 0.3)), 1e4))
    return PowerNetwork(tuple(buses), tuple(branches), 1, 100.0, f"chain{n_bus}")


def three_bus() -> PowerNetwork:
    """Small triangle network (branches 1-2, 1-3, 2-3) used by tests and demos."""
    return load_case(Path(__file__).parent / "data" / "case3.json")


def ieee14() -> PowerNetwork:
    """The IEEE 14-bus fixture shipped with the package (ratings added in rateA)."""
    return load_case(Path(__file__).parent / "data" / "case14.m")


# --------------------------------------------------------------------------
# measurement model


@dataclass(frozen=True)
class Measurement:
    kind: str  # "inj" or "flow"
    bus: int | None = None
    branch: int | None = None
    label: str = ""

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class MeasurementModel:
    net: PowerNetwork
    measurements: tuple[Measurement, ...]
    H: np.ndarray
    W: np.ndarray
    sigma: float
    # maps the branch flows to measurement rows: H = M @ diag(b) @ A_red
    M: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def labels(self) -> list[str]:
        return [ms.label for ms in self.measurements]

    def row(self, label: str) -> int:
        for k, ms in enumerate(self.measurements):
            if ms.label == label:
                return k
        raise KeyError(label)

    def flow_rows(self) -> np.ndarray:
        """Measurement row of each branch flow, in branch order."""
        rows = np.full(self.net.n_branch, -1)
        for k, ms in enumerate(self.measurements):
            if ms.kind == "flow":
                rows[ms.branch] = k
        return rows

    def injection_rows(self) -> np.ndarray:
        rows = np.full(self.net.n_bus, -1)
        for k, ms in enumerate(self.measurements):
            if ms.kind == "inj":
                rows[self.net.bus_index(ms.bus)] = k
        return rows

    def topology(self, susceptance: np.ndarray) -> np.ndarray:
        """H rebuilt for a different branch susceptance vector (or a stack of them)."""
        b = np.asarray(susceptance, dtype=float)
        return self.M @ (b[..., :, None] * self.A)


def injection_label(bus: int) -> str:
    return f"inj:{bus}"


def flow_label(br: Branch) -> str:
    return f"flow:{br.from_bus}-{br.to_bus}"


def build_measurement_model(net: PowerNetwork, placement: str = "full", sigma: float = 0.01,
                            weights=None) -> MeasurementModel:
    """Assemble the DC topology matrix for a meter placement.

    Only the ``"full"`` placement is supported: one injection meter per bus
    followed by one from-end flow meter per branch. ``weights`` is a scalar or
    length-m vector for the diagonal of W; the default is ``1/sigma**2``.
    """
    if placement != "full":
        raise ValueError(f"unknown placement rule {placement!r}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    L = net.n_branch
    Afull = net.incidence()
    meas = [Measurement("inj", bus=b.id, label=injection_label(b.id)) for b in net.buses]
    meas += [Measurement("flow", branch=k, label=flow_label(br)) for k, br in enumerate(net.branches)]
    # injection(i) = sum_l A[l, i] * flow_l
    M = np.vstack([Afull.T, np.eye(L)])
    A = net.reduced_incidence()
    H = M @ (net.susceptance[:, None] * A)
    m = len(meas)
    if weights is None:
        w = np.full(m, 1.0 / sigma**2)
    else:
        w = np.broadcast_to(np.asarray(weights, dtype=float), (m,)).copy()
    if np.any(w <= 0):
        raise ValueError("measurement weights must be strictly positive")
    for arr in (H, M, A):
        arr.flags.writeable = False
    W = np.diag(w)
    W.flags.writeable = False
    return MeasurementModel(net, tuple(meas), H, W, float(sigma), M, A)


def dc_power_flow(net: PowerNetwork, injections_mw=None, model: MeasurementModel | None = None,
                  susceptance=None):
    """Solve the DC network equations for bus angles and noiseless measurements.

    ``injections_mw`` defaults to scheduled generation minus load. The
    reference bus absorbs any imbalance larger than 1e-9 p.u. Returns
    ``(x, z)`` with ``x`` the reduced angle vector (rad) and ``z = H x`` (p.u.).
    """
    model = model or build_measurement_model(net)
    p = net.injections_mw if injections_mw is None else np.asarray(injections_mw, dtype=float)
    if p.shape != (net.n_bus,):
        raise ValueError(f"expected {net.n_bus} bus injections, got shape {p.shape}")
    p = p / net.base_mva
    ref = net.bus_index(net.ref_bus)
    mismatch = p.sum()
    if abs(mismatch) > BALANCE_TOL:
        p = p.copy()
        p[ref] -= mismatch
    b = net.susceptance if susceptance is None else np.asarray(susceptance, dtype=float)
    A = model.A
    B = A.T @ (b[:, None] * A)
    try:
        if np.linalg.matrix_rank(B) < B.shape[0]:
            raise np.linalg.LinAlgError
        x = np.linalg.solve(B, np.delete(p, ref))
    except np.linalg.LinAlgError:
        raise CaseError("reduced susceptance matrix is singular (disconnected network?)") from None
    H = model.H if susceptance is None else model.topology(b)
    return x, H @ x


# --------------------------------------------------------------------------
# load scenarios


@dataclass(frozen=True)
class LoadScenarioSet:
    """Measurement snapshots (p.u.) or their parametric mean / SD summary."""

    labels: tuple[str, ...]
    snapshots: np.ndarray | None = None
    mean: np.ndarray | None = None
    sd: np.ndarray | None = None

    def __post_init__(self):
        m = len(self.labels)
        if self.snapshots is not None and self.snapshots.size and self.snapshots.shape[1] != m:
            raise ScenarioError("scenario vectors must have one entry per measurement")
        for arr in (self.mean, self.sd):
            if arr is not None and arr.shape != (m,):
                raise ScenarioError("parametric vectors must have one entry per measurement")
        if self.sd is not None and np.any(self.sd < 0):
            raise ScenarioError("standard deviations must be nonnegative")

    @classmethod
    def parametric(cls, labels: Sequence[str], mean, sd) -> "LoadScenarioSet":
        return cls(tuple(labels), mean=np.asarray(mean, dtype=float), sd=np.asarray(sd, dtype=float))

    @classmethod
    def from_snapshots(cls, labels: Sequence[str], snapshots) -> "LoadScenarioSet":
        return cls(tuple(labels), snapshots=np.atleast_2d(np.asarray(snapshots, dtype=float)))

    def stats(self) -> tuple[np.ndarray, np.ndarray]:
        if self.snapshots is not None and len(self.snapshots):
            ddof = 1 if len(self.snapshots) > 1 else 0
            return self.snapshots.mean(axis=0), self.snapshots.std(axis=0, ddof=ddof)
        if self.mean is not None:
            sd = np.zeros_like(self.mean) if self.sd is None else self.sd
            return self.mean, sd
        raise ScenarioError("empty scenario set and no parametric form")


def default_scenarios(model: MeasurementModel, rel_sd: float = 0.1) -> LoadScenarioSet:
    """Parametric scenarios around the base case with SD = rel_sd * |z|."""
    _, z = dc_power_flow(model.net, model=model)
    return LoadScenarioSet.parametric(model.labels, z, rel_sd * np.abs(z))


def sample_scenarios(scen: LoadScenarioSet, count: int, rng: np.random.Generator) -> LoadScenarioSet:
    mean, sd = scen.stats()
    draws = rng.normal(mean, sd, size=(count, len(mean)))
    return LoadScenarioSet.from_snapshots(scen.labels, draws)


def read_scenario_csv(source, model: MeasurementModel) -> LoadScenarioSet:
    """Read MW snapshots with descriptor headers and reorder them to the model's rows."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario file {source}: {exc.strerror}") from None
    else:
        text = str(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ScenarioError("scenario file is empty") from None
    missing = set(model.labels) - set(header)
    if missing:
        raise ScenarioError(f"scenario file lacks columns {sorted(missing)}")
    cols = [header.index(lab) for lab in model.labels]
    rows = []
    for k, rec in enumerate(reader):
        if not rec:
            continue
        try:
            vals = [float(v) for v in rec]
        except ValueError:
            raise ScenarioError(f"scenario row {k + 1} is not numeric") from None
        rows.append([vals[c] for c in cols])
    if not rows:
        raise ScenarioError("scenario file has no snapshots")
    return LoadScenarioSet.from_snapshots(model.labels, np.array(rows) / model.net.base_mva)


def write_scenario_csv(scen: LoadScenarioSet, base_mva: float = 100.0) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(scen.labels)
    for row in scen.snapshots * base_mva:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def statistical_peak(scenarios: LoadScenarioSet, k: float = 3.0) -> np.ndarray:
    """Peak measurement vector ``mean + k * SD`` (elementwise)."""
    if k < 0:
        raise ValueError("SD multiplier must be nonnegative")
    mean, sd = scenarios.stats()
    return mean + k * sd
