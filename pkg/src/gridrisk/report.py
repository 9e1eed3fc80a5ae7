"""Combined cyber/physical risk index, artifact writers and the end-to-end pipeline."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .attack import DEFAULT_EPSILON, all_overload_attacks, attack_targets, min_overload_attack
from .cyber import (STRATEGIES, CapturePlan, CyberAssessment, assess_cyber, default_cyber_graph,
                    load_cyber_graph)
from .errors import GridRiskError
from .estimation import DEFAULT_ALPHA, DEFAULT_SIGMA, detection_threshold
from .grid import (PowerNetwork, build_measurement_model, default_scenarios, ieee14, load_case,
                   read_scenario_csv, statistical_peak)
from .mtd import MtdLimits, ProtectionProfile, bus_exposure, mtd_protection_sweep

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
CYBER_COLUMNS = ("bus", "strategy", "cost", "rtus", "meters")
MTD_COLUMNS = ("bus", "branch", "a_norm", "co", "min_rho", "r_star_at_min_rho", "div_rel", "div_eq16")
CURVE_COLUMNS = ("bus", "branch", "rho", "r_star", "eta")
ATTACK_COLUMNS = ("bus", "branch", "c_n", "a_norm", "co")
UNPROTECTABLE = "UNPROTECTABLE"


class PipelineError(GridRiskError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# --------------------------------------------------------------------------
# combined index


@dataclass(frozen=True)
class BusRisk:
    bus: int
    cyber_cost: float
    cyber_strategy: str
    rtus: tuple[str, ...]
    meters: tuple[str, ...]
    min_rho: float | None
    worst_branch: str | None
    a_norm: float | None
    cyber_score: float
    exposure_score: float
    combined_index: float

    @property
    def unprotectable(self) -> bool:
        return self.min_rho is None


@dataclass(frozen=True)
class RiskReport:
    buses: tuple[BusRisk, ...]
    case: str
    mix: float
    eta: float | None = None
    seed: int | None = None
    config: dict = field(default_factory=dict)
    engine_version: str = __version__

    @property
    def ranking(self) -> list[int]:
        return [b.bus for b in self.buses]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "engine_version": self.engine_version,
            "case": self.case,
            "seed": self.seed,
            "mix": self.mix,
            "eta": self.eta,
            "config": self.config,
            "ranking": self.ranking,
            "buses": [
                {**asdict(b), "rtus": list(b.rtus), "meters": list(b.meters), "unprotectable": b.unprotectable}
                for b in self.buses
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RiskReport":
        keys = BusRisk.__dataclass_fields__
        buses = tuple(
            BusRisk(**{k: (tuple(v) if k in ("rtus", "meters") else v) for k, v in b.items() if k in keys})
            for b in doc["buses"]
        )
        return cls(buses, doc["case"], doc["mix"], doc.get("eta"), doc.get("seed"), doc.get("config", {}),
                   doc.get("engine_version", __version__))


def _minmax(values: dict[int, float]) -> dict[int, float]:
    if not values:
        return {}
    lo, hi = min(values.values()), max(values.values())
    if hi == lo:
        return {k: 0.0 for k in values}
    return {k: (v - lo) / (hi - lo) for k, v in values.items()}


def _best_plans(cyber) -> dict[int, CapturePlan]:
    if isinstance(cyber, CyberAssessment):
        buses = [b for b, _ in next(iter(cyber.rankings.values()))]
        return {b: cyber.best(b) for b in buses}
    return dict(cyber)


def combined_risk_index(cyber, physical: ProtectionProfile, mix: float = 0.5,
                        net: PowerNetwork | None = None) -> RiskReport:
    """Blend normalised intrusion cost and MTD exposure into one index per bus.

    ``index = mix * (1 - cost_norm) + (1 - mix) * exposure_norm`` with both terms
    min-max normalised over buses; a bus whose worst attack no MTD level can
    expose gets exposure 1. Buses come out most vulnerable first; ties keep
    the case's bus order (ascending id without ``net``).
    """
    if not 0 <= mix <= 1:
        raise ValueError("mix must lie in [0, 1]")
    plans = _best_plans(cyber)
    worst = bus_exposure(physical)
    if set(plans) != set(worst):
        raise ValueError(f"case mismatch: cyber covers buses {sorted(plans)}, physical covers {sorted(worst)}")
    cost_n = _minmax({b: p.total_cost for b, p in plans.items()})
    rho_n = _minmax({b: e.min_rho for b, e in worst.items() if e.min_rho is not None})
    order = net.bus_ids if net is not None else sorted(plans)
    rows = []
    for b in plans:
        e, p = worst[b], plans[b]
        exposure = 1.0 if e.min_rho is None else rho_n[b]
        score = 1.0 - cost_n[b]
        rows.append(BusRisk(
            bus=b, cyber_cost=float(p.total_cost), cyber_strategy=p.kind,
            rtus=tuple(p.captured_rtus), meters=tuple(p.captured_meters),
            min_rho=e.min_rho, a_norm=e.a_norm,
            worst_branch=net.branches[e.target_branch].label if net is not None else str(e.target_branch),
            cyber_score=score, exposure_score=exposure,
            combined_index=mix * score + (1.0 - mix) * exposure,
        ))
    rows.sort(key=lambda r: (-round(r.combined_index, 12), order.index(r.bus)))
    return RiskReport(tuple(rows), net.name if net is not None else "case", mix, physical.eta)


# --------------------------------------------------------------------------
# writers


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def cyber_csv(rankings) -> str:
    return _csv_text(CYBER_COLUMNS, [
        (bus, plan.strategy, _fmt(plan.total_cost), ";".join(plan.captured_rtus), ";".join(plan.captured_meters))
        for bus, plan in rankings
    ])


def cyber_json(rankings) -> str:
    return json.dumps([
        {"bus": bus, "strategy": p.strategy, "cost": p.total_cost, "rtus": list(p.captured_rtus),
         "meters": list(p.captured_meters)} for bus, p in rankings
    ], indent=2)


def mtd_rows(profile: ProtectionProfile, net: PowerNetwork) -> list[dict]:
    out = []
    for e in profile.entries:
        out.append({
            "bus": e.target_bus,
            "branch": net.branches[e.target_branch].label,
            "a_norm": e.a_norm,
            "co": e.co * net.base_mva,
            "min_rho": UNPROTECTABLE if e.min_rho is None else e.min_rho,
            "r_star_at_min_rho": e.r_star_at_min_rho,
            "div_rel": e.div_rel,
            "div_eq16": e.div_eq16,
        })
    return out


def mtd_csv(profile: ProtectionProfile, net: PowerNetwork) -> str:
    rows = []
    for r in mtd_rows(profile, net):
        rows.append([r["bus"], r["branch"], _fmt(r["a_norm"]), _fmt(r["co"]),
                     r["min_rho"] if r["min_rho"] == UNPROTECTABLE else _fmt(r["min_rho"]),
                     _fmt(r["r_star_at_min_rho"]), _fmt(r["div_rel"]), _fmt(r["div_eq16"])])
    return _csv_text(MTD_COLUMNS, rows)


def curves_csv(profile: ProtectionProfile, net: PowerNetwork) -> str:
    rows = []
    for e in profile.entries:
        label = net.branches[e.target_branch].label
        for rho, r in zip(profile.grid, e.r_star):
            rows.append([e.target_bus, label, _fmt(rho), _fmt(r), _fmt(profile.eta)])
    return _csv_text(CURVE_COLUMNS, rows)


def attacks_csv(attacks, net: PowerNetwork) -> str:
    return _csv_text(ATTACK_COLUMNS, [
        (a.target_bus, net.branches[a.target_branch].label, _fmt(a.c_n), _fmt(a.a_norm), _fmt(a.co * net.base_mva))
        for a in attacks
    ])


def report_schema() -> dict:
    return json.loads((Path(__file__).parent / "data" / "report.schema.json").read_text())


# --------------------------------------------------------------------------
# pipeline


@dataclass
class PipelineConfig:
    case: str | None = None  # None selects the bundled IEEE 14-bus case
    cyber: str | None = None
    scenarios: str | None = None
    strategy: str = "combined"
    rtu_weight: float | None = None
    meter_weight: float | None = None
    sd_mult: float = 3.0
    sd_rel: float = 0.1
    epsilon: float = DEFAULT_EPSILON
    alpha: float = DEFAULT_ALPHA
    sigma: float = DEFAULT_SIGMA
    sweep: str = "0.01:0.01:0.50"
    mtd_branches: list | None = None
    target_bus: int | None = None
    target_branch: str | None = None
    mix: float = 0.5
    seed: int = 0
    out_dir: str = "gridrisk-out"
    format: str = "csv"

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = cls.__dataclass_fields__
        unknown = set(doc) - set(known)
        if unknown:
            raise PipelineError("config", f"unknown config keys {sorted(unknown)}")
        return cls(**{k.replace("-", "_"): v for k, v in doc.items()})

    def merged(self, **overrides) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def parse_sweep(text: str) -> tuple[float, ...]:
    """``start:step:stop`` (inclusive) or a comma-separated list of levels."""
    try:
        if ":" in text:
            start, step, stop = (float(v) for v in text.split(":"))
            count = int(round((stop - start) / step)) + 1
            return tuple(float(round(start + k * step, 10)) for k in range(count))
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise PipelineError("config", f"cannot parse sweep {text!r}") from None


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except PipelineError:
                raise
            except (GridRiskError, ValueError, KeyError, OSError, np.linalg.LinAlgError) as exc:
                raise PipelineError(name, str(exc)) from exc
        return inner
    return wrap


@_stage("parse_case")
def _load_network(cfg: PipelineConfig) -> PowerNetwork:
    return ieee14() if cfg.case is None else load_case(cfg.case)


@_stage("cyber")
def _run_cyber(cfg: PipelineConfig, net: PowerNetwork):
    graph = default_cyber_graph(net) if cfg.cyber is None else load_cyber_graph(cfg.cyber, net)
    if cfg.rtu_weight is not None or cfg.meter_weight is not None:
        graph = graph.reweighted(cfg.rtu_weight, cfg.meter_weight)
    if cfg.strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {cfg.strategy!r}")
    return assess_cyber(net, graph)


@dataclass
class PhysicalResult:
    model: object
    z_s: np.ndarray
    attacks: list
    profile: ProtectionProfile


@_stage("physical")
def _run_physical(cfg: PipelineConfig, net: PowerNetwork) -> PhysicalResult:
    model = build_measurement_model(net, sigma=cfg.sigma)
    scen = (default_scenarios(model, cfg.sd_rel) if cfg.scenarios is None
            else read_scenario_csv(cfg.scenarios, model))
    z_s = statistical_peak(scen, cfg.sd_mult)
    if cfg.target_bus is not None or cfg.target_branch is not None:
        pairs = [(b, k) for b, k in attack_targets(net)
                 if (cfg.target_bus is None or b == cfg.target_bus)
                 and (cfg.target_branch is None or k == net.branch_index(cfg.target_branch))]
        if not pairs:
            raise ValueError("no valid (bus, branch) target matches the requested filter")
        attacks = [min_overload_attack(model, net, z_s, b, k, cfg.epsilon) for b, k in pairs]
    else:
        attacks = all_overload_attacks(model, net, z_s, cfg.epsilon)
    perturbable = (tuple(range(net.n_branch)) if cfg.mtd_branches is None
                   else tuple(net.branch_index(b) for b in cfg.mtd_branches))
    eta = detection_threshold(model.m, model.n, cfg.alpha, cfg.sigma)
    profile = mtd_protection_sweep(model, net, z_s, attacks, MtdLimits(perturbable, 0.0), eta,
                                   parse_sweep(cfg.sweep), cfg.seed)
    return PhysicalResult(model, z_s, attacks, profile)


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)
    return path


def config_echo(cfg: PipelineConfig) -> dict:
    return json.loads(json.dumps(asdict(cfg)))


def run_cyber(cfg: PipelineConfig, out: str | Path | None = None) -> Path:
    net = _load_network(cfg)
    rankings = _run_cyber(cfg, net).rankings[cfg.strategy]
    ext = "json" if cfg.format == "json" else "csv"
    path = Path(out) if out else Path(cfg.out_dir) / f"rankings.{ext}"
    return _write(path, cyber_json(rankings) if ext == "json" else cyber_csv(rankings))


def run_physical(cfg: PipelineConfig, out: str | Path | None = None) -> dict[str, Path]:
    net = _load_network(cfg)
    phys = _run_physical(cfg, net)
    path = Path(out) if out else Path(cfg.out_dir) / ("mtd.json" if cfg.format == "json" else "mtd.csv")
    if cfg.format == "json":
        main = _write(path, json.dumps(mtd_rows(phys.profile, net), indent=2))
    else:
        main = _write(path, mtd_csv(phys.profile, net))
    return {
        "mtd": main,
        "curves": _write(path.parent / "mtd_curves.csv", curves_csv(phys.profile, net)),
        "attacks": _write(path.parent / "attacks.csv", attacks_csv(phys.attacks, net)),
    }


def build_report(cfg: PipelineConfig):
    net = _load_network(cfg)
    cyber = _run_cyber(cfg, net)
    phys = _run_physical(cfg, net)
    report = _combine(cfg, cyber, phys, net)
    return net, cyber, phys, report


@_stage("combined")
def _combine(cfg, cyber, phys, net) -> RiskReport:
    rep = combined_risk_index(cyber, phys.profile, cfg.mix, net)
    return replace(rep, seed=cfg.seed, config=config_echo(cfg))


def run_combined(cfg: PipelineConfig, out: str | Path | None = None) -> Path:
    _, _, _, report = build_report(cfg)
    path = Path(out) if out else Path(cfg.out_dir) / "report.json"
    return _write(path, json.dumps(report.to_dict(), indent=2))


def run_pipeline(cfg: PipelineConfig) -> dict[str, Path]:
    """Run every stage and write rankings, MTD tables, curves and the JSON report."""
    net, cyber, phys, report = build_report(cfg)
    out = Path(cfg.out_dir)
    return {
        "rankings": _write(out / "rankings.csv", cyber_csv(cyber.rankings[cfg.strategy])),
        "mtd": _write(out / "mtd.csv", mtd_csv(phys.profile, net)),
        "curves": _write(out / "mtd_curves.csv", curves_csv(phys.profile, net)),
        "attacks": _write(out / "attacks.csv", attacks_csv(phys.attacks, net)),
        "report": _write(out / "report.json", json.dumps(report.to_dict(), indent=2)),
    }
