"""Stealthy FDI attack vectors and minimal single-bus branch overload attacks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AttackError
from .grid import MeasurementModel, PowerNetwork, build_measurement_model

DEFAULT_EPSILON = 0.01


@dataclass(frozen=True)
class StatePerturbation:
    c: np.ndarray
    target_bus: int | None = None


@dataclass(frozen=True)
class OverloadAttack:
    target_bus: int
    target_branch: int
    c: StatePerturbation
    a_ol: np.ndarray
    overload_margin: float
    co: float  # capacity overhead of the target branch before the attack (p.u.)

    @property
    def c_n(self) -> float:
        return float(self.c.c[self.c.c.nonzero()[0][0]]) if np.any(self.c.c) else 0.0

    @property
    def a_norm(self) -> float:
        return float(np.linalg.norm(self.a_ol))


@dataclass(frozen=True)
class CapacityOverhead:
    co: np.ndarray


def craft_attack(model: MeasurementModel, c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape != (model.n,):
        raise ValueError(f"perturbation must have length {model.n}")
    return model.H @ c


def apply_attack(z, a) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    a = np.asarray(a, dtype=float)
    if z.shape != a.shape:
        raise ValueError(f"length mismatch: z {z.shape} vs a {a.shape}")
    return z + a


def branch_flows(model: MeasurementModel, z) -> np.ndarray:
    rows = model.flow_rows()
    if np.any(rows < 0):
        raise ValueError("measurement set lacks some branch flows")
    return np.asarray(z, dtype=float)[rows]


def capacity_overhead(z, net: PowerNetwork, model: MeasurementModel | None = None) -> CapacityOverhead:
    """Per-branch headroom ``cap - |flow|`` in p.u.; negative when overloaded."""
    model = model or build_measurement_model(net)
    return CapacityOverhead(net.capacity_pu - np.abs(branch_flows(model, z)))


def min_overload_attack(model: MeasurementModel, net: PowerNetwork, z, target_bus: int,
                        target_branch, epsilon: float = DEFAULT_EPSILON) -> OverloadAttack:
    """Smallest single-bus angle shift that drives the target flow to ``cap * (1 + epsilon)``.

    The shift pushes the flow further in its present direction. A branch that
    already carries more than the target magnitude needs no attack and gets
    ``c = 0``.
    """
    if epsilon < 0:
        raise ValueError("overload margin must be nonnegative")
    if target_bus == net.ref_bus:
        raise AttackError(f"bus {target_bus} is the reference bus and cannot be a single-bus target")
    l = net.branch_index(target_branch)
    if l not in net.incident_branches(target_bus):
        raise AttackError(f"branch {net.branches[l].label} is not incident to bus {target_bus}")
    col = net.state_index(target_bus)
    row = model.flow_rows()[l]
    h = model.H[row, col]
    if h == 0:
        raise AttackError(f"branch {net.branches[l].label} has no sensitivity to bus {target_bus}")
    z = np.asarray(z, dtype=float)
    f = z[row]
    cap = net.capacity_pu[l]
    goal = cap * (1.0 + epsilon)
    c = np.zeros(model.n)
    if abs(f) < goal:
        direction = 1.0 if f >= 0 else -1.0
        c[col] = (direction * goal - f) / h
    pert = StatePerturbation(c, target_bus)
    return OverloadAttack(target_bus, l, pert, model.H @ c, epsilon, float(cap - abs(f)))


def attack_targets(net: PowerNetwork) -> list[tuple[int, int]]:
    """Every valid (bus, branch) pair: both endpoints of each branch, minus the reference bus."""
    out = []
    for k, br in enumerate(net.branches):
        for bus in (br.from_bus, br.to_bus):
            if bus != net.ref_bus:
                out.append((bus, k))
    return sorted(out, key=lambda t: (net.bus_index(t[0]), t[1]))


def all_overload_attacks(model: MeasurementModel, net: PowerNetwork, z,
                         epsilon: float = DEFAULT_EPSILON) -> list[OverloadAttack]:
    return [min_overload_attack(model, net, z, bus, k, epsilon) for bus, k in attack_targets(net)]
