"""Moving target defence: post-perturbation residuals, worst-case D-FACTS settings
and the protective MTD level of each overload attack.

The defender perturbs branch susceptances within ``b * (1 +/- rho)``. Measurements
are re-solved under the perturbed physics, so the legitimate flow pattern is
consistent with the new topology and only the stale attack vector (built on
the nominal H) can raise the residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .attack import OverloadAttack
from .errors import ObservabilityError
from .estimation import gain_factor
from .grid import MeasurementModel, PowerNetwork

MAX_RHO = 0.5
DEFAULT_GRID = tuple(np.round(np.arange(1, 51) * 0.01, 2))

STEP_TOL = 1e-6
MAX_ITER = 500
RESTARTS = 5
FD_STEP = 1e-7
_LINE_STEPS = 2.0 ** -np.arange(0, 22)
_MAX_VERTEX_DIM = 12


@dataclass(frozen=True)
class MtdLimits:
    perturbable_branches: tuple[int, ...]
    rho: float

    def __post_init__(self):
        if not 0 <= self.rho <= MAX_RHO:
            raise ValueError(f"MTD capacity rho must lie in [0, {MAX_RHO}], got {self.rho}")
        object.__setattr__(self, "perturbable_branches", tuple(sorted(set(self.perturbable_branches))))

    @classmethod
    def all_branches(cls, net: PowerNetwork, rho: float) -> "MtdLimits":
        return cls(tuple(range(net.n_branch)), rho)

    def with_rho(self, rho: float) -> "MtdLimits":
        return MtdLimits(self.perturbable_branches, rho)

    def bounds(self, b0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = b0.copy(), b0.copy()
        idx = list(self.perturbable_branches)
        lo[idx] *= 1.0 - self.rho
        hi[idx] *= 1.0 + self.rho
        return lo, hi


@dataclass(frozen=True)
class MtdOutcome:
    H_star: np.ndarray
    r_star: float
    F_n: np.ndarray
    delta_H: np.ndarray
    div: float
    div_rel: float
    rho_used: float
    susceptance: np.ndarray


# --------------------------------------------------------------------------
# residual evaluation


def _batched_residual(H: np.ndarray, w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """WLS residual norms of ``v`` against a stack of topology matrices (k, m, n)."""
    HtW = np.swapaxes(H, -1, -2) * w
    G = HtW @ H
    x = np.linalg.solve(G, (HtW @ v)[..., None])[..., 0]
    return np.linalg.norm(v - (H @ x[..., None])[..., 0], axis=-1)


def post_mtd_residual(model: MeasurementModel, H_mtd: np.ndarray, z, a) -> float:
    """Residual norm of the attacked measurements ``z + a`` estimated with ``H_mtd``."""
    H_mtd = np.asarray(H_mtd, dtype=float)
    if H_mtd.shape != model.H.shape:
        raise ValueError("post-MTD topology must have the shape of H")
    F = gain_factor(H_mtd, model.W)
    v = np.asarray(z, dtype=float) + np.asarray(a, dtype=float)
    return float(np.linalg.norm(v - H_mtd @ (F @ v)))


def residual_from_topology_change(model: MeasurementModel, H_mtd: np.ndarray, z, c) -> float:
    """Residual written through the topology change ``dH = H - H_mtd`` and the state shift ``c``.

    ``|| (I - H_n F_n) z + (I - H_n F_n) dH c ||``; equal to
    :func:`post_mtd_residual` with ``a = H c``.
    """
    F = gain_factor(H_mtd, model.W)
    S = np.eye(model.m) - H_mtd @ F
    dH = model.H - H_mtd
    return float(np.linalg.norm(S @ np.asarray(z, dtype=float) + S @ dH @ np.asarray(c, dtype=float)))


def mtd_measurements(model: MeasurementModel, z, susceptance) -> np.ndarray:
    """Noiseless measurements under perturbed susceptances for the bus injections in ``z``.

    The reference bus absorbs any injection imbalance.
    """
    net = model.net
    rows = model.injection_rows()
    if np.any(rows < 0):
        raise ValueError("re-solving under MTD needs an injection meter at every bus")
    p = np.asarray(z, dtype=float)[rows].copy()
    ref = net.bus_index(net.ref_bus)
    p[ref] -= p.sum()
    b = np.asarray(susceptance, dtype=float)
    B = model.A.T @ (b[:, None] * model.A)
    theta = np.linalg.solve(B, np.delete(p, ref))
    return model.topology(b) @ theta


def divergence(H: np.ndarray, H_mtd: np.ndarray) -> tuple[float, float]:
    """Projection of ``H_mtd`` onto the column space of ``H`` (Frobenius norm).

    Returns ``(div, div_rel)`` where ``div_rel = ||H - H_mtd||_F / ||H||_F`` is
    the relative change used for ranking; ``div`` equals ``||H||_F`` when the
    topology is unchanged.
    """
    H = np.asarray(H, dtype=float)
    H_mtd = np.asarray(H_mtd, dtype=float)
    if H.shape != H_mtd.shape:
        raise ValueError("shape mismatch")
    G = H.T @ H
    if np.linalg.matrix_rank(G) < H.shape[1]:
        raise ObservabilityError("H^T H is rank deficient")
    proj = H @ np.linalg.solve(G, H.T @ H_mtd)
    return float(np.linalg.norm(proj)), float(np.linalg.norm(H - H_mtd) / np.linalg.norm(H))


# --------------------------------------------------------------------------
# worst-case MTD search


def affected_branches(model: MeasurementModel, a, perturbable) -> tuple[list[int], list[int]]:
    """Split perturbable branches into those whose flow the attack alters and the wider
    set touching any bus whose injection the attack alters."""
    net = model.net
    a = np.asarray(a, dtype=float)
    tol = 1e-14 * max(1.0, np.abs(a).max(initial=0.0))
    frows = model.flow_rows()
    core = [k for k in perturbable if abs(a[frows[k]]) > tol]
    touched = set()
    for k, row in enumerate(model.injection_rows()):
        if abs(a[row]) > tol:
            touched.add(net.buses[k].id)
    wider = [k for k in perturbable
             if k in core or net.branches[k].from_bus in touched or net.branches[k].to_bus in touched]
    return core, wider


class _Objective:
    """Exposure residual as a function of fractional susceptance moves ``u`` in [-1, 1]^d."""

    def __init__(self, model: MeasurementModel, a: np.ndarray, branches: list[int], rho: float):
        self.model = model
        self.a = a
        self.branches = np.asarray(branches, dtype=int)
        self.rho = rho
        self.b0 = model.net.susceptance
        self.w = np.diag(model.W).copy()

    def susceptance(self, U: np.ndarray) -> np.ndarray:
        U = np.atleast_2d(U)
        b = np.broadcast_to(self.b0, (U.shape[0], self.b0.size)).copy()
        b[:, self.branches] *= 1.0 + self.rho * U
        return b

    def __call__(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        shape = U.shape[:-1]
        flat = U.reshape(-1, U.shape[-1])
        H = self.model.topology(self.susceptance(flat))
        return _batched_residual(H, self.w, self.a).reshape(shape)


def _projected_ascent(f: _Objective, U0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Multi-start projected finite-difference ascent on the unit box.

    All starts advance together; each iteration takes one forward-difference
    gradient and a batched backtracking line search along the normalised
    gradient. A start stops once its accepted move is shorter than STEP_TOL.
    """
    U = np.clip(np.array(U0, dtype=float), -1.0, 1.0)
    s, d = U.shape
    val = f(U)
    active = np.ones(s, dtype=bool)
    eye = np.eye(d) * FD_STEP
    for _ in range(MAX_ITER):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        Ua = U[idx]
        # step inward at the upper face so the probe stays feasible
        sign = np.where(Ua < 1.0 - FD_STEP, 1.0, -1.0)
        probes = Ua[:, None, :] + sign[:, None, :] * eye[None, :, :]
        grad = (f(probes) - val[idx, None]) / (FD_STEP * sign)
        # zero components that would leave the box
        grad[(Ua >= 1.0) & (grad > 0)] = 0.0
        grad[(Ua <= -1.0) & (grad < 0)] = 0.0
        gnorm = np.linalg.norm(grad, axis=1)
        stalled = gnorm == 0
        direction = grad / np.where(stalled, 1.0, gnorm)[:, None]
        trial = np.clip(Ua[:, None, :] + 2.0 * _LINE_STEPS[None, :, None] * direction[:, None, :], -1.0, 1.0)
        tv = f(trial)
        best = tv.argmax(axis=1)
        rows = np.arange(len(idx))
        new_val = tv[rows, best]
        new_U = trial[rows, best]
        improved = (new_val > val[idx]) & ~stalled
        moved = np.linalg.norm(new_U - Ua, axis=1)
        U[idx[improved]] = new_U[improved]
        val[idx[improved]] = new_val[improved]
        done = ~improved | (moved < STEP_TOL)
        active[idx[done]] = False
    return U, val


def max_residual_over_mtd(model: MeasurementModel, z, a, limits: MtdLimits, seed: int = 0,
                          warm_start=None, restarts: int = RESTARTS) -> MtdOutcome:
    """Largest residual an attack can produce over the admissible D-FACTS settings.

    Search: all box vertices of the branches whose flow the attack alters, a
    warm-start susceptance vector (if given) and ``restarts`` random points,
    each refined by projected finite-difference ascent over the affected
    branches. ``z`` supplies the bus injections; flows are re-solved for every
    candidate topology.
    """
    a = np.asarray(a, dtype=float)
    b0 = model.net.susceptance
    b_best = b0.copy()
    if limits.rho > 0 and np.any(a):
        core, wider = affected_branches(model, a, limits.perturbable_branches)
        if wider:
            f = _Objective(model, a, wider, limits.rho)
            starts = []
            vert_dims = [wider.index(k) for k in core][:_MAX_VERTEX_DIM]
            if vert_dims:
                V = np.zeros((2 ** len(vert_dims), len(wider)))
                V[:, vert_dims] = np.array(list(product((-1.0, 1.0), repeat=len(vert_dims))))
                starts.append(V[f(V).argmax()])
            if warm_start is not None:
                wb = np.asarray(warm_start, dtype=float)[wider]
                starts.append((wb / b0[wider] - 1.0) / limits.rho)
            rng = np.random.default_rng(seed)
            starts.extend(rng.uniform(-1.0, 1.0, size=(restarts, len(wider))))
            starts.append(np.zeros(len(wider)))
            U, val = _projected_ascent(f, np.array(starts))
            b_best = f.susceptance(U[val.argmax()])[0]
    lo, hi = limits.bounds(b0)
    b_best = np.clip(b_best, lo, hi)
    return _outcome(model, z, a, b_best, limits.rho)


def _outcome(model: MeasurementModel, z, a, b: np.ndarray, rho: float) -> MtdOutcome:
    H_star = model.topology(b)
    F = gain_factor(H_star, model.W)
    z_mtd = mtd_measurements(model, z, b)
    v = z_mtd + a
    r_star = float(np.linalg.norm(v - H_star @ (F @ v)))
    div, div_rel = divergence(model.H, H_star)
    return MtdOutcome(H_star, r_star, F, model.H - H_star, div, div_rel, rho, b)


# --------------------------------------------------------------------------
# protection sweep


@dataclass(frozen=True)
class ProtectionEntry:
    target_bus: int
    target_branch: int
    a_norm: float
    co: float
    c_n: float
    min_rho: float | None  # None when no grid level exposes the attack
    r_star: np.ndarray  # r_star over the rho grid
    r_star_at_min_rho: float | None
    div_eq16: float | None
    div_rel: float | None

    @property
    def protectable(self) -> bool:
        return self.min_rho is not None


@dataclass(frozen=True)
class ProtectionProfile:
    grid: tuple[float, ...]
    eta: float
    entries: tuple[ProtectionEntry, ...] = field(default_factory=tuple)

    def entry(self, bus: int, branch: int) -> ProtectionEntry:
        for e in self.entries:
            if e.target_bus == bus and e.target_branch == branch:
                return e
        raise KeyError((bus, branch))

    def for_bus(self, bus: int) -> list[ProtectionEntry]:
        return [e for e in self.entries if e.target_bus == bus]


def _check_grid(grid) -> tuple[float, ...]:
    grid = tuple(float(g) for g in grid)
    if not grid:
        raise ValueError("empty MTD grid")
    if any(not 0 < g <= MAX_RHO for g in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"MTD grid must be ascending within (0, {MAX_RHO}]")
    return grid


def sweep_bus(model: MeasurementModel, z, target_bus: int, perturbable, grid, seed: int = 0) -> list[MtdOutcome]:
    """Worst-case MTD outcome at each grid level for a unit angle shift at ``target_bus``.

    Each level is warm-started from the previous optimum, which stays feasible
    in the larger box, so the optimum never decreases along the grid.
    """
    unit = model.H[:, model.net.state_index(target_bus)]
    out, warm = [], None
    for rho in _check_grid(grid):
        res = max_residual_over_mtd(model, z, unit, MtdLimits(tuple(perturbable), rho), seed=seed, warm_start=warm)
        out.append(res)
        warm = res.susceptance
    return out


def mtd_protection_sweep(model: MeasurementModel, net: PowerNetwork, z_s, attacks: list[OverloadAttack],
                         limits: MtdLimits | None = None, eta: float | None = None,
                         grid=DEFAULT_GRID, seed: int = 0) -> ProtectionProfile:
    """Smallest MTD capacity on ``grid`` whose worst-case residual exceeds ``eta`` for each attack.

    The residual of a single-bus attack is proportional to the size of its
    angle shift, so the worst-case topology is searched once per target bus
    (for a unit shift) and reused for every branch attacked from that bus.
    """
    from .estimation import detection_threshold

    grid = _check_grid(grid)
    perturbable = (limits.perturbable_branches if limits is not None else tuple(range(net.n_branch)))
    if eta is None:
        eta = detection_threshold(model.m, model.n, sigma=model.sigma)
    per_bus: dict[int, list[MtdOutcome]] = {}
    entries = []
    for att in attacks:
        bus = att.target_bus
        if bus not in per_bus:
            per_bus[bus] = sweep_bus(model, z_s, bus, perturbable, grid, seed)
        curve = []
        for out in per_bus[bus]:
            v = mtd_measurements(model, z_s, out.susceptance) + att.a_ol
            curve.append(float(np.linalg.norm(v - out.H_star @ (out.F_n @ v))))
        curve = np.array(curve)
        hit = np.flatnonzero(curve > eta)
        if hit.size:
            k = int(hit[0])
            o = per_bus[bus][k]
            entries.append(ProtectionEntry(bus, att.target_branch, att.a_norm, att.co, att.c_n,
                                           grid[k], curve, float(curve[k]), o.div, o.div_rel))
        else:
            entries.append(ProtectionEntry(bus, att.target_branch, att.a_norm, att.co, att.c_n,
                                           None, curve, None, None, None))
    return ProtectionProfile(grid, float(eta), tuple(entries))


def bus_exposure(profile: ProtectionProfile) -> dict[int, ProtectionEntry]:
    """Worst incident-branch entry per bus: unprotectable first, then the largest required rho."""
    worst: dict[int, ProtectionEntry] = {}
    for e in profile.entries:
        cur = worst.get(e.target_bus)
        if cur is None or _exposure_key(e) > _exposure_key(cur):
            worst[e.target_bus] = e
    return worst


def _exposure_key(e: ProtectionEntry):
    return (1, 0.0, -e.a_norm) if e.min_rho is None else (0, e.min_rho, e.div_rel)


def rank_physical_targets(profile: ProtectionProfile) -> list[tuple[int, ProtectionEntry]]:
    """Buses ordered from hardest to protect (needs the most topology divergence) to easiest."""
    worst = bus_exposure(profile)
    return sorted(worst.items(), key=lambda kv: (_exposure_key(kv[1]), -kv[0]), reverse=True)
