"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np

from gridrisk.grid import Branch, Bus, PowerNetwork


def brute_force_capture(required, graph):
    """Cheapest coverage of ``required`` over every subset of (owning RTUs + required meters)."""
    req = sorted(required)
    bit = {m: 1 << k for k, m in enumerate(req)}
    full = (1 << len(req)) - 1
    items = []
    for rtu in graph.rtus:
        mask = sum(bit[m] for m in graph.ownership.get(rtu.id, ()) if m in bit)
        if mask:
            items.append((mask, rtu.weight))
    items += [(bit[m], graph.meter_weights[m]) for m in req]
    k = len(items)
    subsets = np.arange(1 << k, dtype=np.int64)
    cover = np.zeros_like(subsets)
    cost = np.zeros(len(subsets))
    for j, (mask, w) in enumerate(items):
        on = (subsets >> j) & 1
        cover |= on * mask
        cost += on * w
    return float(cost[cover == full].min())


def random_sparse_case(rng, max_bus=8):
    """Random connected network of 2..max_bus buses: a random tree plus up to two chords."""
    n = int(rng.integers(2, max_bus + 1))
    edges = set()
    for i in range(1, n):
        j = int(rng.integers(0, i))
        edges.add((j + 1, i + 1))
    for _ in range(int(rng.integers(0, 3))):
        a, b = sorted(rng.choice(np.arange(1, n + 1), 2, replace=False).tolist()) if n > 2 else (1, 2)
        edges.add((a, b))
    buses = tuple(Bus(i) for i in range(1, n + 1))
    branches = tuple(Branch(a, b, float(rng.uniform(0.05, 0.5)), 100.0) for a, b in sorted(edges))
    return PowerNetwork(buses, branches, ref_bus=1)


def random_cyber_graph(rng, net):
    """RTUs on a random subset of buses; each meter reports to a random RTU; integer weights."""
    from gridrisk.cyber import CyberGraph, Rtu
    from gridrisk.grid import flow_label, injection_label

    meters = [injection_label(b.id) for b in net.buses] + [flow_label(br) for br in net.branches]
    n_rtu = int(rng.integers(1, net.n_bus + 1))
    hosts = sorted(rng.choice(net.bus_ids, n_rtu, replace=False).tolist())
    rtus = tuple(Rtu(f"R{h}", h, float(rng.integers(1, 6))) for h in hosts)
    owned = {r.id: set() for r in rtus}
    for m in meters:
        owned[rtus[int(rng.integers(0, len(rtus)))].id].add(m)
    weights = {m: float(rng.integers(1, 6)) for m in meters}
    return CyberGraph(rtus, weights, {k: frozenset(v) for k, v in owned.items()})


def explicit_residual(H, W, v):
    """Residual norm through the explicit matrix I - H (H^T W H)^-1 H^T W."""
    S = np.eye(H.shape[0]) - H @ np.linalg.inv(H.T @ W @ H) @ H.T @ W
    return float(np.linalg.norm(S @ v))


def topology_by_loops(net, susceptance):
    """H assembled row by row for an arbitrary susceptance vector (injections first, then flows)."""
    states = [b.id for b in net.buses if b.id != net.ref_bus]
    col = {bid: k for k, bid in enumerate(states)}
    rows = []
    for bus in net.buses:
        row = np.zeros(len(states))
        for k, br in enumerate(net.branches):
            if bus.id not in (br.from_bus, br.to_bus):
                continue
            other = br.to_bus if br.from_bus == bus.id else br.from_bus
            if bus.id in col:
                row[col[bus.id]] += susceptance[k]
            if other in col:
                row[col[other]] -= susceptance[k]
        rows.append(row)
    for k, br in enumerate(net.branches):
        row = np.zeros(len(states))
        if br.from_bus in col:
            row[col[br.from_bus]] += susceptance[k]
        if br.to_bus in col:
            row[col[br.to_bus]] -= susceptance[k]
        rows.append(row)
    return np.array(rows)


def grid_search_max_residual(net, W, a, p_pu, rho, points=21, branches=None):
    """Dense grid over the susceptance box; flows re-solved for each candidate from bus injections."""
    b0 = np.array([1 / br.x_pu for br in net.branches])
    branches = list(range(net.n_branch)) if branches is None else list(branches)
    axes = [np.linspace(1 - rho, 1 + rho, points)] * len(branches)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(branches))
    ref = [b.id for b in net.buses].index(net.ref_bus)
    best = 0.0
    for scale in mesh:
        b = b0.copy()
        b[branches] *= scale
        H = topology_by_loops(net, b)
        inj = H[: net.n_bus]
        theta = np.linalg.lstsq(np.delete(inj, ref, axis=0), np.delete(p_pu, ref), rcond=None)[0]
        best = max(best, explicit_residual(H, W, H @ theta + a))
    return best
