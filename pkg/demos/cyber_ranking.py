"""
Intrusion cost of every bus on the IEEE 14-bus case
===================================================

Which busbar is cheapest to take over through the SCADA network, and does it
pay to buy whole RTUs or individual meters?
"""

import numpy as np

from gridrisk import (STRATEGIES, attacking_subgraph, default_cyber_graph, ieee14,
                      min_cost_capture, rank_cyber_targets)

net = ieee14()
graph = default_cyber_graph(net)

# The attacker must control the target injection, the incident flows and the
# neighbouring injections: 2 * degree + 1 meters.
for bus in (6, 8):
    sub = attacking_subgraph(net, bus)
    print(f"bus {bus}: degree {net.degree(bus)}, {len(sub.required_meters)} meters ->", sub.required_meters)

# Unit weights: capturing RTUs is never worse than capturing meters.
table = np.array([[min_cost_capture(attacking_subgraph(net, b), graph, s).total_cost for s in STRATEGIES]
                  for b in net.state_buses()])
print("\nbus  " + "  ".join(f"{s:>10}" for s in STRATEGIES))
for bus, row in zip(net.state_buses(), table):
    print(f"{bus:3d}  " + "  ".join(f"{v:10.0f}" for v in row))

print("\ncheapest target:", rank_cyber_targets(net, graph, "rtu-only")[0])

# Make RTUs three times as hard to break into: mixed plans appear.
hard = graph.reweighted(rtu_weight=3.0)
for bus, plan in rank_cyber_targets(net, hard, "combined"):
    if plan.kind == "combined":
        print(f"bus {bus}: cost {plan.total_cost:.0f} via {plan.captured_rtus} + {plan.captured_meters}")
