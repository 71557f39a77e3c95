"""Simultaneous vs one-by-one link building on a lossy chain.

The simultaneous protocol fires every segment in parallel and pays for the
slowest; one-by-one extends from the left and pays for the sum. The gap
widens as sources get worse.
"""

import statistics

from qrnet import (
    ChannelResult,
    EdgeSpec,
    NodeSpec,
    PhysicsParams,
    RepeaterClass,
    Role,
    Simulator,
    Topology,
    one_by_one_link,
    simultaneous_link,
)

HOPS = 4
SEEDS = 200
PATH = [f"n{i}" for i in range(HOPS + 1)]


def chain(p_src):
    topo = Topology()
    for i in range(HOPS + 1):
        role = Role.END if i in (0, HOPS) else Role.REPEATER
        topo.add_node(NodeSpec(f"n{i}", role=role,
                               repeater_class=RepeaterClass.FIRST,
                               memory_count=4))
    for i in range(HOPS):
        topo.add_edge(EdgeSpec(f"e{i}", f"n{i}", f"n{i+1}", length_km=10.0,
                               alpha_db_per_km=0.0, p_src=p_src,
                               attempt_rate_hz=1e3))
    return topo


print(f"{HOPS}-hop chain, 10 km hops, attempt rate 1 kHz, {SEEDS} seeds per point")
print(f"{'p_src':>6} {'simultaneous':>14} {'one-by-one':>12} {'ratio':>7}")
for p_src in (1.0, 0.8, 0.5, 0.3):
    means = {}
    for runner in (simultaneous_link, one_by_one_link):
        lats = []
        for seed in range(SEEDS):
            sim = Simulator(chain(p_src), PhysicsParams(), seed=seed)
            res = runner(sim, PATH)
            assert isinstance(res, ChannelResult)
            lats.append(res.setup_latency_s)
        means[runner.__name__] = statistics.fmean(lats)
    sl = means["simultaneous_link"]
    ol = means["one_by_one_link"]
    print(f"{p_src:>6.1f} {sl * 1e3:>12.3f}ms {ol * 1e3:>10.3f}ms {ol / sl:>7.2f}")
