"""Connection-oriented vs connectionless service on a congested grid.

Traffic funnels through the top-row corridor of a 4x4 grid. Reserving the
whole path up front (connection-oriented) keeps every admitted run clean,
so the fidelity spread stays tight, but admission collapses once the
corridor saturates. Hop-by-hop forwarding (connectionless) keeps serving,
at the price of noisier deliveries.
"""

import statistics

import numpy as np

from qrnet import (
    ConnectionModel,
    ConnectionRequest,
    EdgeSpec,
    LinkProtocol,
    NetworkService,
    NodeSpec,
    PhysicsParams,
    RepeaterClass,
    Role,
    Simulator,
    Topology,
)

SEED = 20240817
N_REQ = 300
ARRIVAL_RATE = 8000.0
DEADLINE = 0.03
PAIRS = [
    ("g00", "g33"), ("g01", "g33"), ("g00", "g23"), ("g02", "g33"),
    ("g10", "g33"), ("g00", "g13"), ("g03", "g30"), ("g01", "g32"),
]


def grid():
    topo = Topology()
    for r in range(4):
        for c in range(4):
            topo.add_node(NodeSpec(
                f"g{r}{c}", role=Role.SWITCH,
                repeater_class=RepeaterClass.FIRST,
                memory_count=2, t_coh=0.05,
            ))
    k = 0
    for r in range(4):
        for c in range(4):
            if c + 1 < 4:
                k += 1
                topo.add_edge(EdgeSpec(
                    f"h{k}", f"g{r}{c}", f"g{r}{c+1}", length_km=5.0,
                    alpha_db_per_km=0.0, p_src=0.5, attempt_rate_hz=1e4,
                ))
            if r + 1 < 4:
                k += 1
                topo.add_edge(EdgeSpec(
                    f"v{k}", f"g{r}{c}", f"g{r+1}{c}", length_km=5.0,
                    alpha_db_per_km=0.0, p_src=0.5, attempt_rate_hz=1e4,
                ))
    return topo


def run(model):
    sim = Simulator(grid(), PhysicsParams(), seed=SEED)
    service = NetworkService(
        sim, controller="g11",
        pipelining=(model is ConnectionModel.CONNECTION_ORIENTED),
    )
    rng = np.random.default_rng(SEED)
    times = np.cumsum(rng.exponential(1.0 / ARRIVAL_RATE, size=N_REQ))
    picks = [PAIRS[int(rng.integers(0, len(PAIRS)))] for _ in range(N_REQ)]
    proto = (LinkProtocol.SIMULTANEOUS
             if model is ConnectionModel.CONNECTION_ORIENTED
             else LinkProtocol.ONE_BY_ONE)
    for k, (at, (src, dst)) in enumerate(zip(times, picks)):
        service.submit(
            ConnectionRequest(f"r{k}", src, dst, RepeaterClass.FIRST, proto,
                              model, deadline=DEADLINE, retry_limit=20),
            at=float(at),
        )
    sim.run_until()
    done = [o for o in service.outcomes if o.completed]
    fids = [(1 + 3 * o.link.w_at(o.finished_at)) / 4 for o in done]
    lats = [o.setup_latency_s for o in done]
    return len(done), fids, lats, sim.now


print(f"4x4 grid, 2 memories per node, {N_REQ} Poisson arrivals at "
      f"{ARRIVAL_RATE:.0f}/s, {DEADLINE * 1e3:.0f} ms deadline")
print()
for model in (ConnectionModel.CONNECTION_ORIENTED, ConnectionModel.CONNECTIONLESS):
    done, fids, lats, end = run(model)
    print(f"{model.value}:")
    print(f"  served {done}/{N_REQ} ({1 - done / N_REQ:.0%} blocked), "
          f"{done / end:.0f} per simulated second")
    print(f"  fidelity mean {statistics.fmean(fids):.4f} "
          f"sd {statistics.stdev(fids):.4f}")
    print(f"  latency mean {statistics.fmean(lats) * 1e3:.2f} ms")
    print()
