"""Third-class repeaters relay the payload qubit hop by hop.

No stored halves, no swap heralds: the state rides the frame, eats a
fixed resource penalty per relay, and never decoheres in memory because
it never sits in one. Coherence time is irrelevant by construction.
"""

import math

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

EPS_RES = 0.01


def chain(hops, t_coh):
    topo = Topology()
    for i in range(hops + 1):
        role = Role.END if i in (0, hops) else Role.REPEATER
        topo.add_node(NodeSpec(f"n{i}", role=role,
                               repeater_class=RepeaterClass.THIRD,
                               memory_count=2, t_coh=t_coh,
                               eps_res=EPS_RES))
    for i in range(hops):
        topo.add_edge(EdgeSpec(f"e{i}", f"n{i}", f"n{i+1}", length_km=10.0,
                               alpha_db_per_km=0.0, attempt_rate_hz=1e4))
    return topo


def once(hops, t_coh, seed=7):
    sim = Simulator(chain(hops, t_coh), PhysicsParams(), seed=seed)
    service = NetworkService(sim)
    got = []
    req = ConnectionRequest("r", "n0", f"n{hops}", RepeaterClass.THIRD,
                            LinkProtocol.ONE_BY_ONE,
                            ConnectionModel.CONNECTIONLESS)
    service.submit(req, at=0.0, on_outcome=got.append)
    sim.run_until()
    out = got[0]
    assert out.completed, out.outcome
    fid = (1 + 3 * out.link.w_at(out.finished_at)) / 4
    return fid, out.setup_latency_s


print(f"per-relay resource penalty {EPS_RES}, so w = (1 - {EPS_RES})^hops")
print(f"{'hops':>5} {'fidelity':>9} {'expected':>9} {'latency':>10}")
for hops in (1, 2, 3, 5, 8):
    fid, lat = once(hops, t_coh=1.0)
    expect = (1 + 3 * (1 - EPS_RES) ** hops) / 4
    print(f"{hops:>5} {fid:>9.5f} {expect:>9.5f} {lat * 1e3:>8.3f}ms")

print()
print("three coherence times, same seed, 3 hops:")
for t_coh in (1e-3, 1.0, math.inf):
    fid, lat = once(3, t_coh)
    print(f"  t_coh={t_coh:<8g} fidelity={fid!r}")
