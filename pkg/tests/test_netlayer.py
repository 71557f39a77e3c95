import math

import networkx as nx
import numpy as np
import pytest

from qrnet import (
    ChannelResult,
    ConnectionModel,
    ConnectionRequest,
    EdgeSpec,
    EventKind,
    Failure,
    LinkProtocol,
    NetworkService,
    NoPathError,
    NodeSpec,
    PathCost,
    PhysicsParams,
    RepeaterClass,
    Role,
    Simulator,
    Topology,
    build_routing_tables,
    compute_path,
    establish_connection_oriented,
    establish_connectionless,
    establish_hybrid,
)

from conftest import chain_topology

PARAMS = PhysicsParams()


def _co_request(rid, src, dst, **kw):
    return ConnectionRequest(rid, src, dst, RepeaterClass.FIRST,
                             LinkProtocol.SIMULTANEOUS,
                             ConnectionModel.CONNECTION_ORIENTED, **kw)


def _cl_request(rid, src, dst, cls=RepeaterClass.FIRST, **kw):
    return ConnectionRequest(rid, src, dst, cls, LinkProtocol.ONE_BY_ONE,
                             ConnectionModel.CONNECTIONLESS, **kw)


# --------------------------------------------------------------------------
# routing


def test_weighted_triangle_prefers_two_cheap_hops():
    topo = Topology()
    for nid in ("A", "B", "C"):
        topo.add_node(NodeSpec(nid, role=Role.SWITCH,
                               repeater_class=RepeaterClass.FIRST))
    topo.add_edge(EdgeSpec("ab", "A", "B", weight=1.0))
    topo.add_edge(EdgeSpec("bc", "B", "C", weight=1.0))
    topo.add_edge(EdgeSpec("ac", "A", "C", weight=3.0))
    assert compute_path(topo, "A", "C") == ["A", "B", "C"]
    # drop the detour's advantage and the direct edge wins
    topo.edges["ac"].weight = 1.5
    assert compute_path(topo, "A", "C") == ["A", "C"]


def test_latency_and_loss_metrics_disagree_when_they_should():
    # short but lossy versus long but clean
    topo = Topology()
    for nid in ("s", "m", "t"):
        role = Role.SWITCH if nid == "m" else Role.END
        topo.add_node(NodeSpec(nid, role=role, repeater_class=RepeaterClass.FIRST))
    topo.add_edge(EdgeSpec("direct", "s", "t", length_km=10.0,
                           alpha_db_per_km=2.0))
    topo.add_edge(EdgeSpec("sm", "s", "m", length_km=30.0, alpha_db_per_km=0.1))
    topo.add_edge(EdgeSpec("mt", "m", "t", length_km=30.0, alpha_db_per_km=0.1))
    assert compute_path(topo, "s", "t", PathCost.LATENCY) == ["s", "t"]
    assert compute_path(topo, "s", "t", PathCost.LOSS_WEIGHTED) == ["s", "m", "t"]


def test_interior_constraints():
    # ends may not relay traffic
    topo = Topology()
    for nid, role in [("a", Role.END), ("b", Role.END), ("c", Role.END)]:
        topo.add_node(NodeSpec(nid, role=role, repeater_class=RepeaterClass.FIRST))
    topo.add_edge(EdgeSpec("ab", "a", "b"))
    topo.add_edge(EdgeSpec("bc", "b", "c"))
    with pytest.raises(NoPathError):
        compute_path(topo, "a", "c")
    # class filter excludes mismatched interiors
    mixed = chain_topology([10.0, 10.0])
    mixed.nodes["n1"].repeater_class = RepeaterClass.SECOND
    with pytest.raises(NoPathError):
        compute_path(mixed, "n0", "n2", repeater_class=RepeaterClass.FIRST)
    assert compute_path(mixed, "n0", "n2",
                        repeater_class=RepeaterClass.SECOND) == ["n0", "n1", "n2"]


def test_no_path_between_components():
    topo = Topology()
    for nid in ("a", "b", "c", "d"):
        topo.add_node(NodeSpec(nid, role=Role.END,
                               repeater_class=RepeaterClass.FIRST))
    topo.add_edge(EdgeSpec("ab", "a", "b"))
    topo.add_edge(EdgeSpec("cd", "c", "d"))
    with pytest.raises(NoPathError):
        compute_path(topo, "a", "d")


def test_costs_match_networkx_on_random_graphs():
    rng = np.random.default_rng(29)
    for trial in range(20):
        n = int(rng.integers(4, 10))
        topo = Topology()
        graph = nx.Graph()
        for i in range(n):
            topo.add_node(NodeSpec(f"v{i}", role=Role.SWITCH,
                                   repeater_class=RepeaterClass.FIRST))
            graph.add_node(f"v{i}")
        edges = set()
        # random spanning path keeps it connected, then extra chords
        order = rng.permutation(n)
        for a, b in zip(order, order[1:]):
            edges.add((min(a, b), max(a, b)))
        for _ in range(n):
            a, b = rng.integers(0, n, size=2)
            if a != b:
                edges.add((min(a, b), max(a, b)))
        for k, (a, b) in enumerate(sorted(edges)):
            length = float(rng.uniform(1.0, 50.0))
            topo.add_edge(EdgeSpec(f"e{k}", f"v{a}", f"v{b}", length_km=length))
            graph.add_edge(f"v{a}", f"v{b}", weight=length)
        src, dst = f"v{order[0]}", f"v{order[-1]}"
        path = compute_path(topo, src, dst, PathCost.LATENCY)
        mine = sum(
            topo.edge_between(u, v).length_km for u, v in zip(path, path[1:])
        )
        ref = nx.dijkstra_path_length(graph, src, dst)
        assert math.isclose(mine, ref, rel_tol=1e-12), (trial, mine, ref)


def test_routing_tables_walk_every_pair():
    topo = chain_topology([10.0, 20.0, 30.0])
    tables = build_routing_tables(topo)
    # next hop from each line node toward n3 marches right
    assert tables["n0"][topo.address_of("n3")] == "e0"
    assert tables["n1"][topo.address_of("n3")] == "e1"
    assert tables["n2"][topo.address_of("n3")] == "e2"
    assert tables["n2"][topo.address_of("n0")] == "e1"
    # star: every leaf sends via the hub
    star = Topology()
    star.add_node(NodeSpec("hub", role=Role.SWITCH,
                           repeater_class=RepeaterClass.FIRST))
    for i in range(4):
        star.add_node(NodeSpec(f"leaf{i}", role=Role.END,
                               repeater_class=RepeaterClass.FIRST))
        star.add_edge(EdgeSpec(f"s{i}", "hub", f"leaf{i}"))
    stables = build_routing_tables(star)
    for i in range(4):
        for j in range(4):
            if i != j:
                assert stables[f"leaf{i}"][star.address_of(f"leaf{j}")] == f"s{i}"


def test_ten_channel_line_walks_in_order():
    # nine channels in a row plus one spur that routing must ignore
    topo = Topology()
    for i in range(10):
        role = Role.END if i in (0, 9) else Role.REPEATER
        topo.add_node(NodeSpec(f"n{i}", role=role,
                               repeater_class=RepeaterClass.SECOND,
                               memory_count=4))
    for i in range(9):
        topo.add_edge(EdgeSpec(str(i + 1), f"n{i}", f"n{i+1}", length_km=5.0,
                               alpha_db_per_km=0.0, attempt_rate_hz=1e4))
    topo.add_node(NodeSpec("spur", role=Role.END,
                           repeater_class=RepeaterClass.SECOND))
    topo.add_edge(EdgeSpec("10", "n5", "spur", length_km=5.0,
                           alpha_db_per_km=0.0, attempt_rate_hz=1e4))
    tables = build_routing_tables(topo)
    at, walked = "n0", []
    dst = topo.address_of("n9")
    while at != "n9":
        edge_id = tables[at][dst]
        walked.append(edge_id)
        at = topo.edges[edge_id].other(at)
    assert walked == [str(i) for i in range(1, 10)]
    # and the channel chain actually carries a connection
    sim = Simulator(topo, PARAMS, seed=31)
    res = establish_connectionless(
        _cl_request("walk", "n0", "n9", cls=RepeaterClass.SECOND), sim
    )
    assert isinstance(res, ChannelResult), res


# --------------------------------------------------------------------------
# connection-oriented


def test_co_three_node_exact_latency():
    topo = chain_topology([50.0, 30.0], eps_op=0.01)
    sim = Simulator(topo, PARAMS, seed=11)
    res = establish_connection_oriented(
        _co_request("co1", "n0", "n2"), sim, controller="n1"
    )
    assert isinstance(res, ChannelResult), res
    # request to controller (50 km), orders back out to the farthest
    # participant (50 km), then the link layer's 1.5e-3 session
    expect = 2.5e-4 + 2.5e-4 + 1e-3 + 2.5e-4 + 2.5e-4
    assert math.isclose(res.setup_latency_s, expect, abs_tol=1e-12)
    assert math.isclose(res.link.w, 0.99)
    for n in ("n0", "n1", "n2"):
        assert sim.memory.available(n) == topo.nodes[n].memory_count


def test_co_deadline_zero_times_out_clean():
    topo = chain_topology([50.0, 30.0])
    sim = Simulator(topo, PARAMS, seed=1)
    service = NetworkService(sim, controller="n1")
    service.submit(_co_request("co2", "n0", "n2", deadline=0.0), at=0.0)
    sim.run_until()
    out = service.outcomes[0]
    assert out.outcome == "Timeout"
    assert out.node_occupancy_s == 0.0
    assert out.setup_latency_s == 0.0


def test_co_contention_is_fifo_and_restores_slots():
    topo = Topology()
    for nid in ("a", "b", "c", "d"):
        topo.add_node(NodeSpec(nid, role=Role.END,
                               repeater_class=RepeaterClass.FIRST,
                               memory_count=2))
    topo.add_node(NodeSpec("r", role=Role.REPEATER,
                           repeater_class=RepeaterClass.FIRST, memory_count=2))
    for i, (u, v) in enumerate([("a", "r"), ("b", "r"), ("c", "r"), ("d", "r")]):
        topo.add_edge(EdgeSpec(f"e{i}", u, v, length_km=10.0,
                               alpha_db_per_km=0.0, attempt_rate_hz=1e3))
    sim = Simulator(topo, PARAMS, seed=21)
    service = NetworkService(sim, controller="r")
    service.submit(_co_request("q1", "a", "b"), at=0.0)
    service.submit(_co_request("q2", "c", "d"), at=0.0)
    sim.run_until()
    assert [o.outcome for o in service.outcomes] == ["Completed", "Completed"]
    first, second = sorted(service.outcomes, key=lambda o: o.finished_at)
    # r has two slots, so q2 waits for q1's release notice
    assert first.request.request_id == "q1"
    assert second.finished_at > first.finished_at
    assert sim.memory.available("r") == 2


def test_co_reports_capability_violation():
    topo = chain_topology([10.0, 10.0], cls=RepeaterClass.THIRD, memories=0)
    sim = Simulator(topo, PARAMS, seed=1)
    req = ConnectionRequest("bad", "n0", "n2", RepeaterClass.THIRD,
                            LinkProtocol.SIMULTANEOUS,
                            ConnectionModel.CONNECTION_ORIENTED)
    res = establish_connection_oriented(req, sim)
    assert isinstance(res, Failure)
    assert res.reason == "CapabilityViolation"


def test_co_allphotonic_simultaneous_allowed():
    topo = chain_topology([10.0, 10.0], cls=RepeaterClass.ALL_PHOTONIC,
                          rate=1e4)
    sim = Simulator(topo, PARAMS, seed=8)
    req = ConnectionRequest("ap", "n0", "n2", RepeaterClass.ALL_PHOTONIC,
                            LinkProtocol.SIMULTANEOUS,
                            ConnectionModel.CONNECTION_ORIENTED)
    res = establish_connection_oriented(req, sim)
    assert isinstance(res, ChannelResult), res


# --------------------------------------------------------------------------
# connectionless


def test_cl_three_node_success_restores_slots():
    topo = chain_topology([50.0, 30.0], eps_op=0.01)
    sim = Simulator(topo, PARAMS, seed=3)
    res = establish_connectionless(_cl_request("cl1", "n0", "n2"), sim)
    assert isinstance(res, ChannelResult), res
    assert math.isclose(res.link.w, 0.99)
    assert set(res.link.endpoints()) == {"n0", "n2"}
    for n in ("n0", "n1", "n2"):
        assert sim.memory.available(n) == topo.nodes[n].memory_count


def test_cl_retry_budget_is_exact():
    topo = chain_topology([50.0, 30.0])
    sim = Simulator(topo, PARAMS, seed=5)
    service = NetworkService(sim, frame_loss_prob=1.0)
    service.submit(_cl_request("cl2", "n0", "n2", retry_limit=3), at=0.0)
    sim.run_until()
    out = service.outcomes[0]
    assert out.outcome == "RetriesExhausted"
    assert out.emissions == 4
    assert out.retries == 3
    assert out.drops.get("FrameLost") == 4
    for n in ("n0", "n1", "n2"):
        assert sim.memory.available(n) == topo.nodes[n].memory_count


def test_cl_recovers_when_loss_clears():
    topo = chain_topology([50.0, 30.0])
    sim = Simulator(topo, PARAMS, seed=5)
    service = NetworkService(sim, frame_loss_prob=1.0)
    service.submit(_cl_request("cl3", "n0", "n2", retry_limit=3), at=0.0)

    def heal():
        service.frame_loss_prob = 0.0

    sim.after(0.02, EventKind.PROTOCOL_STEP, heal, "disable loss")
    sim.run_until()
    out = service.outcomes[0]
    assert out.outcome == "Completed"
    assert out.retries >= 1
    assert out.emissions == out.retries + 1


def test_cl_third_class_relays_end_to_end():
    topo = chain_topology([10.0, 10.0, 10.0], cls=RepeaterClass.THIRD,
                          eps_res=0.01)
    sim = Simulator(topo, PARAMS, seed=9)
    res = establish_connectionless(
        _cl_request("cl4", "n0", "n3", cls=RepeaterClass.THIRD), sim
    )
    assert isinstance(res, ChannelResult), res
    assert math.isclose(res.link.w, 0.99 ** 3)
    assert res.link.decay_rate == 0.0
    for n in topo.nodes:
        assert sim.memory.available(n) == topo.nodes[n].memory_count


def test_cl_rejects_allphotonic():
    topo = chain_topology([10.0, 10.0], cls=RepeaterClass.ALL_PHOTONIC)
    sim = Simulator(topo, PARAMS, seed=4)
    req = ConnectionRequest("nc", "n0", "n2", RepeaterClass.ALL_PHOTONIC,
                            LinkProtocol.SIMULTANEOUS,
                            ConnectionModel.CONNECTIONLESS)
    res = establish_connectionless(req, sim)
    assert isinstance(res, Failure)
    assert res.reason == "CapabilityViolation"


# --------------------------------------------------------------------------
# hybrid


def test_hybrid_fast_path_product_law():
    topo = chain_topology([25.0, 25.0, 25.0, 25.0])
    sim = Simulator(topo, PARAMS, seed=13)
    req = ConnectionRequest("hy1", "n0", "n4", RepeaterClass.FIRST,
                            LinkProtocol.ONE_BY_ONE, ConnectionModel.HYBRID,
                            waypoints=("n2",))
    res = establish_hybrid(req, sim, controller="n2")
    assert isinstance(res, ChannelResult), res
    assert set(res.link.endpoints()) == {"n0", "n4"}
    assert math.isclose(res.link.w, 1.0)
    for n in topo.nodes:
        assert sim.memory.available(n) == topo.nodes[n].memory_count


def test_hybrid_alternate_single_session():
    sim = Simulator(chain_topology([25.0, 25.0, 25.0, 25.0]), PARAMS, seed=13)
    req = ConnectionRequest("hy2", "n0", "n4", RepeaterClass.FIRST,
                            LinkProtocol.ONE_BY_ONE, ConnectionModel.HYBRID,
                            waypoints=("n2",), alternate_mode=True)
    res = establish_hybrid(req, sim, controller="n2")
    assert isinstance(res, ChannelResult), res
    assert math.isclose(res.link.w, 1.0)


def test_hybrid_fast_beats_alternate_here():
    lat = {}
    for alt in (False, True):
        sim = Simulator(chain_topology([25.0, 25.0, 25.0, 25.0]), PARAMS, seed=13)
        req = ConnectionRequest("hy", "n0", "n4", RepeaterClass.FIRST,
                                LinkProtocol.ONE_BY_ONE, ConnectionModel.HYBRID,
                                waypoints=("n2",), alternate_mode=alt)
        res = establish_hybrid(req, sim, controller="n2")
        assert isinstance(res, ChannelResult)
        lat[alt] = res.setup_latency_s
    assert lat[False] < lat[True]


def test_hybrid_rejects_third_class_fast_mode():
    topo = chain_topology([10.0] * 4, cls=RepeaterClass.THIRD, memories=0)
    sim = Simulator(topo, PARAMS, seed=2)
    req = ConnectionRequest("hy3", "n0", "n4", RepeaterClass.THIRD,
                            LinkProtocol.ONE_BY_ONE, ConnectionModel.HYBRID,
                            waypoints=("n2",))
    res = establish_hybrid(req, sim)
    assert isinstance(res, Failure)
    assert res.reason == "CapabilityViolation"


def test_hybrid_requires_waypoints():
    sim = Simulator(chain_topology([10.0] * 4), PARAMS, seed=2)
    req = ConnectionRequest("hy4", "n0", "n4", RepeaterClass.FIRST,
                            LinkProtocol.ONE_BY_ONE, ConnectionModel.HYBRID)
    with pytest.raises(ValueError):
        NetworkService(sim).submit(req, at=0.0)


def test_request_validation():
    with pytest.raises(ValueError):
        ConnectionRequest("x", "a", "a", RepeaterClass.FIRST,
                          LinkProtocol.ONE_BY_ONE,
                          ConnectionModel.CONNECTIONLESS)
    with pytest.raises(ValueError):
        ConnectionRequest("x", "a", "b", RepeaterClass.FIRST,
                          LinkProtocol.ONE_BY_ONE,
                          ConnectionModel.CONNECTIONLESS, f_min=0.1)
    with pytest.raises(ValueError):
        ConnectionRequest("x", "a", "b", RepeaterClass.FIRST,
                          LinkProtocol.ONE_BY_ONE,
                          ConnectionModel.CONNECTIONLESS, retry_limit=-1)
