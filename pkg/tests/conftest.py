"""Shared topology builders for the test suite."""

from qrnet import EdgeSpec, NodeSpec, RepeaterClass, Role, Topology


def chain_topology(
    lengths,
    cls=RepeaterClass.FIRST,
    rate=1e3,
    memories=4,
    alpha=0.0,
    p_src=1.0,
    **node_kw,
):
    """A line of nodes: ends are users, everything between is a repeater."""
    topo = Topology()
    n = len(lengths) + 1
    for i in range(n):
        role = Role.END if i in (0, n - 1) else Role.REPEATER
        topo.add_node(
            NodeSpec(
                f"n{i}",
                role=role,
                repeater_class=cls,
                memory_count=memories,
                **node_kw,
            )
        )
    for i, length in enumerate(lengths):
        topo.add_edge(
            EdgeSpec(
                f"e{i}",
                f"n{i}",
                f"n{i+1}",
                length_km=length,
                alpha_db_per_km=alpha,
                p_src=p_src,
                attempt_rate_hz=rate,
            )
        )
    return topo


def grid_topology(
    rows,
    cols,
    length_km=5.0,
    cls=RepeaterClass.FIRST,
    rate=1e3,
    memories=4,
    p_src=1.0,
    **node_kw,
):
    """rows x cols lattice of switches, node ids g{r}{c}.

    Every node is a switch so the router may relay through any of them;
    requests still name arbitrary endpoints.
    """
    topo = Topology()
    for r in range(rows):
        for c in range(cols):
            topo.add_node(
                NodeSpec(
                    f"g{r}{c}",
                    role=Role.SWITCH,
                    repeater_class=cls,
                    memory_count=memories,
                    **node_kw,
                )
            )
    k = 0
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                k += 1
                topo.add_edge(
                    EdgeSpec(
                        f"h{k}",
                        f"g{r}{c}",
                        f"g{r}{c+1}",
                        length_km=length_km,
                        alpha_db_per_km=0.0,
                        p_src=p_src,
                        attempt_rate_hz=rate,
                    )
                )
            if r + 1 < rows:
                k += 1
                topo.add_edge(
                    EdgeSpec(
                        f"v{k}",
                        f"g{r}{c}",
                        f"g{r+1}{c}",
                        length_km=length_km,
                        alpha_db_per_km=0.0,
                        p_src=p_src,
                        attempt_rate_hz=rate,
                    )
                )
    return topo
