import pytest

from uavroute.env import build_scenario
from uavroute.netmodel import UavNode, build_graph, generate_topology, link_table
from uavroute.screening import ScreeningParams, screen


@pytest.fixture(scope="session")
def scenario40():
    graph = generate_topology(3, source_distance=720.0)
    return build_scenario(graph, seed=3)


@pytest.fixture(scope="session")
def screened40(scenario40):
    links = link_table(scenario40.graph, scenario40.channel, 1e6)
    return screen(scenario40.graph, scenario40.trust, links, ScreeningParams())


def line_graph(xs, o_max=200.0, area=1000.0, y=0.0):
    """UAVs on a horizontal line; the last position is the destination."""
    nodes = [UavNode(i, float(x), y) for i, x in enumerate(xs[:-1])]
    nodes.append(UavNode(len(xs) - 1, float(xs[-1]), y, proc_time=0.0, compute_load=0.0))
    return build_graph(nodes, len(xs) - 1, o_max, area, source=0)


def random_small_graph(rng, n_nodes, area=400.0, o_max=180.0):
    pos = rng.uniform(0, area, size=(n_nodes, 2))
    nodes = [UavNode(i, *map(float, pos[i])) for i in range(n_nodes - 1)]
    nodes.append(UavNode(n_nodes - 1, *map(float, pos[-1]), proc_time=0.0, compute_load=0.0))
    return build_graph(nodes, n_nodes - 1, o_max, area)


@pytest.fixture(scope="session")
def rerouting40():
    """A 40-UAV scenario whose screened subgraph survives two detections."""
    graph = generate_topology(7, source_distance=720.0)
    sc = build_scenario(graph, seed=7)
    return sc, screen(graph, sc.trust, link_table(graph, sc.channel, 1e6), ScreeningParams())


def pytest_terminal_summary(terminalreporter):
    from .helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
