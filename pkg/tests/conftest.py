from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from confroute.model import DataCenter, ResourceModel, Route, Topology, WanLink

FIXTURES = Path(__file__).resolve().parent / "fixtures"

settings.register_profile("default", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def load_fixture(rel: str):
    return json.loads((FIXTURES / rel).read_text())


def two_dc_topology(internet_caps=None) -> Topology:
    """FR and DE with one dc each and a single link between them."""
    lat = {
        ("FR", "m-fr", Route.WAN): 10.0, ("FR", "m-fr", Route.INTERNET): 15.0,
        ("FR", "m-de", Route.WAN): 25.0, ("FR", "m-de", Route.INTERNET): 22.0,
        ("DE", "m-de", Route.WAN): 10.0, ("DE", "m-de", Route.INTERNET): 14.0,
        ("DE", "m-fr", Route.WAN): 28.0, ("DE", "m-fr", Route.INTERNET): 30.0,
    }
    routes = {("FR", "m-fr"): (), ("DE", "m-de"): (), ("FR", "m-de"): ("DE-FR",), ("DE", "m-fr"): ("DE-FR",)}
    dist = {("FR", "m-fr"): 0.0, ("DE", "m-de"): 0.0, ("FR", "m-de"): 480.0, ("DE", "m-fr"): 480.0}
    return Topology(
        ("DE", "FR"),
        (DataCenter("m-de", "DE"), DataCenter("m-fr", "FR")),
        (WanLink("DE-FR", ("DE", "FR")),),
        routes,
        lat,
        dict(internet_caps or {}),
        dist,
    )


@pytest.fixture
def topo2() -> Topology:
    return two_dc_topology()


@pytest.fixture
def resources() -> ResourceModel:
    return ResourceModel.default()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda l: int(l.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
