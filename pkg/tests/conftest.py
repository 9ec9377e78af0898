from __future__ import annotations

import pytest

import sdloops as sl


@pytest.fixture(scope="session")
def two_stock_model():
    model = sl.parse_model(sl.TWO_STOCK.source)
    assert sl.validate(model) == []
    return model


@pytest.fixture(scope="session")
def two_stock_run(two_stock_model):
    return sl.simulate(two_stock_model)


@pytest.fixture(scope="session")
def two_stock_series(two_stock_model, two_stock_run):
    return sl.score_all(two_stock_model, two_stock_run)


@pytest.fixture(scope="session")
def arms_model():
    model = sl.parse_model(sl.ARMS_RACE.source)
    assert sl.validate(model) == []
    return model


@pytest.fixture(scope="session")
def arms_run(arms_model):
    return sl.simulate(arms_model)


@pytest.fixture(scope="session")
def arms_series(arms_model, arms_run):
    return sl.score_all(arms_model, arms_run)


@pytest.fixture(scope="session")
def greedy_miss_graph():
    rows = [
        line.split(",")
        for line in sl.GREEDY_MISS_EDGES.source.strip().splitlines()[1:]
    ]
    return sl.WeightedDigraph.from_edges((s, d, float(w)) for s, d, w in rows)
