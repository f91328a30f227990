from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_acceptance():
    """Record one PASS/FAIL line per acceptance criterion for the summary."""

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] AC{number:>2} {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("AC")[1].split()[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(20240611)


FIG_BLANKET = {
    # x'' -> x' -> x -> a <- a' <- a'', a -> b
    "nodes": [
        {"name": "x2", "cardinality": 2, "parents": [], "cpt": [0.3, 0.7]},
        {"name": "x1", "cardinality": 2, "parents": ["x2"], "cpt": [0.6, 0.4, 0.1, 0.9]},
        {"name": "x", "cardinality": 2, "parents": ["x1"], "cpt": [0.8, 0.2, 0.35, 0.65]},
        {"name": "a2", "cardinality": 2, "parents": [], "cpt": [0.55, 0.45]},
        {"name": "a1", "cardinality": 2, "parents": ["a2"], "cpt": [0.25, 0.75, 0.9, 0.1]},
        {"name": "a", "cardinality": 2, "parents": ["a1", "x"],
         "cpt": [0.7, 0.3, 0.45, 0.55, 0.15, 0.85, 0.6, 0.4]},
        {"name": "b", "cardinality": 2, "parents": ["a"], "cpt": [0.5, 0.5, 0.05, 0.95]},
    ]
}

THREE = {
    "nodes": [
        {"name": "a", "cardinality": 2, "parents": [], "cpt": [0.6, 0.4]},
        {"name": "b", "cardinality": 2, "parents": ["a"], "cpt": [0.7, 0.3, 0.2, 0.8]},
        {"name": "c", "cardinality": 2, "parents": ["a", "b"],
         "cpt": [0.9, 0.1, 0.5, 0.5, 0.4, 0.6, 0.25, 0.75]},
    ]
}


@pytest.fixture
def three_dict():
    return json.loads(json.dumps(THREE))


@pytest.fixture
def three_net():
    from qbnsample.cbnet import BayesNet

    return BayesNet.from_dict(THREE)


@pytest.fixture
def asia():
    from importlib.resources import files

    from qbnsample.cbnet import BayesNet, Query

    root = files("qbnsample") / "data"
    net = BayesNet.load(root / "asia.json")
    return net, Query.load(net, root / "asia_query.json")
