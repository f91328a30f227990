"""Discrete classical Bayesian networks and the exact enumeration oracle.

A :class:`BayesNet` is an immutable DAG of discrete nodes.  Every node owns a
:class:`Cpt` whose rows are indexed by parent configuration, with the FIRST
listed parent as the most significant digit, and whose columns are the node's
own states.  Flattened, the node state is the fastest-varying index; this is
exactly the ``cpt`` list of the JSON net format::

    {"nodes": [{"name": "a", "cardinality": 2, "parents": [], "cpt": [0.7, 0.3]},
               {"name": "b", "cardinality": 2, "parents": ["a"],
                "cpt": [0.9, 0.1, 0.2, 0.8]}]}

Assignments are plain tuples of state indices, one per node, in node order.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CycleError,
    DegenerateError,
    InvalidCptError,
    NetFormatError,
    TooLargeError,
    ZeroEvidenceError,
)

ROW_TOL = 1e-12
DEFAULT_ENUM_CAP = 2**24

Assignment = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class Cpt:
    """Conditional probability table ``P(y | x_1, ..., x_k)``.

    ``table[r, y]`` holds the probability of state ``y`` under parent
    configuration ``r`` (mixed radix, first parent most significant).
    """

    node_cardinality: int
    parent_cardinalities: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        if self.node_cardinality < 1:
            raise InvalidCptError("node cardinality must be >= 1")
        if any(c < 1 for c in self.parent_cardinalities):
            raise InvalidCptError("parent cardinalities must be >= 1")
        table = np.array(self.table, dtype=float, copy=True)
        expected = (self.n_rows, self.node_cardinality)
        if table.size != expected[0] * expected[1]:
            raise InvalidCptError(
                f"expected {expected[0] * expected[1]} entries, got {table.size}"
            )
        table = table.reshape(expected)
        if not np.all(np.isfinite(table)) or np.any(table < 0):
            raise InvalidCptError("entries must be finite and nonnegative")
        sums = table.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if bad.size:
            raise InvalidCptError(
                f"row {int(bad[0])} sums to {sums[bad[0]]!r}, not 1"
            )
        table.setflags(write=False)
        object.__setattr__(self, "parent_cardinalities", tuple(int(c) for c in self.parent_cardinalities))
        object.__setattr__(self, "table", table)

    @property
    def n_rows(self) -> int:
        return math.prod(self.parent_cardinalities)

    def row_index(self, parent_values: Sequence[int]) -> int:
        r = 0
        for v, c in zip(parent_values, self.parent_cardinalities):
            r = r * c + v
        return r

    def row(self, parent_values: Sequence[int]) -> np.ndarray:
        return self.table[self.row_index(parent_values)]

    def prob(self, value: int, parent_values: Sequence[int]) -> float:
        return float(self.table[self.row_index(parent_values), value])

    def flat(self) -> list[float]:
        return [float(v) for v in self.table.ravel()]

    @classmethod
    def delta(cls, cardinality: int, value: int) -> "Cpt":
        t = np.zeros((1, cardinality))
        t[0, value] = 1.0
        return cls(cardinality, (), t)

    def __eq__(self, other):
        if not isinstance(other, Cpt):
            return NotImplemented
        return (
            self.node_cardinality == other.node_cardinality
            and self.parent_cardinalities == other.parent_cardinalities
            and np.array_equal(self.table, other.table)
        )

    __hash__ = None


@dataclass(frozen=True)
class Node:
    name: str
    cardinality: int
    parents: tuple[int, ...]
    cpt: Cpt


class BayesNet:
    """Immutable discrete Bayesian network.

    Nodes are addressed by dense integer ids in declaration order.  The
    constructor validates acyclicity and CPT shapes and caches the
    topological order, children lists, and Markov blankets.
    """

    def __init__(self, nodes: Sequence[Node]):
        nodes = tuple(nodes)
        if not nodes:
            raise NetFormatError("a net needs at least one node", field="nodes")
        names = [n.name for n in nodes]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise NetFormatError(f"duplicate node name {dup!r}", field=dup)
        for node in nodes:
            if len(set(node.parents)) != len(node.parents):
                raise NetFormatError(f"node {node.name!r} lists a parent twice", field=node.name)
            for p in node.parents:
                if not 0 <= p < len(nodes) or p == nodes.index(node):
                    raise NetFormatError(f"node {node.name!r} has invalid parent {p}", field=node.name)
            if node.cpt.node_cardinality != node.cardinality:
                raise NetFormatError(
                    f"node {node.name!r}: CPT cardinality {node.cpt.node_cardinality} "
                    f"!= declared {node.cardinality}",
                    field=node.name,
                )
            pcards = tuple(nodes[p].cardinality for p in node.parents)
            if node.cpt.parent_cardinalities != pcards:
                raise NetFormatError(
                    f"node {node.name!r}: CPT parent cardinalities "
                    f"{node.cpt.parent_cardinalities} != {pcards}",
                    field=node.name,
                )
        self._nodes = nodes
        self._index = {n.name: i for i, n in enumerate(nodes)}
        children: list[list[int]] = [[] for _ in nodes]
        for i, node in enumerate(nodes):
            for p in node.parents:
                children[p].append(i)
        self._children = tuple(tuple(c) for c in children)
        self._topo = _kahn(nodes, self._children)
        self._blankets = tuple(self._blanket(i) for i in range(len(nodes)))

    # -- structure -----------------------------------------------------
    @property
    def nodes(self) -> tuple[Node, ...]:
        return self._nodes

    @property
    def n_nodes(self) -> int:
        return len(self._nodes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n.name for n in self._nodes)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(n.cardinality for n in self._nodes)

    @property
    def topological_order(self) -> tuple[int, ...]:
        return self._topo

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise NetFormatError(f"unknown node {name!r}", field=name) from None

    def parents(self, i: int) -> tuple[int, ...]:
        return self._nodes[i].parents

    def children(self, i: int) -> tuple[int, ...]:
        return self._children[i]

    def markov_blanket(self, i: int) -> frozenset[int]:
        return self._blankets[i]

    def cpt(self, i: int) -> Cpt:
        return self._nodes[i].cpt

    def _blanket(self, i: int) -> frozenset[int]:
        mb = set(self.parents(i)) | set(self._children[i])
        for c in self._children[i]:
            mb.update(self.parents(c))
        mb.discard(i)
        return frozenset(mb)

    def n_states(self) -> int:
        return math.prod(self.cardinalities)

    # -- serialization -------------------------------------------------
    @classmethod
    def from_dict(cls, data: Mapping) -> "BayesNet":
        if not isinstance(data, Mapping) or "nodes" not in data:
            raise NetFormatError("net description needs a 'nodes' list", field="nodes")
        raw = data["nodes"]
        if not isinstance(raw, list):
            raise NetFormatError("'nodes' must be a list", field="nodes")
        names = []
        for k, entry in enumerate(raw):
            if not isinstance(entry, Mapping) or not isinstance(entry.get("name"), str):
                raise NetFormatError(f"node #{k} needs a string 'name'", field=f"nodes[{k}].name")
            names.append(entry["name"])
        index = {n: i for i, n in enumerate(names)}
        nodes = []
        for entry in raw:
            name = entry["name"]
            card = entry.get("cardinality")
            if not isinstance(card, int) or isinstance(card, bool) or card < 1:
                raise NetFormatError(f"node {name!r}: 'cardinality' must be a positive integer", field=name)
            parents = entry.get("parents", [])
            if not isinstance(parents, list) or not all(isinstance(p, str) for p in parents):
                raise NetFormatError(f"node {name!r}: 'parents' must be a list of names", field=name)
            for p in parents:
                if p not in index:
                    raise NetFormatError(f"node {name!r}: unknown parent {p!r}", field=name)
            pids = tuple(index[p] for p in parents)
            pcards = []
            for p in parents:
                pc = raw[index[p]].get("cardinality")
                pcards.append(pc if isinstance(pc, int) and pc >= 1 else 1)
            values = entry.get("cpt")
            if not isinstance(values, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
            ):
                raise NetFormatError(f"node {name!r}: 'cpt' must be a list of numbers", field=name)
            try:
                cpt = Cpt(card, tuple(pcards), np.asarray(values, dtype=float))
            except InvalidCptError as exc:
                raise InvalidCptError(f"node {name!r}: {exc}", field=name) from None
            nodes.append(Node(name, card, pids, cpt))
        return cls(nodes)

    @classmethod
    def from_json(cls, text: str) -> "BayesNet":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise NetFormatError(f"invalid JSON: {exc}", field="json") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "BayesNet":
        return cls.from_json(Path(path).read_text())

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "name": n.name,
                    "cardinality": int(n.cardinality),
                    "parents": [self._nodes[p].name for p in n.parents],
                    "cpt": n.cpt.flat(),
                }
                for n in self._nodes
            ]
        }

    def __repr__(self):
        return f"BayesNet({list(self.names)})"


def _kahn(nodes: Sequence[Node], children: Sequence[Sequence[int]]) -> tuple[int, ...]:
    indeg = [len(n.parents) for n in nodes]
    ready = [i for i, d in enumerate(indeg) if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for c in children[i]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != len(nodes):
        stuck = next(n.name for i, n in enumerate(nodes) if indeg[i] > 0)
        raise CycleError(f"parent relation has a cycle through {stuck!r}", field=stuck)
    return tuple(order)


def topological_order(net: BayesNet) -> list[int]:
    """Parents-first order; ties broken by ascending node id."""
    return list(net.topological_order)


def markov_blanket(net: BayesNet, i: int) -> set[int]:
    """``pa(i) | ch(i) | pa(ch(i))`` without ``i`` itself."""
    if not 0 <= i < net.n_nodes:
        raise IndexError(f"node id {i} out of range")
    return set(net.markov_blanket(i))


# ---------------------------------------------------------------------------
# Queries and posterior tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Query:
    """Evidence ``E`` (node -> clamped state) and ordered hypotheses ``H``."""

    evidence: Mapping[int, int] = field(default_factory=dict)
    hypotheses: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "evidence", dict(self.evidence))
        object.__setattr__(self, "hypotheses", tuple(self.hypotheses))
        if len(set(self.hypotheses)) != len(self.hypotheses):
            raise NetFormatError("hypotheses listed twice", field="hypotheses")
        overlap = set(self.evidence) & set(self.hypotheses)
        if overlap:
            raise NetFormatError(
                f"node {min(overlap)} is both evidence and hypothesis", field="hypotheses"
            )

    def validate(self, net: BayesNet) -> "Query":
        for i, v in self.evidence.items():
            if not 0 <= i < net.n_nodes:
                raise NetFormatError(f"evidence node id {i} out of range", field="evidence")
            if not 0 <= v < net.cardinalities[i]:
                raise NetFormatError(
                    f"evidence state {v} out of range for {net.names[i]!r}", field=net.names[i]
                )
        for i in self.hypotheses:
            if not 0 <= i < net.n_nodes:
                raise NetFormatError(f"hypothesis node id {i} out of range", field="hypotheses")
        return self

    @classmethod
    def from_names(cls, net: BayesNet, evidence: Mapping[str, int] | None = None,
                   hypotheses: Iterable[str] = ()) -> "Query":
        ev = {net.index(k): v for k, v in (evidence or {}).items()}
        return cls(ev, tuple(net.index(h) for h in hypotheses)).validate(net)

    @classmethod
    def from_dict(cls, net: BayesNet, data: Mapping) -> "Query":
        if not isinstance(data, Mapping):
            raise NetFormatError("query must be a JSON object", field="query")
        ev = data.get("evidence", {})
        if not isinstance(ev, Mapping):
            raise NetFormatError("'evidence' must map names to states", field="evidence")
        for k, v in ev.items():
            if not isinstance(v, int) or isinstance(v, bool):
                raise NetFormatError(f"evidence for {k!r} must be an integer state", field=k)
        hyp = data.get("hypotheses", [])
        if not isinstance(hyp, list) or not all(isinstance(h, str) for h in hyp):
            raise NetFormatError("'hypotheses' must be a list of names", field="hypotheses")
        return cls.from_names(net, ev, hyp)

    @classmethod
    def load(cls, net: BayesNet, path: str | Path) -> "Query":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise NetFormatError(f"invalid JSON: {exc}", field="json") from None
        return cls.from_dict(net, data)

    def consistent(self, x: Sequence[int]) -> bool:
        return all(x[i] == v for i, v in self.evidence.items())


class PosteriorTable:
    """Accumulated weights ``W[(x)_H]`` and ``W_tot``.

    Estimates are ``W[h] / W_tot``.  Tables over the same hypotheses merge by
    adding weights, which is how independent chains are combined.
    """

    def __init__(self, hypotheses: Sequence[int], cardinalities: Sequence[int]):
        self.hypotheses = tuple(hypotheses)
        self.cardinalities = tuple(cardinalities)
        self.weights: dict[tuple[int, ...], float] = {}
        self.total = 0.0
        self.n_samples = 0

    @classmethod
    def for_query(cls, net: BayesNet, q: Query) -> "PosteriorTable":
        return cls(q.hypotheses, [net.cardinalities[h] for h in q.hypotheses])

    def add(self, key: tuple[int, ...], weight: float = 1.0) -> None:
        self.weights[key] = self.weights.get(key, 0.0) + weight
        self.total += weight

    def keys(self) -> list[tuple[int, ...]]:
        return list(itertools.product(*(range(c) for c in self.cardinalities)))

    def estimates(self) -> dict[tuple[int, ...], float]:
        if self.total <= 0:
            raise ZeroDivisionError("posterior table has zero total weight")
        return {k: self.weights.get(k, 0.0) / self.total for k in self.keys()}

    def as_array(self) -> np.ndarray:
        est = self.estimates()
        return np.array([est[k] for k in self.keys()]).reshape(self.cardinalities)

    def merge(self, other: "PosteriorTable") -> "PosteriorTable":
        if other.hypotheses != self.hypotheses:
            raise ValueError("cannot merge tables over different hypotheses")
        out = PosteriorTable(self.hypotheses, self.cardinalities)
        for src in (self, other):
            for k, w in src.weights.items():
                out.weights[k] = out.weights.get(k, 0.0) + w
        out.total = self.total + other.total
        out.n_samples = self.n_samples + other.n_samples
        return out

    def to_json_dict(self) -> dict[str, float]:
        return {",".join(map(str, k)): v for k, v in self.estimates().items()}

    def max_abs_diff(self, other: "PosteriorTable") -> float:
        return float(np.max(np.abs(self.as_array() - other.as_array())))

    def __repr__(self):
        return f"PosteriorTable(H={self.hypotheses}, total={self.total:g}, n={self.n_samples})"


# ---------------------------------------------------------------------------
# Probabilities
# ---------------------------------------------------------------------------


def joint_probability(net: BayesNet, x: Sequence[int]) -> float:
    """Product of CPT entries ``P(x_i | x_pa(i))`` over all nodes."""
    p = 1.0
    for i in net.topological_order:
        node = net.nodes[i]
        p *= node.cpt.prob(x[i], [x[j] for j in node.parents])
        if p == 0.0:
            break
    return p


def joint_table(net: BayesNet, cap: int = DEFAULT_ENUM_CAP) -> np.ndarray:
    """Dense joint distribution with one axis per node."""
    cards = net.cardinalities
    if net.n_states() > cap:
        raise TooLargeError(f"{net.n_states()} joint states exceed the cap {cap}")
    joint = np.ones(cards)
    for i, node in enumerate(net.nodes):
        axes = list(node.parents) + [i]
        factor = node.cpt.table.reshape(node.cpt.parent_cardinalities + (node.cardinality,))
        order = np.argsort(axes)
        shape = [1] * net.n_nodes
        for a in axes:
            shape[a] = cards[a]
        joint = joint * factor.transpose(order).reshape(shape)
    return joint


def exact_posterior(net: BayesNet, q: Query, cap: int = DEFAULT_ENUM_CAP) -> PosteriorTable:
    """``P((x)_H | (x)_E)`` by full enumeration of the joint."""
    q.validate(net)
    joint = joint_table(net, cap)
    index = [slice(None)] * net.n_nodes
    for i, v in q.evidence.items():
        index[i] = slice(v, v + 1)
    sub = joint[tuple(index)]
    pe = float(sub.sum())
    if pe <= 0.0:
        raise ZeroEvidenceError("evidence has probability zero")
    others = tuple(i for i in range(net.n_nodes) if i not in q.hypotheses)
    marg = sub.sum(axis=others)
    # remaining axes are in ascending node order; reorder to H order
    remaining = sorted(q.hypotheses)
    marg = np.transpose(marg, [remaining.index(h) for h in q.hypotheses]) if q.hypotheses else marg
    table = PosteriorTable.for_query(net, q)
    for key in table.keys():
        table.weights[key] = float(marg[key]) / pe if key else float(marg) / pe
    table.total = float(sum(table.weights.values()))
    return table


def blanket_weights(net: BayesNet, i: int, x: Sequence[int]) -> np.ndarray:
    """Unnormalized ``P(x_i | pa) * prod_{c in ch(i)} P(x_c | pa(c))`` over states of ``i``."""
    node = net.nodes[i]
    x = list(x)
    w = np.array(node.cpt.row([x[j] for j in node.parents]), dtype=float)
    saved = x[i]
    for v in range(node.cardinality):
        if w[v] == 0.0:
            continue
        x[i] = v
        for c in net.children(i):
            child = net.nodes[c]
            w[v] *= child.cpt.prob(x[c], [x[j] for j in child.parents])
    x[i] = saved
    return w


def conditional_given_blanket(net: BayesNet, i: int, x: Sequence[int]) -> np.ndarray:
    """``P(x_i | (x)_MB(i))``; only the blanket entries of ``x`` are read."""
    w = blanket_weights(net, i, x)
    s = w.sum()
    if s <= 0.0:
        raise DegenerateError(f"blanket conditional of node {net.names[i]!r} is identically zero")
    return w / s


def all_assignments(cards: Sequence[int]) -> Iterable[Assignment]:
    return itertools.product(*(range(c) for c in cards))


def forward_sample(net: BayesNet, uniforms, evidence: Mapping[int, int] | None = None) -> list[int]:
    """Ancestral sample with evidence nodes clamped.

    ``uniforms`` is any object with a ``next()`` method returning floats in
    ``[0, 1)``; one value is consumed per non-evidence node.
    """
    evidence = evidence or {}
    x = [0] * net.n_nodes
    for i in net.topological_order:
        if i in evidence:
            x[i] = evidence[i]
            continue
        node = net.nodes[i]
        row = node.cpt.row([x[j] for j in node.parents])
        x[i] = inverse_cdf(np.cumsum(row), uniforms.next())
    return x


def inverse_cdf(cumulative: Sequence[float], u: float) -> int:
    """First index with ``u < cumulative[k]``; zero-mass states are never chosen."""
    for k, c in enumerate(cumulative):
        if u < c:
            return k
    # u landed above a total that rounded below 1: take the last state with mass
    last = len(cumulative) - 1
    while last > 0 and cumulative[last] == cumulative[last - 1]:
        last -= 1
    return last


def random_net(rng: np.random.Generator, n_nodes: int, cardinalities: Sequence[int] | int = 2,
               max_parents: int = 2, names: Sequence[str] | None = None,
               dirichlet: float = 1.0) -> BayesNet:
    """Random DAG over ``n_nodes`` with Dirichlet-distributed CPT rows.

    Edges only go from lower to higher ids, so the declaration order is a
    topological order.
    """
    if isinstance(cardinalities, int):
        cardinalities = [cardinalities] * n_nodes
    cardinalities = [int(c) for c in cardinalities]
    names = list(names) if names is not None else [f"x{i}" for i in range(n_nodes)]
    nodes = []
    for i in range(n_nodes):
        k = int(rng.integers(0, min(i, max_parents) + 1))
        parents = tuple(sorted(rng.choice(i, size=k, replace=False).tolist())) if k else ()
        pcards = tuple(cardinalities[p] for p in parents)
        rows = rng.dirichlet([dirichlet] * cardinalities[i], size=math.prod(pcards))
        nodes.append(Node(names[i], cardinalities[i], parents, Cpt(cardinalities[i], pcards, rows)))
    return BayesNet(nodes)
