"""Q-embeddings of probability matrices and nets, and the Gibbs transition net.

An embedding of ``P(y | x)`` is a unitary ``U`` with
``U |y~=0>|x> = sum_y sqrt(P(y|x)) |y>|x>``: the parent register ``x``
doubles as its own sink image and the focus register ``y`` starts in ``|0>``.
Cardinalities are padded to powers of two with zero-probability states.

The Gibbs transition net stacks ``beta * N`` time slices; slice ``j``
resamples node ``j mod N`` and copies every other node forward.  Its circuit
keeps two registers per node per slice (``a`` carries the value, ``b`` is the
copy read as a control) and recycles the previous slice once the copies are
made.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cbnet import BayesNet, Cpt, Node, Query
from .circuit import (
    Circuit,
    Gate,
    SparseState,
    StateVector,
    cnot,
    marginal_distribution,
    max_qubits,
    mux_roty,
    pauli_x,
    reset,
    roty,
    run,
)
from .classical_sampling import BlanketCache, MhProposal, mh_transition_row
from .errors import NetFormatError, WidthError
from .muxor import AngleTree, chain_angles, state_prepare_circuit


def n_bits(cardinality: int) -> int:
    """Qubits needed for ``cardinality`` states (0 for a constant)."""
    return max(0, math.ceil(math.log2(cardinality))) if cardinality > 1 else 0


def padded_row(row: Sequence[float], bits: int) -> np.ndarray:
    out = np.zeros(2**bits)
    out[: len(row)] = row
    return out


@dataclass
class QEmbedding:
    """Circuit realizing one CPT.

    Local layout: parent registers occupy the low qubits with the LAST parent
    least significant, so the padded parent index equals the integer spelled
    by qubits ``0 .. n_parent_bits - 1``.  Focus bits follow, focus bit 0
    first.
    """

    cpt: Cpt
    parent_widths: tuple[int, ...]
    focus_width: int
    circuit: Circuit
    trees: dict[int, AngleTree]

    @property
    def n_parent_bits(self) -> int:
        return sum(self.parent_widths)

    @property
    def n_focus_bits(self) -> int:
        return self.focus_width

    @property
    def parent_qubits(self) -> list[list[int]]:
        """Local qubits of each parent register, least significant first."""
        out, pos = [], 0
        for w in reversed(self.parent_widths):
            out.append(list(range(pos, pos + w)))
            pos += w
        return out[::-1]

    @property
    def focus_qubits(self) -> list[int]:
        return list(range(self.n_parent_bits, self.n_parent_bits + self.focus_width))

    def parent_index(self, parent_values: Sequence[int]) -> int:
        r = 0
        for v, w in zip(parent_values, self.parent_widths):
            r = (r << w) | v
        return r

    def input_index(self, parent_values: Sequence[int]) -> int:
        """Basis index of ``|y~=0>|x>`` on the local register."""
        return self.parent_index(parent_values)

    def reduced_circuit(self, parent_values: Sequence[int]) -> Circuit:
        """Focus-only circuit selected by a known parent basis state.

        With the parents in a basis state every multiplexor collapses to the
        single rotation chain of that configuration.
        """
        tree = self.trees[self.cpt.row_index(parent_values)]
        return state_prepare_circuit(tree, list(range(self.focus_width)), self.focus_width)

    def focus_distribution(self, parent_values: Sequence[int]) -> np.ndarray:
        """Exact Born distribution of the focus register (padded length)."""
        if self.focus_width == 0:
            return np.ones(1)
        state = run(self.reduced_circuit(parent_values))
        return marginal_distribution(state, list(range(self.focus_width)))


def embed_cpt(cpt: Cpt) -> QEmbedding:
    """Multiplexor-of-chains embedding of ``P(y | x)``."""
    pw = tuple(n_bits(c) for c in cpt.parent_cardinalities)
    fw = n_bits(cpt.node_cardinality)
    npar = sum(pw)
    trees = {}
    for r in range(cpt.n_rows):
        trees[r] = chain_angles(padded_row(cpt.table[r], fw)) if fw else AngleTree(())
    # padded parent index -> CPT row, or None for padding configs
    row_of: dict[int, int] = {}
    for pv in itertools.product(*(range(c) for c in cpt.parent_cardinalities)):
        idx = 0
        for v, w in zip(pv, pw):
            idx = (idx << w) | v
        row_of[idx] = cpt.row_index(pv)
    circ = Circuit(npar + fw)
    focus = list(range(npar, npar + fw))
    parents = list(range(npar))
    for k in range(fw):
        controls = focus[:k] + parents
        angles = np.zeros(2 ** len(controls))
        for pidx, r in row_of.items():
            lv = trees[r].levels[k]
            angles[pidx * 2**k: pidx * 2**k + 2**k] = lv
        if controls:
            circ.append(mux_roty(focus[k], controls, angles))
        else:
            circ.append(roty(focus[k], float(angles[0])))
    return QEmbedding(cpt, pw, fw, circ, trees)


def remap_gate(g: Gate, mapping: Mapping[int, int]) -> Gate:
    return Gate(g.kind, mapping[g.target], tuple((mapping[q], p) for q, p in g.controls),
                angle=g.angle, angles=g.angles)


def place_embedding(emb: QEmbedding, parent_regs: Sequence[Sequence[int]],
                    focus_reg: Sequence[int]) -> list[Gate]:
    """Gates of ``emb`` with local qubits moved onto physical registers.

    Registers are listed least significant qubit first.
    """
    mapping: dict[int, int] = {}
    for local, phys in zip(emb.parent_qubits, parent_regs):
        mapping.update(zip(local, phys))
    mapping.update(zip(emb.focus_qubits, focus_reg))
    return [remap_gate(g, mapping) for g in emb.circuit.gates]


# ---------------------------------------------------------------------------
# Net embedding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QbNode:
    """One node of a QB net.

    ``kind`` is ``root`` (source embedding), ``embedding``, ``marginalizer``,
    ``sink`` (summed parent image), or ``leaf`` (identity child added to a
    childless node).  Only ``root`` and ``embedding`` nodes emit gates.
    """

    label: str
    kind: str
    worldline: str
    cb_node: int
    inputs: tuple[str, ...] = ()


@dataclass
class QbNet:
    net: BayesNet
    nodes: list[QbNode]
    embeddings: dict[int, QEmbedding]
    widths: tuple[int, ...]

    @property
    def leaves(self) -> list[QbNode]:
        return [n for n in self.nodes if n.kind in ("sink", "leaf")]

    @property
    def summed_leaves(self) -> list[QbNode]:
        """The leaf subset summed over in the net-level marginal law."""
        return [n for n in self.nodes if n.kind == "sink"]

    @property
    def n_qubits(self) -> int:
        return sum(self.widths)


def embed_net(net: BayesNet) -> QbNet:
    """Add marginalizers, swap CPTs for embeddings, record ancillas."""
    nodes: list[QbNode] = []
    embeddings = {}
    for i in net.topological_order:
        name = net.names[i]
        embeddings[i] = embed_cpt(net.cpt(i))
        inputs = tuple(f"m[{net.names[p]}->{name}]" for p in net.parents(i))
        kind = "embedding" if inputs else "root"
        nodes.append(QbNode(f"a{name}<1>", kind, name, i, inputs))
        if inputs:
            nodes.append(QbNode(f"a{name}<2>~", "sink", name, i, (f"a{name}<1>",)))
        for c in net.children(i):
            nodes.append(QbNode(f"m[{name}->{net.names[c]}]", "marginalizer", name, i, (f"a{name}<1>",)))
        if not net.children(i):
            nodes.append(QbNode(f"a{name}<3>", "leaf", name, i, (f"a{name}<1>",)))
    return QbNet(net, nodes, embeddings, tuple(n_bits(c) for c in net.cardinalities))


def qbnet_to_circuit(qb: QbNet) -> tuple[Circuit, dict[str, list[int]]]:
    """One qubit group per worldline; embeddings in topological order."""
    regs: dict[int, list[int]] = {}
    pos = 0
    for i, w in enumerate(qb.widths):
        regs[i] = list(range(pos, pos + w))
        pos += w
    cap = max_qubits()
    if pos > cap:
        raise WidthError(f"net embedding needs {pos} qubits, cap is {cap}")
    circ = Circuit(pos)
    net = qb.net
    for i in net.topological_order:
        emb = qb.embeddings[i]
        circ.extend(place_embedding(emb, [regs[p] for p in net.parents(i)], regs[i]))
    return circ, {net.names[i]: regs[i] for i in range(net.n_nodes)}


def register_values(index: int, qubit_map: Mapping[str, Sequence[int]]) -> dict[str, int]:
    return {name: sum(((index >> q) & 1) << j for j, q in enumerate(qs)) for name, qs in qubit_map.items()}


# ---------------------------------------------------------------------------
# Gibbs transition net
# ---------------------------------------------------------------------------


class SliceKernels:
    """Per-node single-site kernels used by every slice of a Gibbs net.

    For Gibbs the kernel of node ``i`` is the blanket conditional indexed by
    the non-evidence blanket nodes.  For Metropolis-Hastings it is the
    accept/reject transition row, which also reads ``x_i`` itself.  Rows whose
    blanket conditional vanishes identically resample uniformly.
    """

    def __init__(self, net: BayesNet, q: Query, proposal: MhProposal | None = None):
        q.validate(net)
        self.net = net
        self.query = q
        self.proposal = proposal
        self.free = tuple(i for i in range(net.n_nodes) if i not in q.evidence)
        self.controls: dict[int, tuple[int, ...]] = {}
        self.cpts: dict[int, Cpt] = {}
        self._embeddings: dict[int, QEmbedding] = {}
        cache = BlanketCache(net, strict=False)
        base = [q.evidence.get(i, 0) for i in range(net.n_nodes)]
        for i in self.free:
            ctrl = set(net.markov_blanket(i)) - set(q.evidence)
            if proposal is not None:
                ctrl.add(i)
            ctrl = tuple(sorted(ctrl))
            cards = tuple(net.cardinalities[c] for c in ctrl)
            rows = []
            for vals in itertools.product(*(range(c) for c in cards)):
                x = list(base)
                for c, v in zip(ctrl, vals):
                    x[c] = v
                if proposal is None:
                    rows.append(cache.conditional(i, x))
                else:
                    rows.append(mh_transition_row(net, proposal, i, x, cache))
            table = np.clip(np.array(rows).reshape(-1, net.cardinalities[i]), 0.0, None)
            table /= table.sum(axis=1, keepdims=True)
            self.controls[i] = ctrl
            self.cpts[i] = Cpt(net.cardinalities[i], cards, table)

    def row(self, i: int, x: Sequence[int]) -> np.ndarray:
        return self.cpts[i].row([x[c] for c in self.controls[i]])

    def embedding(self, i: int) -> QEmbedding:
        emb = self._embeddings.get(i)
        if emb is None:
            emb = self._embeddings[i] = embed_cpt(self.cpts[i])
        return emb


@dataclass
class GibbsNet:
    """Time-sliced net generating ``P(x^{t + beta N} | x^t)``.

    Slice ``j`` (``j = 0 .. beta N - 1``) resamples node ``j mod N``; evidence
    nodes keep their clamped value, so their slices are identities.
    """

    net: BayesNet
    query: Query
    beta: int
    x_prev: tuple[int, ...]
    kernels: SliceKernels

    @property
    def n_slices(self) -> int:
        return self.beta * self.net.n_nodes

    def resampled(self, j: int) -> int:
        return j % self.net.n_nodes

    @property
    def schedule(self) -> list[int]:
        """Non-identity slices in order (evidence slices dropped)."""
        return [i for i in (self.resampled(j) for j in range(self.n_slices)) if i not in self.query.evidence]

    def transition_distribution(self) -> dict[tuple[int, ...], float]:
        """Exact final-slice distribution by eliminating slices one at a time."""
        dist = {self.x_prev: 1.0}
        for i in self.schedule:
            nxt: dict[tuple[int, ...], float] = {}
            for x, p in dist.items():
                row = self.kernels.row(i, x)
                for v, pv in enumerate(row):
                    if pv == 0.0:
                        continue
                    y = x[:i] + (v,) + x[i + 1:]
                    nxt[y] = nxt.get(y, 0.0) + p * pv
            dist = nxt
        return dist

    def transition_vector(self) -> np.ndarray:
        out = np.zeros(self.net.n_states())
        for x, p in self.transition_distribution().items():
            out[np.ravel_multi_index(x, self.net.cardinalities)] += p
        return out

    def to_bayes_net(self) -> BayesNet:
        """The explicit sliced CB net; node ``name@s`` is node ``name`` at slice ``s``."""
        net = self.net
        n = net.n_nodes
        nodes: list[Node] = []

        def nid(i, s):
            return s * n + i

        for i in range(n):
            nodes.append(Node(f"{net.names[i]}@0", net.cardinalities[i], (),
                              Cpt.delta(net.cardinalities[i], self.x_prev[i])))
        for s in range(1, self.n_slices + 1):
            r = self.resampled(s - 1)
            for i in range(n):
                card = net.cardinalities[i]
                if i == r and i not in self.query.evidence:
                    cpt = self.kernels.cpts[i]
                    parents = tuple(nid(c, s - 1) for c in self.kernels.controls[i])
                else:
                    cpt = Cpt(card, (card,), np.eye(card))
                    parents = (nid(i, s - 1),)
                nodes.append(Node(f"{net.names[i]}@{s}", card, parents, cpt))
        return BayesNet(nodes)


def build_gibbs_net(net: BayesNet, q: Query, beta: int, x_prev: Sequence[int],
                    proposal: MhProposal | None = None,
                    kernels: SliceKernels | None = None) -> GibbsNet:
    """Gibbs (or, with ``proposal``, Metropolis-Hastings) transition net."""
    if beta < 1:
        raise ValueError("beta must be >= 1")
    q.validate(net)
    x_prev = tuple(int(v) for v in x_prev)
    if len(x_prev) != net.n_nodes:
        raise NetFormatError("x_prev must assign every node", field="state")
    for i, v in enumerate(x_prev):
        if not 0 <= v < net.cardinalities[i]:
            raise NetFormatError(f"state {v} out of range for {net.names[i]!r}", field=net.names[i])
    if not q.consistent(x_prev):
        raise NetFormatError("x_prev disagrees with the evidence", field="state")
    kernels = kernels or SliceKernels(net, q, proposal)
    return GibbsNet(net, q, beta, x_prev, kernels)


@dataclass
class GibbsCircuit:
    circuit: Circuit
    qubit_map: dict[str, list[int]]
    recycle_plan: list[tuple[int, tuple[int, ...]]]
    peak_width: int
    slice_widths: list[int] = field(default_factory=list)

    def final_distribution(self, g: GibbsNet) -> dict[tuple[int, ...], float]:
        """Exact distribution of the measured final slice (deferred resets)."""
        state = SparseState(self.circuit.n_qubits).run(self.circuit)
        names = [n for n in self.qubit_map]
        regs = [self.qubit_map[n] for n in names]
        flat = [q for r in regs for q in r]
        probs = state.marginal(flat)
        out: dict[tuple[int, ...], float] = {}
        ids = [g.net.index(n) for n in names]
        for k, p in enumerate(probs):
            if p <= 0.0:
                continue
            x = list(g.x_prev)
            pos = 0
            for i, r in zip(ids, regs):
                x[i] = (k >> pos) & ((1 << len(r)) - 1)
                pos += len(r)
            out[tuple(x)] = out.get(tuple(x), 0.0) + p
        return out


class _Pool:
    """Lowest-index-first qubit allocator with lazy resets."""

    def __init__(self):
        self.free: list[int] = []
        self.dirty: set[int] = set()
        self.size = 0
        self.in_use = 0
        self.peak = 0

    def take(self, w: int, gates: list[Gate]) -> list[int]:
        out = []
        for _ in range(w):
            if self.free:
                self.free.sort()
                q = self.free.pop(0)
                if q in self.dirty:
                    gates.append(reset(q))
                    self.dirty.discard(q)
            else:
                q = self.size
                self.size += 1
            out.append(q)
        self.in_use += w
        self.peak = max(self.peak, self.in_use)
        return out

    def give(self, qs: Sequence[int]) -> None:
        self.free.extend(qs)
        self.dirty.update(qs)
        self.in_use -= len(qs)


def gibbs_net_circuit(g: GibbsNet) -> GibbsCircuit:
    """Circuit of the Gibbs net with slice-by-slice recycling.

    Every slice bank holds ``a_v`` for each non-evidence node and ``b_v`` for
    each non-evidence node except the one resampled next (nobody reads it).
    The final slice holds ``a`` only.  Slice ``s`` grows ``a_i`` from the
    previous slice's ``b`` copies of the control nodes, copies ``a_i`` into
    ``b_i``, and copies the other nodes forward; the previous bank is then
    recycled, so the peak width is two banks, ``2 (2 N - 1)`` for ``N``
    non-evidence nodes.

    Raises:
        WidthError: if the peak width exceeds the simulator cap.
    """
    net = g.net
    widths = [n_bits(c) for c in net.cardinalities]
    sched = g.schedule
    free = [i for i in g.kernels.free if widths[i] > 0]
    gates: list[Gate] = []
    pool = _Pool()
    plan: list[tuple[int, tuple[int, ...]]] = []
    slice_widths = []

    def bank(nxt: int | None):
        a = {v: pool.take(widths[v], gates) for v in free}
        b = {v: pool.take(widths[v], gates) for v in free if v != nxt}
        slice_widths.append(sum(len(r) for r in a.values()) + sum(len(r) for r in b.values()))
        return a, b

    first = sched[0] if sched else None
    a_prev, b_prev = bank(first)
    for v in free:
        for j in range(widths[v]):
            if (g.x_prev[v] >> j) & 1:
                gates.append(pauli_x(a_prev[v][j]))
                if v in b_prev:
                    gates.append(pauli_x(b_prev[v][j]))

    for s, i in enumerate(sched, start=1):
        nxt = sched[s] if s < len(sched) else None
        if nxt is None:
            a_new = {v: pool.take(widths[v], gates) for v in free}
            b_new: dict[int, list[int]] = {}
            slice_widths.append(sum(len(r) for r in a_new.values()))
        else:
            a_new, b_new = bank(nxt)
        if widths[i] > 0:
            ctrl_regs = []
            for c in g.kernels.controls[i]:
                ctrl_regs.append(a_prev[c] if c == i else b_prev.get(c, a_prev.get(c, [])))
            gates.extend(place_embedding(g.kernels.embedding(i), ctrl_regs, a_new[i]))
            if i in b_new:
                gates.extend(cnot(t, c) for c, t in zip(a_new[i], b_new[i]))
        for v in free:
            if v == i:
                continue
            gates.extend(cnot(t, c) for c, t in zip(a_prev[v], a_new[v]))
            if v in b_new:
                gates.extend(cnot(t, c) for c, t in zip(a_prev[v], b_new[v]))
        old = tuple(q for r in list(a_prev.values()) + list(b_prev.values()) for q in r)
        pool.give(old)
        plan.append((s, old))
        a_prev, b_prev = a_new, b_new

    cap = max_qubits()
    if pool.size > cap:
        raise WidthError(f"Gibbs circuit needs {pool.size} qubits, cap is {cap}")
    circ = Circuit(pool.size, gates)
    qmap = {net.names[v]: a_prev[v] for v in free}
    return GibbsCircuit(circ, qmap, plan, pool.peak, slice_widths)
