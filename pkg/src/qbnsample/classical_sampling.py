"""Classical samplers: importance sampling, Gibbs, and Metropolis-Hastings.

All samplers return a :class:`~qbnsample.cbnet.PosteriorTable`.  Transition
matrices are column-stochastic over the full joint space ``val(x)``:
``T[x_next, x_prev]`` with flat indices in C order over the node axes, so
``T @ pi`` advances a distribution ``pi`` by one step.
"""

from __future__ import annotations

import bisect
import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import rng as rngmod
from .cbnet import (
    DEFAULT_ENUM_CAP,
    ROW_TOL,
    BayesNet,
    Cpt,
    PosteriorTable,
    Query,
    blanket_weights,
    forward_sample,
    inverse_cdf,
    joint_table,
)
from .errors import (
    AllRejectedError,
    DegenerateError,
    NetFormatError,
    TooLargeError,
    ZeroEvidenceError,
    ZeroProposalError,
)

# transition matrices are dense over val(x), so keep them small
MATRIX_CAP = 2**12


class PolicyKind(enum.Enum):
    GENERAL = "general"
    REJECTION = "rejection"
    LIKELIHOOD_WEIGHTED = "likelihood_weighted"


@dataclass(frozen=True)
class SamplingPolicy:
    """Sampling CPTs ``Q(x_i | pa(i))``.

    ``Q`` equals ``P`` on every non-evidence node; only evidence nodes may
    carry a different table.  ``cpts[i]`` is ``None`` wherever ``Q = P``.
    """

    kind: PolicyKind
    cpts: tuple[Cpt | None, ...]

    @classmethod
    def rejection(cls, net: BayesNet) -> "SamplingPolicy":
        return cls(PolicyKind.REJECTION, (None,) * net.n_nodes)

    @classmethod
    def likelihood_weighted(cls, net: BayesNet, q: Query) -> "SamplingPolicy":
        cpts: list[Cpt | None] = [None] * net.n_nodes
        for i, v in q.evidence.items():
            node = net.nodes[i]
            table = np.zeros((node.cpt.n_rows, node.cardinality))
            table[:, v] = 1.0
            cpts[i] = Cpt(node.cardinality, node.cpt.parent_cardinalities, table)
        return cls(PolicyKind.LIKELIHOOD_WEIGHTED, tuple(cpts))

    @classmethod
    def general(cls, net: BayesNet, q: Query, evidence_cpts: Mapping[int, Cpt]) -> "SamplingPolicy":
        cpts: list[Cpt | None] = [None] * net.n_nodes
        for i, cpt in evidence_cpts.items():
            if i not in q.evidence:
                raise NetFormatError(
                    f"Q may differ from P only on evidence nodes, not {net.names[i]!r}",
                    field=net.names[i],
                )
            if cpt.parent_cardinalities != net.cpt(i).parent_cardinalities or \
                    cpt.node_cardinality != net.cardinalities[i]:
                raise NetFormatError(f"sampling CPT shape mismatch at {net.names[i]!r}", field=net.names[i])
            cpts[i] = cpt
        return cls(PolicyKind.GENERAL, tuple(cpts))

    @classmethod
    def by_name(cls, name: str, net: BayesNet, q: Query) -> "SamplingPolicy":
        if name in ("rs", "rejection"):
            return cls.rejection(net)
        if name in ("lws", "likelihood_weighted"):
            return cls.likelihood_weighted(net, q)
        raise NetFormatError(f"unknown sampling policy {name!r}", field="policy")

    def cpt(self, net: BayesNet, i: int) -> Cpt:
        c = self.cpts[i]
        return net.cpt(i) if c is None else c


@dataclass(frozen=True)
class ChainConfig:
    """Markov chain length, burn-in, and measurement cadence.

    ``steps`` counts single-node updates.  ``burn`` defaults to ``steps // 10``.
    """

    steps: int
    burn: int | None = None
    sweep: bool = False
    beta: int = 1
    seed: int = 0
    chain: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if self.burn is None:
            object.__setattr__(self, "burn", self.steps // 10)
        if not 0 <= self.burn < self.steps:
            raise ValueError("need 0 <= burn < steps")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")


ProposalFn = Callable[[BayesNet, int, Sequence[int], "BlanketCache"], np.ndarray]


@dataclass(frozen=True)
class MhProposal:
    """Per-node proposal ``Q_i(y_i | x_i, (x)_MB(i))``.

    ``fn(net, i, x, cache)`` returns the proposal row over ``y_i``.  The
    named constructors cover the cases the samplers and the CLI expose.
    """

    name: str
    fn: ProposalFn = field(compare=False)

    def row(self, net: BayesNet, i: int, x: Sequence[int], cache: "BlanketCache") -> np.ndarray:
        r = np.asarray(self.fn(net, i, x, cache), dtype=float)
        if r.shape != (net.cardinalities[i],) or np.any(r < 0) or abs(r.sum() - 1.0) > ROW_TOL:
            raise NetFormatError(f"proposal row for {net.names[i]!r} is not a distribution", field="proposal")
        return r

    @classmethod
    def uniform(cls) -> "MhProposal":
        return cls("uniform", lambda net, i, x, cache: np.full(net.cardinalities[i], 1.0 / net.cardinalities[i]))

    @classmethod
    def blanket(cls) -> "MhProposal":
        """The Gibbs proposal; every move is accepted."""
        return cls("blanket", lambda net, i, x, cache: cache.conditional(i, x))

    @classmethod
    def identity(cls) -> "MhProposal":
        def fn(net, i, x, cache):
            r = np.zeros(net.cardinalities[i])
            r[x[i]] = 1.0
            return r
        return cls("identity", fn)

    @classmethod
    def flip(cls) -> "MhProposal":
        """Move to a uniformly chosen *different* state (symmetric)."""
        def fn(net, i, x, cache):
            c = net.cardinalities[i]
            if c == 1:
                return np.ones(1)
            r = np.full(c, 1.0 / (c - 1))
            r[x[i]] = 0.0
            return r
        return cls("flip", fn)

    @classmethod
    def by_name(cls, name: str) -> "MhProposal":
        table = {"uniform": cls.uniform, "blanket": cls.blanket, "gibbs": cls.blanket,
                 "identity": cls.identity, "flip": cls.flip}
        if name not in table:
            raise NetFormatError(f"unknown proposal {name!r}", field="proposal")
        return table[name]()


class BlanketCache:
    """Memoized blanket conditionals keyed by ``(i, (x)_MB(i))``.

    Identically zero numerators are replaced by the uniform distribution
    when ``strict`` is false; samplers use ``strict=True`` and raise.
    """

    def __init__(self, net: BayesNet, strict: bool = True):
        self.net = net
        self.strict = strict
        self._blankets = [sorted(net.markov_blanket(i)) for i in range(net.n_nodes)]
        self._rows: dict[tuple, np.ndarray] = {}
        self._cums: dict[tuple, list[float]] = {}

    def _key(self, i: int, x: Sequence[int]) -> tuple:
        return (i,) + tuple(x[j] for j in self._blankets[i])

    def conditional(self, i: int, x: Sequence[int]) -> np.ndarray:
        key = self._key(i, x)
        row = self._rows.get(key)
        if row is None:
            w = blanket_weights(self.net, i, x)
            s = w.sum()
            if s <= 0.0:
                if self.strict:
                    raise DegenerateError(
                        f"blanket conditional of node {self.net.names[i]!r} is identically zero"
                    )
                row = np.full(w.size, 1.0 / w.size)
            else:
                row = w / s
            row.setflags(write=False)
            self._rows[key] = row
        return row

    def cumulative(self, i: int, x: Sequence[int]) -> list[float]:
        key = self._key(i, x)
        cum = self._cums.get(key)
        if cum is None:
            cum = np.cumsum(self.conditional(i, x)).tolist()
            self._cums[key] = cum
        return cum


def draw_categorical(cumulative: Sequence[float], u: float) -> int:
    """Inverse-CDF draw with a strict ``u < cumulative`` comparison."""
    k = bisect.bisect_right(cumulative, u)
    if k < len(cumulative):
        return k
    return inverse_cdf(cumulative, u)


# ---------------------------------------------------------------------------
# Importance sampling
# ---------------------------------------------------------------------------

DrawFn = Callable[[int, tuple, float], int]


def _run_importance(net: BayesNet, q: Query, policy: SamplingPolicy, n_sam: int,
                    draw: Callable[[int, tuple], int]) -> PosteriorTable:
    """Shared control flow of the classical and quantum importance samplers.

    ``draw(i, parent_values)`` returns a state of node ``i`` drawn from
    ``Q(x_i | parent_values)``.  Weight bookkeeping lives only here.
    """
    q.validate(net)
    table = PosteriorTable.for_query(net, q)
    order = net.topological_order
    parents = [net.parents(i) for i in range(net.n_nodes)]
    p_cpts = [net.cpt(i) for i in range(net.n_nodes)]
    q_cpts = [policy.cpt(net, i) for i in range(net.n_nodes)]
    evidence = q.evidence
    hyp = q.hypotheses
    x = [0] * net.n_nodes
    for _ in range(n_sam):
        L = 1.0
        rejected = False
        for i in order:
            pv = tuple(x[j] for j in parents[i])
            xi = draw(i, pv)
            x[i] = xi
            if i in evidence:
                if xi == evidence[i]:
                    r = p_cpts[i].row_index(pv)
                    L *= p_cpts[i].table[r, xi] / q_cpts[i].table[r, xi]
                else:
                    rejected = True
                    break
        table.n_samples += 1
        if rejected:
            continue
        table.add(tuple(x[h] for h in hyp), L)
    if table.total <= 0.0:
        raise AllRejectedError("every importance sample was rejected")
    return table


class _CpdDraw:
    """Classical inverse-CDF draw from a policy's CPT rows."""

    def __init__(self, net: BayesNet, policy: SamplingPolicy, stream: rngmod.UniformStream):
        self.stream = stream
        self.cpts = [policy.cpt(net, i) for i in range(net.n_nodes)]
        self.cums = [np.cumsum(c.table, axis=1).tolist() for c in self.cpts]

    def __call__(self, i: int, pv: tuple) -> int:
        return draw_categorical(self.cums[i][self.cpts[i].row_index(pv)], self.stream.next())


def importance_sample(net: BayesNet, q: Query, policy: SamplingPolicy, n_sam: int,
                      seed: int = 0, chain: int = 0) -> PosteriorTable:
    """Importance sampling with likelihood-ratio weights.

    Raises:
        AllRejectedError: if the total weight is zero.
    """
    stream = rngmod.UniformStream.from_seed(seed, chain, rngmod.DRAW)
    return _run_importance(net, q, policy, n_sam, _CpdDraw(net, policy, stream))


def likelihood_ratio(net: BayesNet, q: Query, policy: SamplingPolicy, x: Sequence[int]) -> float:
    """``L_E(x) = prod_{i in E} P/Q``, or 0 when ``x`` misses the evidence."""
    L = 1.0
    for i, v in q.evidence.items():
        if x[i] != v:
            return 0.0
        pv = [x[j] for j in net.parents(i)]
        L *= net.cpt(i).prob(v, pv) / policy.cpt(net, i).prob(v, pv)
    return L


def policy_probability(net: BayesNet, policy: SamplingPolicy, x: Sequence[int]) -> float:
    p = 1.0
    for i in range(net.n_nodes):
        p *= policy.cpt(net, i).prob(x[i], [x[j] for j in net.parents(i)])
    return p


# ---------------------------------------------------------------------------
# Markov chains
# ---------------------------------------------------------------------------


def initial_state(net: BayesNet, q: Query, seed: int, chain: int = 0) -> list[int]:
    """Forward sample with the evidence clamped."""
    return forward_sample(net, rngmod.UniformStream.from_seed(seed, chain, rngmod.INIT), q.evidence)


def _chain(net: BayesNet, q: Query, cfg: ChainConfig, update: Callable[[int, list[int]], None]) -> PosteriorTable:
    q.validate(net)
    table = PosteriorTable.for_query(net, q)
    hyp = q.hypotheses
    x = initial_state(net, q, cfg.seed, cfg.chain)
    n = net.n_nodes
    evidence = q.evidence
    if cfg.sweep:
        t = 0
        for g in range(1, cfg.steps // n + 1):
            for i in range(n):
                if i not in evidence:
                    update(i, x)
                t += 1
            if g % cfg.beta == 0 and t > cfg.burn:
                table.add(tuple(x[h] for h in hyp))
                table.n_samples += 1
    else:
        select = rngmod.UniformStream.from_seed(cfg.seed, cfg.chain, rngmod.SELECT)
        burn = cfg.burn
        for t in range(cfg.steps):
            i = select.integer(n)
            if i not in evidence:
                update(i, x)
            if t > burn:
                table.add(tuple(x[h] for h in hyp))
                table.n_samples += 1
    if table.total <= 0.0:
        raise ValueError("chain too short to record any state after burn-in")
    return table


def _gibbs_update(net: BayesNet, cfg: ChainConfig):
    cache = BlanketCache(net, strict=True)
    draws = rngmod.UniformStream.from_seed(cfg.seed, cfg.chain, rngmod.DRAW)

    def update(i: int, x: list[int]) -> None:
        x[i] = draw_categorical(cache.cumulative(i, x), draws.next())

    return update


def gibbs_sample_random(net: BayesNet, q: Query, cfg: ChainConfig) -> PosteriorTable:
    """Gibbs sampling visiting a uniformly random node at each step."""
    if cfg.sweep:
        cfg = ChainConfig(cfg.steps, cfg.burn, False, cfg.beta, cfg.seed, cfg.chain)
    return _chain(net, q, cfg, _gibbs_update(net, cfg))


def gibbs_sample_sweep(net: BayesNet, q: Query, cfg: ChainConfig) -> PosteriorTable:
    """Gibbs sampling sweeping nodes in id order, recording every ``beta`` sweeps."""
    if not cfg.sweep:
        cfg = ChainConfig(cfg.steps, cfg.burn, True, cfg.beta, cfg.seed, cfg.chain)
    return _chain(net, q, cfg, _gibbs_update(net, cfg))


def mh_acceptance(q_fwd: float, q_back: float, p_new: float, p_old: float) -> float:
    """``min(1, Q(x|y) P(y|MB) / (Q(y|x) P(x|MB)))``.

    Products are formed so that ``Q = P`` gives exactly 1.
    """
    num = q_back * p_new
    den = q_fwd * p_old
    if den == 0.0:
        if q_fwd == 0.0:
            raise ZeroProposalError("proposed state has zero proposal probability")
        return 1.0
    return min(1.0, num / den)


def metropolis_hastings_sample(net: BayesNet, q: Query, proposal: MhProposal, cfg: ChainConfig) -> PosteriorTable:
    """Metropolis-Hastings with per-node proposals.

    Raises:
        ZeroProposalError: if a drawn move had zero forward proposal mass.
    """
    cache = BlanketCache(net, strict=True)
    draws = rngmod.UniformStream.from_seed(cfg.seed, cfg.chain, rngmod.DRAW)
    accepts = rngmod.UniformStream.from_seed(cfg.seed, cfg.chain, rngmod.ACCEPT)
    blankets = [sorted(net.markov_blanket(i)) for i in range(net.n_nodes)]
    # (i, x_i, (x)_MB(i)) -> (cumulative proposal row, acceptance per move)
    moves: dict[tuple, tuple[list[float], list[float]]] = {}

    def move_table(i: int, x: list[int]) -> tuple[list[float], list[float]]:
        xi = x[i]
        fwd = proposal.row(net, i, x, cache)
        cond = cache.conditional(i, x)
        alpha = [1.0] * fwd.size
        for y in range(fwd.size):
            if y == xi or fwd[y] == 0.0:
                continue
            x[i] = y
            back = proposal.row(net, i, x, cache)
            x[i] = xi
            alpha[y] = mh_acceptance(fwd[y], back[xi], cond[y], cond[xi])
        return np.cumsum(fwd).tolist(), alpha

    def update(i: int, x: list[int]) -> None:
        key = (i, x[i]) + tuple(x[j] for j in blankets[i])
        entry = moves.get(key)
        if entry is None:
            entry = moves[key] = move_table(i, x)
        cum, alpha = entry
        y = draw_categorical(cum, draws.next())
        u = accepts.next()
        if y != x[i] and u < alpha[y]:
            x[i] = y

    return _chain(net, q, cfg, update)


# ---------------------------------------------------------------------------
# Transition matrices
# ---------------------------------------------------------------------------


def _states(net: BayesNet, cap: int) -> list[tuple[int, ...]]:
    if net.n_states() > cap:
        raise TooLargeError(f"{net.n_states()} joint states exceed the cap {cap}")
    return list(itertools.product(*(range(c) for c in net.cardinalities)))


def _flat(net: BayesNet, x: Sequence[int]) -> int:
    return int(np.ravel_multi_index(tuple(x), net.cardinalities))


def node_transition_matrix(net: BayesNet, q: Query, i: int,
                           row_fn: Callable[[list[int]], np.ndarray],
                           cap: int = MATRIX_CAP) -> np.ndarray:
    """Matrix resampling node ``i`` from ``row_fn(x)``; identity when ``i`` is evidence."""
    states = _states(net, cap)
    n = len(states)
    T = np.zeros((n, n))
    for col, x in enumerate(states):
        if i in q.evidence:
            T[col, col] = 1.0
            continue
        row = row_fn(list(x))
        y = list(x)
        for v, p in enumerate(row):
            if p != 0.0:
                y[i] = v
                T[_flat(net, y), col] += p
    return T


def gibbs_transition_matrix(net: BayesNet, q: Query, i: int, cap: int = MATRIX_CAP) -> np.ndarray:
    """Single-node Gibbs kernel ``T(i)[x', x]``.

    Columns whose blanket conditional is identically zero resample uniformly;
    such columns have zero stationary mass.
    """
    cache = BlanketCache(net, strict=False)
    return node_transition_matrix(net, q, i, lambda x: cache.conditional(i, x), cap)


def mh_transition_row(net: BayesNet, proposal: MhProposal, i: int, x: Sequence[int],
                      cache: BlanketCache) -> np.ndarray:
    """``qbar_i(. | x) + delta(x_i) * (1 - sum qbar_i)`` with ``qbar = alpha * Q``."""
    qbar = mh_qbar(net, proposal, i, x, cache)
    qbar[x[i]] += 1.0 - qbar.sum()
    return qbar


def mh_qbar(net: BayesNet, proposal: MhProposal, i: int, x: Sequence[int],
            cache: BlanketCache | None = None) -> np.ndarray:
    """Off-diagonal acceptance-weighted proposal ``qbar_i(y | x) = alpha_i Q_i``."""
    cache = cache or BlanketCache(net, strict=False)
    x = list(x)
    xi = x[i]
    fwd = proposal.row(net, i, x, cache)
    cond = cache.conditional(i, x)
    out = np.zeros_like(fwd)
    for y, qf in enumerate(fwd):
        if qf == 0.0:
            continue
        x[i] = y
        back = proposal.row(net, i, x, cache)
        out[y] = mh_acceptance(qf, back[xi], cond[y], cond[xi]) * qf
    return out


def mh_transition_matrix(net: BayesNet, q: Query, proposal: MhProposal, i: int,
                         cap: int = MATRIX_CAP) -> np.ndarray:
    """Single-node Metropolis-Hastings kernel ``T(i)[x', x]``."""
    cache = BlanketCache(net, strict=False)
    return node_transition_matrix(net, q, i, lambda x: mh_transition_row(net, proposal, i, x, cache), cap)


def conditioned_joint(net: BayesNet, q: Query, cap: int = DEFAULT_ENUM_CAP) -> np.ndarray:
    """Flat ``P(x | (x)_E)``, zero off the evidence slice."""
    joint = joint_table(net, cap)
    mask = np.ones(net.cardinalities, dtype=bool)
    for i, v in q.evidence.items():
        keep = np.zeros(net.cardinalities[i], dtype=bool)
        keep[v] = True
        shape = [1] * net.n_nodes
        shape[i] = net.cardinalities[i]
        mask &= keep.reshape(shape)
    pi = np.where(mask, joint, 0.0).ravel()
    s = pi.sum()
    if s <= 0.0:
        raise ZeroEvidenceError("evidence has probability zero")
    return pi / s
