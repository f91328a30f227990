"""Quantum importance sampling, quantum Gibbs, and quantum Metropolis-Hastings.

The control flow is the classical one; only the draws change.  Importance
sampling prepares the parent-selected rotation chain of a node's embedding
and measures the focus register.  The MCMC samplers build the transition
net circuit from the current state, run it, and measure the final slice,
advancing time by ``beta * N`` steps per measurement.

Circuits and their exact output states are cached per key (node and parent
configuration, or current state), and measurement shots are drawn in
buffered batches from the Born distribution of the cached state.  Each
buffered shot stands for an independent run of the circuit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Sequence

import numpy as np

from . import rng as rngmod
from .cbnet import BayesNet, PosteriorTable, Query
from .circuit import marginal_distribution, run
from .classical_sampling import (
    MhProposal,
    PolicyKind,
    SamplingPolicy,
    _run_importance,
    initial_state,
)
from .qembed import GibbsNet, QEmbedding, SliceKernels, build_gibbs_net, embed_cpt, gibbs_net_circuit

SHOT_BLOCK = 1024


@dataclass(frozen=True)
class QuantumSamplerConfig:
    """Sample budget for the quantum samplers.

    For importance sampling ``samples`` is ``N_sam``.  For the chains it is
    the total number of single-node steps ``T``; one circuit run covers
    ``beta * N`` steps and ``burn`` (default ``T // 10``) is in steps too.
    ``shots`` is the number of measurements taken per circuit invocation;
    only the first is used by the algorithms.
    """

    samples: int
    beta: int = 1
    burn: int | None = None
    seed: int = 0
    shots: int = 1
    chain: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be positive")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.burn is None:
            object.__setattr__(self, "burn", self.samples // 10)
        if not 0 <= self.burn < self.samples:
            raise ValueError("need 0 <= burn < samples")


class ShotSampler:
    """Per-key Born distributions with buffered measurement outcomes."""

    def __init__(self, gen: np.random.Generator, compute: Callable[[Hashable], np.ndarray],
                 block: int = SHOT_BLOCK):
        self.gen = gen
        self.compute = compute
        self.block = block
        self.dists: dict[Hashable, np.ndarray] = {}
        self._buffers: dict[Hashable, list[int]] = {}

    def distribution(self, key: Hashable) -> np.ndarray:
        d = self.dists.get(key)
        if d is None:
            d = np.asarray(self.compute(key), dtype=float)
            d = np.clip(d, 0.0, None)
            d = d / d.sum()
            self.dists[key] = d
        return d

    def draw(self, key: Hashable) -> int:
        buf = self._buffers.get(key)
        if not buf:
            d = self.distribution(key)
            buf = self.gen.choice(d.size, size=self.block, p=d).tolist()
            buf.reverse()
            self._buffers[key] = buf
        return buf.pop()


# ---------------------------------------------------------------------------
# Importance sampling
# ---------------------------------------------------------------------------


class QuantumDraw:
    """Node draws from embedding circuits of the policy CPTs.

    Likelihood-weighted evidence nodes are contracted to a single state and
    need no circuit.
    """

    def __init__(self, net: BayesNet, q: Query, policy: SamplingPolicy, gen: np.random.Generator):
        self.net = net
        self.policy = policy
        self.clamped = dict(q.evidence) if policy.kind is PolicyKind.LIKELIHOOD_WEIGHTED else {}
        self.embeddings: dict[int, QEmbedding] = {}
        self.shots = ShotSampler(gen, self._compute)

    def embedding(self, i: int) -> QEmbedding:
        emb = self.embeddings.get(i)
        if emb is None:
            emb = self.embeddings[i] = embed_cpt(self.policy.cpt(self.net, i))
        return emb

    def _compute(self, key) -> np.ndarray:
        i, pv = key
        emb = self.embedding(i)
        state = run(emb.reduced_circuit(pv))
        return marginal_distribution(state, list(range(emb.focus_width)))

    def distribution(self, i: int, pv: tuple) -> np.ndarray:
        """Exact draw distribution over the node's true states."""
        if i in self.clamped:
            d = np.zeros(self.net.cardinalities[i])
            d[self.clamped[i]] = 1.0
            return d
        return self.shots.distribution((i, pv))[: self.net.cardinalities[i]]

    def __call__(self, i: int, pv: tuple) -> int:
        if i in self.clamped:
            return self.clamped[i]
        return self.shots.draw((i, pv))


def q_importance_sample(net: BayesNet, q: Query, policy: SamplingPolicy,
                        cfg: QuantumSamplerConfig) -> PosteriorTable:
    """Importance sampling with every node drawn by circuit measurement."""
    gen = rngmod.generator(cfg.seed, cfg.chain, rngmod.SAMPLE)
    return _run_importance(net, q, policy, cfg.samples, QuantumDraw(net, q, policy, gen))


# ---------------------------------------------------------------------------
# Markov chains
# ---------------------------------------------------------------------------


class MacroStep:
    """Exact final-slice distributions of the transition circuit, per start state."""

    def __init__(self, net: BayesNet, q: Query, beta: int, proposal: MhProposal | None = None):
        self.net = net
        self.query = q
        self.beta = beta
        self.kernels = SliceKernels(net, q, proposal)
        self.free = [i for i in range(net.n_nodes) if i not in q.evidence]
        self.cards = [net.cardinalities[i] for i in self.free]
        self.peak_width = 0

    def gibbs_net(self, x: Sequence[int]) -> GibbsNet:
        return build_gibbs_net(self.net, self.query, self.beta, x, kernels=self.kernels)

    def distribution(self, x: tuple[int, ...]) -> np.ndarray:
        """Distribution over the non-evidence nodes (C order over ``free``)."""
        g = self.gibbs_net(x)
        gc = gibbs_net_circuit(g)
        self.peak_width = max(self.peak_width, gc.peak_width)
        out = np.zeros(int(np.prod(self.cards)) if self.cards else 1)
        for y, p in gc.final_distribution(g).items():
            k = np.ravel_multi_index(tuple(y[i] for i in self.free), self.cards) if self.cards else 0
            out[k] += p
        return out

    def state(self, x: Sequence[int], k: int) -> tuple[int, ...]:
        y = list(x)
        if self.cards:
            for i, v in zip(self.free, np.unravel_index(k, self.cards)):
                y[i] = int(v)
        return tuple(y)


def _q_chain(net: BayesNet, q: Query, cfg: QuantumSamplerConfig, proposal: MhProposal | None) -> PosteriorTable:
    q.validate(net)
    step = MacroStep(net, q, cfg.beta, proposal)
    shots = ShotSampler(rngmod.generator(cfg.seed, cfg.chain, rngmod.SAMPLE), step.distribution)
    table = PosteriorTable.for_query(net, q)
    x = tuple(initial_state(net, q, cfg.seed, cfg.chain))
    stride = cfg.beta * net.n_nodes
    t = 0
    hyp = q.hypotheses
    for _ in range(cfg.samples // stride):
        x = step.state(x, shots.draw(x))
        t += stride
        if t > cfg.burn:
            table.add(tuple(x[h] for h in hyp))
            table.n_samples += 1
    if table.total <= 0.0:
        raise ValueError("chain too short to record any state after burn-in")
    return table


def q_gibbs_sample(net: BayesNet, q: Query, cfg: QuantumSamplerConfig) -> PosteriorTable:
    """Gibbs sampling by repeated runs of the sweep transition circuit."""
    return _q_chain(net, q, cfg, None)


def q_metropolis_hastings_sample(net: BayesNet, q: Query, proposal: MhProposal,
                                 cfg: QuantumSamplerConfig) -> PosteriorTable:
    """As :func:`q_gibbs_sample` with each slice embedding the MH single-node kernel."""
    return _q_chain(net, q, cfg, proposal)
