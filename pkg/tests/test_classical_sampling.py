from __future__ import annotations

import itertools

import numpy as np
import pytest

from oracles import conditioned, gibbs_matrix, joint_from_dict
from qbnsample import rng as rngmod
from qbnsample.cbnet import BayesNet, Cpt, Query, exact_posterior, joint_probability, random_net
from qbnsample.classical_sampling import (
    BlanketCache,
    ChainConfig,
    MhProposal,
    SamplingPolicy,
    _chain,
    _gibbs_update,
    conditioned_joint,
    gibbs_sample_random,
    gibbs_sample_sweep,
    gibbs_transition_matrix,
    importance_sample,
    initial_state,
    likelihood_ratio,
    metropolis_hastings_sample,
    mh_acceptance,
    mh_qbar,
    mh_transition_matrix,
    policy_probability,
)
from qbnsample.errors import AllRejectedError, NetFormatError, ZeroProposalError


def max_err(table, net, q):
    return float(np.max(np.abs(table.as_array() - exact_posterior(net, q).as_array())))


def net_with_evidence(seed, n=3, cards=2, max_parents=2):
    r = np.random.default_rng(seed)
    net = random_net(r, n, cards, max_parents=max_parents, dirichlet=2.0)
    ev_node = int(r.integers(n))
    ev = {ev_node: int(r.integers(net.cardinalities[ev_node]))}
    hyp = tuple(i for i in range(n) if i != ev_node)
    return net, Query(ev, hyp)


@pytest.fixture(scope="module")
def five():
    net = random_net(np.random.default_rng(11), 5, 2, max_parents=2, dirichlet=2.0)
    return net, Query({3: 1, 4: 0}, (0, 1, 2))


class TestImportance:
    def test_no_evidence_unit_weights(self, three_net):
        q = Query({}, (0, 2))
        t = importance_sample(three_net, q, SamplingPolicy.likelihood_weighted(three_net, q), 5000, seed=1)
        assert t.total == t.n_samples == 5000
        assert all(float(w).is_integer() for w in t.weights.values())

    def test_rejection_with_certain_evidence(self):
        net = BayesNet.from_dict({"nodes": [
            {"name": "a", "cardinality": 2, "parents": [], "cpt": [0.4, 0.6]},
            {"name": "b", "cardinality": 2, "parents": ["a"], "cpt": [0.0, 1.0, 0.0, 1.0]},
        ]})
        q = Query({1: 1}, (0,))
        t = importance_sample(net, q, SamplingPolicy.rejection(net), 2000, seed=3)
        assert t.total == t.n_samples == 2000

    @pytest.mark.parametrize("kind", ["lws", "rs"])
    def test_five_node_accuracy(self, five, kind):
        net, q = five
        t = importance_sample(net, q, SamplingPolicy.by_name(kind, net, q), 200_000, seed=0)
        assert max_err(t, net, q) <= 0.02

    def test_general_policy(self, five):
        net, q = five
        cpts = {i: Cpt(2, net.cpt(i).parent_cardinalities, np.full((net.cpt(i).n_rows, 2), 0.5))
                for i in q.evidence}
        pol = SamplingPolicy.general(net, q, cpts)
        t = importance_sample(net, q, pol, 100_000, seed=2)
        assert max_err(t, net, q) <= 0.02

    def test_general_policy_only_on_evidence(self, five):
        net, q = five
        with pytest.raises(NetFormatError):
            SamplingPolicy.general(net, q, {0: net.cpt(0)})

    @pytest.mark.parametrize("kind", ["lws", "rs", "general"])
    def test_likelihood_ratio_identity(self, five, kind):
        net, q = five
        if kind == "general":
            cpts = {i: Cpt(2, net.cpt(i).parent_cardinalities, np.tile([0.3, 0.7], (net.cpt(i).n_rows, 1)))
                    for i in q.evidence}
            pol = SamplingPolicy.general(net, q, cpts)
        else:
            pol = SamplingPolicy.by_name(kind, net, q)
        for x in itertools.product((0, 1), repeat=5):
            lhs = policy_probability(net, pol, x) * likelihood_ratio(net, q, pol, x)
            want = joint_probability(net, x) if q.consistent(x) else 0.0
            assert lhs == pytest.approx(want, abs=1e-12)

    def test_all_rejected(self):
        net = BayesNet.from_dict({"nodes": [{"name": "a", "cardinality": 2, "parents": [], "cpt": [1.0, 0.0]}]})
        q = Query({0: 1}, ())
        with pytest.raises(AllRejectedError):
            importance_sample(net, q, SamplingPolicy.rejection(net), 100)

    def test_bootstrap_consistency(self, five):
        net, q = five
        pol = SamplingPolicy.likelihood_weighted(net, q)
        runs = np.array([importance_sample(net, q, pol, 4000, seed=s).as_array().ravel() for s in range(1, 21)])
        sigma = runs.std(axis=0, ddof=1)
        est = importance_sample(net, q, pol, 4000, seed=0).as_array().ravel()
        exact = exact_posterior(net, q).as_array().ravel()
        assert np.all(np.abs(est - exact) <= 5 * sigma + 1e-12)

    def test_same_seed_same_table(self, five):
        net, q = five
        pol = SamplingPolicy.likelihood_weighted(net, q)
        a = importance_sample(net, q, pol, 3000, seed=9)
        b = importance_sample(net, q, pol, 3000, seed=9)
        assert a.weights == b.weights


class TestGibbs:
    def test_single_node(self):
        net = BayesNet.from_dict({"nodes": [{"name": "a", "cardinality": 2, "parents": [], "cpt": [0.35, 0.65]}]})
        t = gibbs_sample_random(net, Query({}, (0,)), ChainConfig(100_000, seed=4))
        assert abs(t.estimates()[(1,)] - 0.65) <= 0.02

    def test_all_evidence_is_frozen(self, three_net):
        q = Query({0: 1, 1: 0, 2: 1}, ())
        t = gibbs_sample_random(three_net, q, ChainConfig(1000))
        assert t.estimates() == {(): 1.0}

    def test_evidence_never_changes(self, three_net):
        q = Query({1: 1}, (0, 2))
        cfg = ChainConfig(5000, seed=2)
        inner = _gibbs_update(three_net, cfg)
        seen = set()

        def update(i, x):
            inner(i, x)
            seen.add(x[1])

        _chain(three_net, q, cfg, update)
        assert seen == {1}

    def test_empirical_transitions_match_kernel(self, three_net):
        q = Query({}, (0, 1, 2))
        cfg = ChainConfig(200_000, seed=5)
        update = _gibbs_update(three_net, cfg)
        select = rngmod.UniformStream.from_seed(cfg.seed, cfg.chain, rngmod.SELECT)
        x = initial_state(three_net, q, cfg.seed)
        counts = np.zeros((8, 8))
        for _ in range(cfg.steps):
            before = np.ravel_multi_index(x, (2, 2, 2))
            update(select.integer(3), x)
            counts[np.ravel_multi_index(x, (2, 2, 2)), before] += 1
        freq = counts / counts.sum(axis=0, keepdims=True)
        kernel = sum(gibbs_transition_matrix(three_net, q, i) for i in range(3)) / 3
        assert np.max(np.abs(freq - kernel)) <= 0.02

    def test_sweep_single_node_matches_random(self):
        net = BayesNet.from_dict({"nodes": [{"name": "a", "cardinality": 3, "parents": [], "cpt": [0.2, 0.3, 0.5]}]})
        q = Query({}, (0,))
        a = gibbs_sample_random(net, q, ChainConfig(100_000, seed=1)).as_array()
        b = gibbs_sample_sweep(net, q, ChainConfig(100_000, seed=1)).as_array()
        assert np.max(np.abs(a - b)) <= 1e-4

    def test_sweep_three_nodes_beta_two(self, three_net):
        q = Query({2: 1}, (0, 1))
        t = gibbs_sample_sweep(three_net, q, ChainConfig(3 * 2 * 50_000, beta=2, seed=0))
        assert max_err(t, three_net, q) <= 0.02
        assert t.n_samples == 50_000 - 5000

    def test_sweep_visits_each_node_once_per_pass(self, three_net):
        visits = []
        cfg = ChainConfig(3 * 40, sweep=True)
        _chain(three_net, Query({}, (0,)), cfg, lambda i, x: visits.append(i))
        assert visits == [0, 1, 2] * 40

    def test_chain_records_after_burn(self, three_net):
        t = gibbs_sample_random(three_net, Query({}, (0,)), ChainConfig(1000, burn=100))
        assert t.n_samples == 1000 - 101


class TestMetropolisHastings:
    def test_blanket_proposal_reproduces_gibbs(self, five):
        net, q = five
        for seed in range(3):
            g = gibbs_sample_random(net, q, ChainConfig(30_000, seed=seed))
            m = metropolis_hastings_sample(net, q, MhProposal.blanket(), ChainConfig(30_000, seed=seed))
            assert g.weights == m.weights

    def test_metropolis_ratio(self):
        assert mh_acceptance(0.5, 0.5, 0.2, 0.8) == pytest.approx(0.25)
        assert mh_acceptance(0.5, 0.5, 0.8, 0.2) == 1.0

    def test_gibbs_proposal_ratio_is_exactly_one(self):
        p = np.random.default_rng(0).dirichlet(np.ones(4))
        for a, b in itertools.permutations(range(4), 2):
            assert mh_acceptance(p[b], p[a], p[b], p[a]) == 1.0

    def test_zero_proposal(self):
        with pytest.raises(ZeroProposalError):
            mh_acceptance(0.0, 0.5, 0.3, 0.0)

    def test_uniform_proposal_accuracy(self):
        net = random_net(np.random.default_rng(21), 4, 2, max_parents=2, dirichlet=2.0)
        q = Query({3: 0}, (0, 1, 2))
        t = metropolis_hastings_sample(net, q, MhProposal.uniform(), ChainConfig(400_000, seed=0))
        assert max_err(t, net, q) <= 0.02

    def test_invalid_proposal_row(self, three_net):
        bad = MhProposal("bad", lambda net, i, x, cache: np.array([0.7, 0.7]))
        with pytest.raises(NetFormatError):
            metropolis_hastings_sample(three_net, Query({}, (0,)), bad, ChainConfig(10))


class TestTransitionMatrices:
    def test_evidence_node_is_identity(self, three_net):
        q = Query({1: 0}, (0,))
        np.testing.assert_array_equal(gibbs_transition_matrix(three_net, q, 1), np.eye(8))

    def test_independent_nodes(self):
        net = BayesNet.from_dict({"nodes": [
            {"name": "a", "cardinality": 2, "parents": [], "cpt": [0.3, 0.7]},
            {"name": "b", "cardinality": 3, "parents": [], "cpt": [0.2, 0.2, 0.6]},
        ]})
        T = gibbs_transition_matrix(net, Query(), 1).reshape(2, 3, 2, 3)
        for a in range(2):
            for b_old in range(3):
                np.testing.assert_allclose(T[a, :, a, b_old], [0.2, 0.2, 0.6])

    def test_gibbs_matches_oracle_and_is_stationary(self, rng):
        for _ in range(10):
            net = random_net(rng, 3, [2, 3, 2], max_parents=2)
            q = Query({1: int(rng.integers(3))}, (0,))
            joint = joint_from_dict(net.to_dict())
            pi = conditioned(joint, q.evidence)
            for i in range(3):
                T = gibbs_transition_matrix(net, q, i)
                np.testing.assert_allclose(T, gibbs_matrix(joint, i, q.evidence), atol=1e-12)
                np.testing.assert_allclose(T.sum(axis=0), 1.0, atol=1e-12)
                np.testing.assert_allclose(T @ pi, pi, atol=1e-10)

    def test_products_preserve_pi(self, rng):
        net, q = net_with_evidence(3, n=4)
        pi = conditioned_joint(net, q)
        mats = [gibbs_transition_matrix(net, q, i) for i in range(4)]
        mats += [mh_transition_matrix(net, q, MhProposal.uniform(), i) for i in range(4)]
        for _ in range(20):
            v = pi
            for k in rng.integers(0, len(mats), 5):
                v = mats[k] @ v
            np.testing.assert_allclose(v, pi, atol=1e-9)

    def test_mh_with_blanket_proposal_is_gibbs(self):
        net, q = net_with_evidence(8, n=3, cards=3)
        for i in range(3):
            np.testing.assert_allclose(
                mh_transition_matrix(net, q, MhProposal.blanket(), i), gibbs_transition_matrix(net, q, i), atol=1e-12
            )

    def test_identity_proposal(self, three_net):
        q = Query({}, (0,))
        for i in range(3):
            np.testing.assert_array_equal(mh_transition_matrix(three_net, q, MhProposal.identity(), i), np.eye(8))

    @pytest.mark.parametrize("proposal", [MhProposal.uniform(), MhProposal.flip()])
    def test_detailed_balance(self, proposal):
        net, q = net_with_evidence(5, n=3, cards=3)
        cache = BlanketCache(net, strict=False)
        for i in range(3):
            for x in itertools.product(range(3), repeat=3):
                px = joint_probability(net, x)
                qbar = mh_qbar(net, proposal, i, x, cache)
                for y in range(3):
                    xy = list(x)
                    xy[i] = y
                    back = mh_qbar(net, proposal, i, xy, cache)[x[i]]
                    assert qbar[y] * px == pytest.approx(back * joint_probability(net, xy), abs=1e-10)
