"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion."""

from __future__ import annotations

import itertools
import json
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.stats import chisquare

from oracles import conditioned, dense_circuit, gibbs_matrix, joint_from_dict, sweep_distribution_by_summation
from qbnsample.cbnet import BayesNet, Cpt, Query, exact_posterior, random_net
from qbnsample.circuit import Circuit, Gate, StateVector, run, sample_outcomes
from qbnsample.classical_sampling import (
    ChainConfig,
    MhProposal,
    SamplingPolicy,
    gibbs_sample_random,
    gibbs_transition_matrix,
    importance_sample,
    metropolis_hastings_sample,
    mh_qbar,
    mh_transition_matrix,
)
from qbnsample.muxor import RyMultiplexor, chain_angles, csd_split, decompose_multiplexor, state_prepare_circuit
from qbnsample.qembed import build_gibbs_net, embed_cpt, gibbs_net_circuit
from qbnsample.quantum_sampling import (
    QuantumSamplerConfig,
    q_gibbs_sample,
    q_importance_sample,
    q_metropolis_hastings_sample,
)


def random_cpt(r: np.random.Generator, card: int, pcards: tuple[int, ...]) -> Cpt:
    rows = r.dirichlet(np.full(card, 0.7), size=int(np.prod(pcards, dtype=int)))
    rows[r.random(rows.shape) < 0.15] = 0.0  # exercise zero-probability branches
    rows[np.arange(rows.shape[0]), r.integers(card, size=rows.shape[0])] += 1e-3
    return Cpt(card, pcards, rows / rows.sum(axis=1, keepdims=True))


def circuit_unitary(circ: Circuit) -> np.ndarray:
    """Columns of the circuit unitary from one run on a reference-entangled state."""
    n = circ.n_qubits
    d = 2**n
    amps = np.zeros(d * d, dtype=complex)
    amps[np.arange(d) * (d + 1)] = 1.0 / np.sqrt(d)  # sum_k |k>_sys |k>_ref
    wide = Circuit(2 * n, list(circ.gates))
    out = run(wide, StateVector(2 * n, amps)).amplitudes
    return out.reshape(d, d).T * np.sqrt(d)


def unitarity_defect(U: np.ndarray) -> float:
    return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))


def three_node_nets(count: int, seed: int, cards=(2, 3)):
    r = np.random.default_rng(seed)
    for _ in range(count):
        cs = [int(r.choice(cards)) for _ in range(3)]
        yield r, random_net(r, 3, cs, max_parents=2)


def random_evidence(r, net: BayesNet) -> Query:
    k = int(r.integers(0, 3))
    nodes = sorted(r.choice(net.n_nodes, size=k, replace=False).tolist())
    ev = {i: int(r.integers(net.cardinalities[i])) for i in nodes}
    hyp = tuple(i for i in range(net.n_nodes) if i not in ev)[:1]
    return Query(ev, hyp)


def test_ac01_embedding_marginal_law(record_acceptance):
    start = time.perf_counter()
    r = np.random.default_rng(101)
    worst = 0.0
    for _ in range(200):
        card = int(r.choice([2, 4, 8]))
        pcards = tuple(int(r.choice([2, 4, 8])) for _ in range(int(r.integers(0, 4))))
        cpt = random_cpt(r, card, pcards)
        emb = embed_cpt(cpt)
        npar = emb.n_parent_bits
        # parents in uniform superposition: by linearity every column is
        # visible at once, with Born weight P(y|x) / 2**npar on |y>|x>
        circ = Circuit(emb.circuit.n_qubits, [Gate("H", q) for q in range(npar)] + list(emb.circuit.gates))
        probs = run(circ).probabilities() * 2**npar
        for pv in itertools.product(*(range(c) for c in pcards)):
            pidx = emb.parent_index(pv)
            law = probs[pidx + (np.arange(2**emb.focus_width) << npar)]
            worst = max(worst, float(np.max(np.abs(law[:card] - cpt.row(pv)))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 30
    record_acceptance(1, "q-embedding marginal law", ok, f"max err {worst:.2e} over 200 CPTs, {elapsed:.1f}s")
    assert ok


def test_ac02_unitarity(record_acceptance):
    start = time.perf_counter()
    r = np.random.default_rng(102)
    worst_emb = worst_mux = worst_csd = 0.0
    n_emb = 0
    while n_emb < 40:
        card = int(r.integers(2, 9))
        pcards = tuple(int(r.integers(2, 5)) for _ in range(int(r.integers(0, 4))))
        cpt = random_cpt(r, card, pcards)
        emb = embed_cpt(cpt)
        if emb.circuit.n_qubits > 10:
            continue
        worst_emb = max(worst_emb, unitarity_defect(circuit_unitary(emb.circuit)))
        n_emb += 1
    for k in range(10):
        m = RyMultiplexor(k, tuple(range(k)), r.uniform(-np.pi, np.pi, 2**k))
        U = circuit_unitary(decompose_multiplexor(m))
        worst_mux = max(worst_mux, unitarity_defect(U), float(np.max(np.abs(U - m.dense()))))
    for n in range(1, 9):
        z = r.normal(size=(2**n, 2**n)) + 1j * r.normal(size=(2**n, 2**n))
        U = np.linalg.qr(z)[0]
        worst_csd = max(worst_csd, float(np.max(np.abs(csd_split(U).reconstruct() - U))))
    # cross-check the column extraction against the Kronecker oracle
    small = decompose_multiplexor(RyMultiplexor(0, (1, 2, 3), r.uniform(-3, 3, 8)))
    extract = float(np.max(np.abs(circuit_unitary(small) - dense_circuit(small))))
    elapsed = time.perf_counter() - start
    worst = max(worst_emb, worst_mux, worst_csd, extract)
    ok = worst <= 1e-10 and elapsed < 60
    record_acceptance(2, "unitarity", ok,
                      f"embeddings {worst_emb:.1e}, multiplexors N_K<=9 {worst_mux:.1e}, "
                      f"CSD {worst_csd:.1e}, {elapsed:.1f}s")
    assert ok


def test_ac03_chain_rule_state_prep(record_acceptance):
    start = time.perf_counter()
    r = np.random.default_rng(103)
    worst = 0.0
    for t in range(100):
        nb = 1 + t % 5
        q = r.dirichlet(np.full(2**nb, 0.5))
        q[r.random(q.size) < 0.2] = 0.0
        if q.sum() == 0.0:
            q[0] = 1.0
        q /= q.sum()
        amps = run(state_prepare_circuit(chain_angles(q))).amplitudes
        worst = max(worst, float(np.max(np.abs(amps - np.sqrt(q)))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 10
    record_acceptance(3, "chain-rule state preparation", ok, f"max amplitude err {worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_ac04_cnot_count(record_acceptance):
    counts = {k: decompose_multiplexor(RyMultiplexor(k, tuple(range(k)), np.linspace(0, 1, 2**k))).cnot_count()
              for k in range(1, 11)}
    bare = decompose_multiplexor(RyMultiplexor(0, (), (0.4,)))
    ok = all(c == 2**k for k, c in counts.items()) and counts[4] == 16 and bare.cnot_count() == 0
    record_acceptance(4, "multiplexor CNOT count", ok,
                      f"N_K=1..10 -> {list(counts.values())}; N_K=4 -> {counts[4]}")
    assert ok


def test_ac05_gibbs_stationarity(record_acceptance):
    start = time.perf_counter()
    worst = oracle_gap = 0.0
    for r, net in three_node_nets(50, 105):
        q = random_evidence(r, net)
        joint = joint_from_dict(net.to_dict())
        pi = conditioned(joint, q.evidence)
        for i in range(3):
            T = gibbs_transition_matrix(net, q, i)
            worst = max(worst, float(np.max(np.abs(T @ pi - pi))))
            oracle_gap = max(oracle_gap, float(np.max(np.abs(T - gibbs_matrix(joint, i, q.evidence)) * pi[None, :])))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and oracle_gap <= 1e-12 and elapsed < 30
    record_acceptance(5, "Gibbs stationarity", ok,
                      f"max |T(i) pi - pi| {worst:.2e} over 50 nets, {elapsed:.1f}s")
    assert ok


def random_proposal(r: np.random.Generator) -> MhProposal:
    tables: dict[tuple[int, int, int], np.ndarray] = {}

    def fn(net, i, x, cache):
        key = (i, x[i], net.cardinalities[i])
        if key not in tables:
            tables[key] = r.dirichlet(np.ones(net.cardinalities[i]))
        return tables[key]

    return MhProposal("random", fn)


def test_ac06_mh_detailed_balance(record_acceptance):
    start = time.perf_counter()
    worst_db = worst_stat = 0.0
    for r, net in three_node_nets(50, 106):
        q = random_evidence(r, net)
        pi = conditioned(joint_from_dict(net.to_dict()), q.evidence).reshape(net.cardinalities)
        for prop in (MhProposal.uniform(), MhProposal.flip(), random_proposal(r)):
            for i in range(3):
                if i in q.evidence:
                    continue
                for x in itertools.product(*(range(c) for c in net.cardinalities)):
                    if not q.consistent(x):
                        continue
                    fwd = mh_qbar(net, prop, i, x)
                    for y in range(net.cardinalities[i]):
                        if y == x[i]:
                            continue
                        xp = x[:i] + (y,) + x[i + 1:]
                        back = mh_qbar(net, prop, i, xp)[x[i]]
                        worst_db = max(worst_db, abs(fwd[y] * pi[x] - back * pi[xp]))
                T = mh_transition_matrix(net, q, prop, i)
                flat = pi.ravel()
                worst_stat = max(worst_stat, float(np.max(np.abs(T @ flat - flat))))
    elapsed = time.perf_counter() - start
    ok = worst_db <= 1e-10 and worst_stat <= 1e-10 and elapsed < 60
    record_acceptance(6, "MH detailed balance and stationarity", ok,
                      f"balance {worst_db:.2e}, stationarity {worst_stat:.2e}, 50 nets x 3 proposals, {elapsed:.1f}s")
    assert ok


def test_ac07_mh_reduces_to_gibbs(record_acceptance, asia):
    nets = [(asia[0], asia[1])]
    for r, net in three_node_nets(10, 107):
        nets.append((net, random_evidence(r, net)))
    worst = 0.0
    for net, q in nets:
        for i in range(net.n_nodes):
            G = gibbs_transition_matrix(net, q, i)
            M = mh_transition_matrix(net, q, MhProposal.blanket(), i)
            worst = max(worst, float(np.max(np.abs(G - M))))
    ok = worst <= 1e-12
    record_acceptance(7, "MH with blanket proposal equals Gibbs", ok,
                      f"max entry diff {worst:.2e} on Asia and 10 random nets")
    assert ok


def test_ac08_gibbs_circuit_fidelity(record_acceptance):
    start = time.perf_counter()
    worst = 0.0
    widths = set()
    for _, net in three_node_nets(10, 108, cards=(2,)):
        joint = joint_from_dict(net.to_dict())
        for x in itertools.product(range(2), repeat=3):
            g = build_gibbs_net(net, Query(), 2, x)
            gc = gibbs_net_circuit(g)
            widths.add(gc.peak_width)
            got = np.zeros(8)
            for y, p in gc.final_distribution(g).items():
                got[np.ravel_multi_index(y, (2, 2, 2))] += p
            worst = max(worst, float(np.max(np.abs(got - sweep_distribution_by_summation(joint, x, 2)))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and widths == {10} and elapsed < 60
    record_acceptance(8, "quantum Gibbs circuit fidelity", ok,
                      f"max err {worst:.2e} over 10 nets x 8 start states, peak width {sorted(widths)}, {elapsed:.1f}s")
    assert ok


def test_ac09_end_to_end_accuracy(record_acceptance, asia):
    net, q = asia
    exact = exact_posterior(net, q).as_array()
    budget = 200_000
    samplers = {
        "lws": lambda s: importance_sample(net, q, SamplingPolicy.likelihood_weighted(net, q), budget, s),
        "gibbs": lambda s: gibbs_sample_random(net, q, ChainConfig(budget, seed=s)),
        "mh": lambda s: metropolis_hastings_sample(net, q, MhProposal.uniform(), ChainConfig(budget, seed=s)),
        "q-is": lambda s: q_importance_sample(net, q, SamplingPolicy.likelihood_weighted(net, q),
                                              QuantumSamplerConfig(budget, seed=s)),
        "q-gibbs": lambda s: q_gibbs_sample(net, q, QuantumSamplerConfig(budget, seed=s)),
        "q-mh": lambda s: q_metropolis_hastings_sample(net, q, MhProposal.uniform(),
                                                       QuantumSamplerConfig(budget, seed=s)),
    }
    start = time.perf_counter()
    errors = {}
    for name, fn in samplers.items():
        errors[name] = max(float(np.max(np.abs(fn(seed).as_array() - exact))) for seed in range(5))
    elapsed = time.perf_counter() - start
    ok = max(errors.values()) <= 0.02 and elapsed < 300
    detail = ", ".join(f"{k} {v:.4f}" for k, v in errors.items())
    record_acceptance(9, "Asia posterior accuracy", ok, f"max abs err per sampler: {detail}; {elapsed:.0f}s")
    assert ok


def test_ac10_chi_square(record_acceptance):
    start = time.perf_counter()
    r = np.random.default_rng(110)
    psi = r.normal(size=32) + 1j * r.normal(size=32)
    psi /= np.linalg.norm(psi)
    state = StateVector(5, psi)
    shots = sample_outcomes(state, range(5), 100_000, np.random.default_rng(10))
    observed = np.bincount(shots, minlength=32)
    expected = np.abs(psi) ** 2 * shots.size
    stat, p = chisquare(observed, expected * observed.sum() / expected.sum())
    elapsed = time.perf_counter() - start
    ok = p > 0.001 and elapsed < 10
    record_acceptance(10, "simulator chi-square", ok, f"chi2 {stat:.1f} on 31 dof, p = {p:.3f}, {elapsed:.2f}s")
    assert ok


@pytest.fixture
def asia_files(tmp_path, asia):
    net, _ = asia
    net_path = tmp_path / "asia.json"
    net_path.write_text(json.dumps(net.to_dict()))
    q_path = tmp_path / "query.json"
    q_path.write_text(json.dumps({"evidence": {"xray": 1, "dysp": 1}, "hypotheses": ["tub", "lung", "bronc"]}))
    return str(net_path), str(q_path)


def test_ac11_cli_reproducible(record_acceptance, asia_files):
    net, query = asia_files
    base = [sys.executable, "-m", "qbnsample.cli"]
    commands = [["sample", "--net", net, "--query", query, "--method", m, "--samples", "4000", "--seed", "3",
                 "--chains", "2"] for m in ("lws", "gibbs", "mh", "q-is", "q-gibbs", "q-mh")]
    commands.append(["compile", "--net", net, "--gibbs", "--query", query, "--beta", "2"])
    same = []
    for cmd in commands:
        a = subprocess.run(base + cmd, capture_output=True, check=True).stdout
        b = subprocess.run(base + cmd, capture_output=True, check=True).stdout
        same.append(a == b and len(a) > 0)
    ok = all(same)
    record_acceptance(11, "CLI reproducibility", ok, f"{sum(same)}/{len(same)} invocations byte-identical")
    assert ok
