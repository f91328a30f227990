"""Command-line front end.

Subcommands::

    qbn exact   --net NET --query QUERY
    qbn sample  --net NET --query QUERY --method M --samples N [--seed S]
                [--burn B] [--beta K] [--proposal P] [--chains C] [--policy FILE]
    qbn compile --net NET [--gibbs --beta K --state X [--query QUERY]] [--out F] [--map F]
    qbn embed   --cpt CPT [--out F]

Posteriors are printed as compact JSON keyed by comma-joined hypothesis
states.  Exit status is 2 for malformed input and 3 for numeric failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from .cbnet import BayesNet, Cpt, PosteriorTable, Query, exact_posterior
from .classical_sampling import (
    ChainConfig,
    MhProposal,
    SamplingPolicy,
    gibbs_sample_random,
    gibbs_sample_sweep,
    importance_sample,
    metropolis_hastings_sample,
)
from .errors import InvalidCptError, NetFormatError, NumericError
from .qembed import build_gibbs_net, embed_cpt, embed_net, gibbs_net_circuit, qbnet_to_circuit
from .quantum_sampling import (
    QuantumSamplerConfig,
    q_gibbs_sample,
    q_importance_sample,
    q_metropolis_hastings_sample,
)

METHODS = ("is", "rs", "lws", "gibbs", "gibbs-sweep", "mh", "q-is", "q-gibbs", "q-mh")
EXIT_PARSE = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise NetFormatError(message, field="arguments")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qbn", description="Sampling on classical and quantum Bayesian nets.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ex = sub.add_parser("exact", help="exact posterior by enumeration")
    ex.add_argument("--net", required=True)
    ex.add_argument("--query", required=True)

    sa = sub.add_parser("sample", help="estimate a posterior with one of the samplers")
    sa.add_argument("--net", required=True)
    sa.add_argument("--query", required=True)
    sa.add_argument("--method", required=True, choices=METHODS)
    sa.add_argument("--samples", required=True, type=int,
                    help="importance samples, or single-node steps for the chains")
    sa.add_argument("--seed", type=int, default=0)
    sa.add_argument("--burn", type=int, default=None, help="burn-in steps (default samples/10)")
    sa.add_argument("--beta", type=int, default=1, help="sweeps per measurement")
    sa.add_argument("--proposal", default="uniform", help="uniform, flip, blanket or identity")
    sa.add_argument("--policy", default=None, help="JSON sampling CPTs for evidence nodes (method is/q-is)")
    sa.add_argument("--chains", type=int, default=1)

    co = sub.add_parser("compile", help="export a net or Gibbs transition circuit")
    co.add_argument("--net", required=True)
    co.add_argument("--gibbs", action="store_true")
    co.add_argument("--beta", type=int, default=1)
    co.add_argument("--state", default=None, help="comma-separated previous state (default all zeros)")
    co.add_argument("--query", default=None, help="query whose evidence is clamped")
    co.add_argument("--proposal", default=None, help="build the Metropolis-Hastings net instead")
    co.add_argument("--out", default="-")
    co.add_argument("--map", default=None, help="qubit map JSON path (default: stderr)")

    em = sub.add_parser("embed", help="embedding circuit of a single CPT")
    em.add_argument("--cpt", required=True)
    em.add_argument("--out", default="-")
    return p


def _read_json(path: str, what: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise NetFormatError(f"cannot read {what} file {path!r}: {exc.strerror}", field=what) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetFormatError(f"{what} file {path!r} is not valid JSON: {exc}", field=what) from None


def _load(args) -> tuple[BayesNet, Query]:
    net = BayesNet.from_dict(_read_json(args.net, "net"))
    qpath = getattr(args, "query", None)
    q = Query.from_dict(net, _read_json(qpath, "query")) if qpath else Query()
    return net, q


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def _write(path: str, text: str, out) -> None:
    if path == "-":
        out.write(text)
    else:
        Path(path).write_text(text)


def _policy(args, net: BayesNet, q: Query) -> SamplingPolicy:
    if args.method == "rs":
        return SamplingPolicy.rejection(net)
    if args.method == "lws" or args.policy is None:
        return SamplingPolicy.likelihood_weighted(net, q)
    raw = _read_json(args.policy, "policy")
    if not isinstance(raw, dict):
        raise NetFormatError("policy must map node names to CPT lists", field="policy")
    cpts = {}
    for name, flat in raw.items():
        i = net.index(name)
        try:
            cpts[i] = Cpt(net.cardinalities[i], net.cpt(i).parent_cardinalities, np.asarray(flat, dtype=float))
        except (InvalidCptError, ValueError) as exc:
            raise NetFormatError(f"policy for {name!r}: {exc}", field=name) from None
    return SamplingPolicy.general(net, q, cpts)


def _run_chain(args, net: BayesNet, q: Query, chain: int) -> PosteriorTable:
    m = args.method
    if m in ("is", "rs", "lws"):
        return importance_sample(net, q, _policy(args, net, q), args.samples, args.seed, chain)
    if m == "q-is":
        cfg = QuantumSamplerConfig(args.samples, seed=args.seed, chain=chain)
        return q_importance_sample(net, q, _policy(args, net, q), cfg)
    if m in ("gibbs", "gibbs-sweep", "mh"):
        cfg = ChainConfig(args.samples, args.burn, m == "gibbs-sweep", args.beta, args.seed, chain)
        if m == "gibbs":
            return gibbs_sample_random(net, q, cfg)
        if m == "gibbs-sweep":
            return gibbs_sample_sweep(net, q, cfg)
        return metropolis_hastings_sample(net, q, MhProposal.by_name(args.proposal), cfg)
    cfg = QuantumSamplerConfig(args.samples, args.beta, args.burn, args.seed, chain=chain)
    if m == "q-gibbs":
        return q_gibbs_sample(net, q, cfg)
    return q_metropolis_hastings_sample(net, q, MhProposal.by_name(args.proposal), cfg)


def _cmd_exact(args, out, err) -> int:
    net, q = _load(args)
    out.write(_dump(exact_posterior(net, q).to_json_dict()) + "\n")
    return 0


def _cmd_sample(args, out, err) -> int:
    net, q = _load(args)
    if args.samples < 1:
        raise NetFormatError("--samples must be positive", field="samples")
    if args.chains < 1:
        raise NetFormatError("--chains must be positive", field="chains")
    if args.beta < 1:
        raise NetFormatError("--beta must be positive", field="beta")
    if args.burn is not None and not 0 <= args.burn < args.samples:
        raise NetFormatError("--burn must lie in [0, samples)", field="burn")
    start = time.perf_counter()
    table = None
    for c in range(args.chains):
        t = _run_chain(args, net, q, c)
        table = t if table is None else table.merge(t)
        err.write(f"chain {c + 1}/{args.chains} done\n")
    err.write(f"{args.method}: {table.n_samples} samples, total weight {table.total:.6g}, "
              f"{time.perf_counter() - start:.2f}s\n")
    out.write(_dump(table.to_json_dict()) + "\n")
    return 0


def _parse_state(text: str | None, net: BayesNet, q: Query) -> list[int]:
    if text is None:
        return [q.evidence.get(i, 0) for i in range(net.n_nodes)]
    try:
        vals = [int(v) for v in text.split(",")]
    except ValueError:
        raise NetFormatError("--state must be comma-separated integers", field="state") from None
    if len(vals) != net.n_nodes:
        raise NetFormatError(f"--state needs {net.n_nodes} values", field="state")
    return vals


def _cmd_compile(args, out, err) -> int:
    net, q = _load(args)
    if args.gibbs:
        if args.beta < 1:
            raise NetFormatError("--beta must be positive", field="beta")
        proposal = MhProposal.by_name(args.proposal) if args.proposal else None
        g = build_gibbs_net(net, q, args.beta, _parse_state(args.state, net, q), proposal)
        gc = gibbs_net_circuit(g)
        circ, qmap = gc.circuit, gc.qubit_map
        err.write(f"gibbs circuit: {circ.n_qubits} qubits, {len(circ)} gates, peak width {gc.peak_width}\n")
    else:
        circ, qmap = qbnet_to_circuit(embed_net(net))
        err.write(f"net circuit: {circ.n_qubits} qubits, {len(circ)} gates\n")
    _write(args.out, circ.to_text(), out)
    if args.map:
        Path(args.map).write_text(_dump(qmap) + "\n")
    else:
        err.write(_dump(qmap) + "\n")
    return 0


def _cmd_embed(args, out, err) -> int:
    raw = _read_json(args.cpt, "cpt")
    if not isinstance(raw, dict):
        raise NetFormatError("CPT file must be a JSON object", field="cpt")
    card = raw.get("cardinality")
    pcards = raw.get("parent_cardinalities", [])
    flat = raw.get("cpt")
    if not isinstance(card, int) or card < 1:
        raise NetFormatError("'cardinality' must be a positive integer", field="cardinality")
    if not isinstance(pcards, list) or not all(isinstance(c, int) and c >= 1 for c in pcards):
        raise NetFormatError("'parent_cardinalities' must list positive integers", field="parent_cardinalities")
    if not isinstance(flat, list):
        raise NetFormatError("'cpt' must be a list of numbers", field="cpt")
    try:
        cpt = Cpt(card, tuple(pcards), np.asarray(flat, dtype=float))
    except (InvalidCptError, ValueError) as exc:
        raise NetFormatError(f"cpt: {exc}", field="cpt") from None
    _write(args.out, embed_cpt(cpt).circuit.to_text(), out)
    return 0


COMMANDS = {"exact": _cmd_exact, "sample": _cmd_sample, "compile": _cmd_compile, "embed": _cmd_embed}


def run(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    """Run one command and return its exit status."""
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, out, err)
    except NetFormatError as exc:
        field = f" [{exc.field}]" if exc.field else ""
        err.write(f"error{field}: {exc}\n")
        return EXIT_PARSE
    except NumericError as exc:
        err.write(f"numeric error ({type(exc).__name__}): {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_PARSE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
