"""Gate IR, text serialization, and statevector simulators.

Basis index ``b`` of an ``n``-qubit register encodes qubit 0 as the least
significant bit, i.e. ``|a_{n-1} ... a_1 a_0>``.  Gate lists are stored in
APPLICATION order: the first gate acts first.  Circuit diagrams usually read
right to left in operator notation; the text format reads top to bottom in
time order instead.

Text format, one gate per line after a ``QUBITS <n>`` header::

    ROTY <theta> t<target> [c<q>:{+|-} ...]
    X|Y|Z|H t<target> [c<q>:{+|-} ...]
    MUXROTY t<target> c<q0> c<q1> ... | <theta_0> <theta_1> ...
    RESET t<target>

A ``+`` control fires on ``|1>`` and ``-`` on ``|0>``.  MUXROTY angle ``k``
applies when the controls spell ``k`` with the first listed control as the
least significant bit.  ``RESET`` returns a qubit to ``|0>`` and is used only
for qubit recycling.  ``#`` starts a comment.

``RotY(theta)`` is ``[[cos, -sin], [sin, cos]]`` so that ``RotY(theta)|0> =
cos(theta)|0> + sin(theta)|1>``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import WidthError

DEFAULT_MAX_QUBITS = 24
NORM_TOL = 1e-10
PRUNE_TOL = 1e-15

KINDS = ("ROTY", "X", "Y", "Z", "H", "MUXROTY", "RESET")
_FIXED = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0),
}


def max_qubits() -> int:
    """Simulator width cap, overridable through ``QBN_MAX_QUBITS``."""
    raw = os.environ.get("QBN_MAX_QUBITS")
    if raw is None:
        return DEFAULT_MAX_QUBITS
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"QBN_MAX_QUBITS must be an integer, got {raw!r}") from None


def roty_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    controls: tuple[tuple[int, bool], ...] = ()
    angle: float | None = None
    angles: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        controls = tuple((int(q), bool(p)) for q, p in self.controls)
        object.__setattr__(self, "controls", controls)
        qs = [q for q, _ in controls]
        if self.target in qs:
            raise ValueError("target qubit may not also be a control")
        if len(set(qs)) != len(qs):
            raise ValueError("control qubits must be distinct")
        if self.kind == "ROTY":
            if self.angle is None or not math.isfinite(self.angle):
                raise ValueError("ROTY needs a finite angle")
            object.__setattr__(self, "angle", float(self.angle))
        if self.kind == "MUXROTY":
            if self.angles is None or len(self.angles) != 2 ** len(controls):
                raise ValueError("MUXROTY needs 2**len(controls) angles")
            if not all(p for _, p in controls):
                raise ValueError("MUXROTY controls carry no polarity")
            angles = tuple(float(a) for a in self.angles)
            if not all(math.isfinite(a) for a in angles):
                raise ValueError("MUXROTY angles must be finite")
            object.__setattr__(self, "angles", angles)
        if self.kind == "RESET" and controls:
            raise ValueError("RESET takes no controls")

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.target,) + tuple(q for q, _ in self.controls)

    @property
    def is_cnot(self) -> bool:
        return self.kind == "X" and len(self.controls) == 1

    def matrix(self) -> np.ndarray:
        """2x2 target matrix (not defined for MUXROTY and RESET)."""
        if self.kind == "ROTY":
            return roty_matrix(self.angle).astype(complex)
        return _FIXED[self.kind]

    def to_text(self) -> str:
        if self.kind == "MUXROTY":
            cs = " ".join(f"c{q}" for q, _ in self.controls)
            head = f"MUXROTY t{self.target}" + (f" {cs}" if cs else "")
            return head + " | " + " ".join(repr(a) for a in self.angles)
        parts = [self.kind]
        if self.kind == "ROTY":
            parts.append(repr(self.angle))
        parts.append(f"t{self.target}")
        parts += [f"c{q}:{'+' if p else '-'}" for q, p in self.controls]
        return " ".join(parts)


def roty(target: int, theta: float, controls: Iterable[tuple[int, bool]] = ()) -> Gate:
    return Gate("ROTY", target, tuple(controls), angle=theta)


def pauli_x(target: int, controls: Iterable[tuple[int, bool]] = ()) -> Gate:
    return Gate("X", target, tuple(controls))


def cnot(target: int, control: int, polarity: bool = True) -> Gate:
    return Gate("X", target, ((control, polarity),))


def mux_roty(target: int, controls: Sequence[int], angles: Sequence[float]) -> Gate:
    return Gate("MUXROTY", target, tuple((c, True) for c in controls), angles=tuple(angles))


def reset(target: int) -> Gate:
    return Gate("RESET", target)


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            self._check(g)

    def _check(self, g: Gate) -> None:
        for q in g.qubits:
            if not 0 <= q < self.n_qubits:
                raise IndexError(f"qubit {q} outside a {self.n_qubits}-qubit circuit")

    def append(self, g: Gate) -> "Circuit":
        self._check(g)
        self.gates.append(g)
        return self

    def extend(self, gates: Iterable[Gate]) -> "Circuit":
        for g in gates:
            self.append(g)
        return self

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def count(self, kind: str) -> int:
        return sum(g.kind == kind for g in self.gates)

    def cnot_count(self) -> int:
        return sum(g.is_cnot for g in self.gates)

    @property
    def has_reset(self) -> bool:
        return any(g.kind == "RESET" for g in self.gates)

    def to_text(self) -> str:
        return "\n".join([f"QUBITS {self.n_qubits}"] + [g.to_text() for g in self.gates]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln]
        if not lines or not lines[0].startswith("QUBITS"):
            raise ValueError("circuit text must start with 'QUBITS <n>'")
        head = lines[0].split()
        if len(head) != 2:
            raise ValueError("malformed QUBITS header")
        circ = cls(int(head[1]))
        for lineno, line in enumerate(lines[1:], start=2):
            try:
                circ.append(_parse_gate(line))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        return circ


def _parse_target(tok: str) -> int:
    if not tok.startswith("t"):
        raise ValueError(f"expected t<q>, got {tok!r}")
    return int(tok[1:])


def _parse_gate(line: str) -> Gate:
    if line.startswith("MUXROTY"):
        left, sep, right = line.partition("|")
        if not sep:
            raise ValueError("MUXROTY needs '|' before its angles")
        toks = left.split()
        target = _parse_target(toks[1])
        controls = []
        for tok in toks[2:]:
            if not tok.startswith("c"):
                raise ValueError(f"expected c<q>, got {tok!r}")
            controls.append(int(tok[1:]))
        return mux_roty(target, controls, [float(a) for a in right.split()])
    toks = line.split()
    kind = toks[0]
    if kind not in KINDS:
        raise ValueError(f"unknown gate {kind!r}")
    rest = toks[1:]
    angle = None
    if kind == "ROTY":
        angle = float(rest[0])
        rest = rest[1:]
    target = _parse_target(rest[0])
    controls = []
    for tok in rest[1:]:
        q, _, pol = tok.partition(":")
        if not q.startswith("c") or pol not in "+-" or not pol:
            raise ValueError(f"malformed control {tok!r}")
        controls.append((int(q[1:]), pol == "+"))
    return Gate(kind, target, tuple(controls), angle=angle)


# ---------------------------------------------------------------------------
# Dense statevector
# ---------------------------------------------------------------------------


class StateVector:
    """Dense ``2**n`` amplitude vector, qubit 0 least significant."""

    def __init__(self, n_qubits: int, amplitudes: np.ndarray | None = None):
        cap = max_qubits()
        if n_qubits > cap:
            raise WidthError(f"{n_qubits} qubits exceed the simulator cap {cap}")
        self.n_qubits = n_qubits
        if amplitudes is None:
            amplitudes = np.zeros(2**n_qubits, dtype=complex)
            amplitudes[0] = 1.0
        else:
            amplitudes = np.array(amplitudes, dtype=complex).ravel()
            if amplitudes.size != 2**n_qubits:
                raise ValueError("amplitude vector has the wrong length")
        self.amplitudes = amplitudes

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVector":
        s = cls(n_qubits)
        s.amplitudes[0] = 0.0
        s.amplitudes[index] = 1.0
        return s

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def _tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_qubits) if self.n_qubits else self.amplitudes

    def _axis(self, q: int) -> int:
        return self.n_qubits - 1 - q

    def _pair(self, target: int, fixed: Sequence[tuple[int, int]]):
        """Views ``(v0, v1)`` of the target's 0/1 halves restricted to fixed control values."""
        psi = self._tensor()
        idx: list = [slice(None)] * self.n_qubits
        for q, v in fixed:
            idx[self._axis(q)] = v
        sub = psi[tuple(idx)]
        ax = self._axis(target) - sum(1 for q, _ in fixed if self._axis(q) < self._axis(target))
        sub = np.moveaxis(sub, ax, 0)
        # slices keep views even when only the target axis is left
        return sub[0:1], sub[1:2]

    def apply_matrix(self, m: np.ndarray, target: int, fixed: Sequence[tuple[int, int]] = ()) -> None:
        v0, v1 = self._pair(target, fixed)
        a = v0.copy()
        v0 *= m[0, 0]
        v0 += m[0, 1] * v1
        v1 *= m[1, 1]
        v1 += m[1, 0] * a

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"


def _check_indices(n: int, g: Gate) -> None:
    for q in g.qubits:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} outside a {n}-qubit register")


def apply_gate(state: StateVector, g: Gate, rng: np.random.Generator | None = None) -> StateVector:
    """Apply one gate in place and return the state.

    ``RESET`` measures the qubit (needs ``rng``) and flips it back to ``|0>``.
    """
    _check_indices(state.n_qubits, g)
    if g.kind == "MUXROTY":
        return apply_multiplexed_roty(state, g)
    if g.kind == "RESET":
        if rng is None:
            raise ValueError("RESET on a dense state needs an rng")
        (bit,), _ = measure_subset(state, [g.target], rng, inplace=True)
        if bit:
            state.apply_matrix(_FIXED["X"], g.target)
        return state
    fixed = [(q, 1 if p else 0) for q, p in g.controls]
    if g.kind == "X":
        v0, v1 = state._pair(g.target, fixed)
        tmp = v0.copy()
        v0[...] = v1
        v1[...] = tmp
        return state
    state.apply_matrix(g.matrix(), g.target, fixed)
    return state


def apply_multiplexed_roty(state: StateVector, g: Gate) -> StateVector:
    """Rotate the target by ``angles[b]`` in each control subspace ``b``."""
    _check_indices(state.n_qubits, g)
    cs = [q for q, _ in g.controls]
    for b, theta in enumerate(g.angles):
        if theta == 0.0:
            continue
        fixed = [(q, (b >> j) & 1) for j, q in enumerate(cs)]
        state.apply_matrix(roty_matrix(theta), g.target, fixed)
    return state


def run(circuit: Circuit, state: StateVector | None = None,
        rng: np.random.Generator | None = None) -> StateVector:
    state = StateVector(circuit.n_qubits) if state is None else state
    if state.n_qubits != circuit.n_qubits:
        raise ValueError("state and circuit widths differ")
    for g in circuit.gates:
        apply_gate(state, g, rng)
    return state


def marginal_distribution(state: StateVector, qubits: Sequence[int]) -> np.ndarray:
    """Exact Born marginal; index ``sum_j bit(qubits[j]) << j``."""
    qubits = list(qubits)
    if len(set(qubits)) != len(qubits):
        raise ValueError("qubits must be distinct")
    for q in qubits:
        if not 0 <= q < state.n_qubits:
            raise IndexError(f"qubit {q} outside a {state.n_qubits}-qubit register")
    n = state.n_qubits
    probs = state.probabilities().reshape((2,) * n) if n else state.probabilities()
    keep = [state._axis(q) for q in reversed(qubits)]
    rest = [a for a in range(n) if a not in keep]
    return probs.transpose(keep + rest).reshape(2 ** len(qubits), -1).sum(axis=1)


def measure_subset(state: StateVector, qubits: Sequence[int], rng: np.random.Generator,
                   inplace: bool = False) -> tuple[tuple[int, ...], StateVector]:
    """Projective measurement of ``qubits``; returns bits in the order given."""
    qubits = list(qubits)
    p = marginal_distribution(state, qubits)
    cum = np.cumsum(p)
    k = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    k = min(k, p.size - 1)
    while p[k] == 0.0:
        k -= 1
    bits = tuple((k >> j) & 1 for j in range(len(qubits)))
    out = state if inplace else state.copy()
    idx = np.arange(2**state.n_qubits)
    mask = np.ones(idx.size, dtype=bool)
    for q, b in zip(qubits, bits):
        mask &= ((idx >> q) & 1) == b
    out.amplitudes[~mask] = 0.0
    out.amplitudes /= math.sqrt(p[k])
    return bits, out


def sample_outcomes(state: StateVector, qubits: Sequence[int], shots: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Outcome indices of ``shots`` independent measurements of fresh copies."""
    p = marginal_distribution(state, qubits)
    return rng.choice(p.size, size=shots, p=p / p.sum())


# ---------------------------------------------------------------------------
# Sparse exact simulator with deferred reset
# ---------------------------------------------------------------------------


class SparseState:
    """Exact simulator over the nonzero amplitudes only.

    ``RESET`` is deferred: the physical qubit is rebound to a fresh logical
    qubit in ``|0>`` while the old logical qubit keeps its value as an
    unobserved record.  Marginals over physical qubits therefore equal the
    result of measuring and discarding at the reset points, with no sampling.
    """

    def __init__(self, n_qubits: int, index: int = 0):
        self.n_qubits = n_qubits
        self.logical = list(range(n_qubits))
        self.next_logical = n_qubits
        self.amps: dict[int, complex] = {index: 1.0 + 0j}

    def apply(self, g: Gate) -> None:
        _check_indices(self.n_qubits, g)
        if g.kind == "RESET":
            self.logical[g.target] = self.next_logical
            self.next_logical += 1
            return
        t = self.logical[g.target]
        tmask = 1 << t
        cmask = cval = 0
        for q, p in g.controls:
            bit = 1 << self.logical[q]
            cmask |= bit
            if p:
                cval |= bit
        if g.kind == "MUXROTY":
            clog = [self.logical[q] for q, _ in g.controls]

            def mat_for(i):
                b = 0
                for j, lq in enumerate(clog):
                    b |= ((i >> lq) & 1) << j
                return roty_matrix(g.angles[b])

            self._apply2(tmask, 0, 0, mat_for)
            return
        m = g.matrix()
        self._apply2(tmask, cmask, cval, lambda i: m)

    def _apply2(self, tmask: int, cmask: int, cval: int, mat_for) -> None:
        out: dict[int, complex] = {}
        for i, a in self.amps.items():
            if (i & cmask) != cval:
                out[i] = out.get(i, 0) + a
                continue
            m = mat_for(i)
            bit = 1 if i & tmask else 0
            i0 = i & ~tmask
            i1 = i0 | tmask
            a0 = m[0, bit] * a
            a1 = m[1, bit] * a
            if a0 != 0:
                out[i0] = out.get(i0, 0) + a0
            if a1 != 0:
                out[i1] = out.get(i1, 0) + a1
        self.amps = {i: a for i, a in out.items() if abs(a) > PRUNE_TOL}

    def run(self, circuit: Circuit) -> "SparseState":
        for g in circuit.gates:
            self.apply(g)
        return self

    def marginal(self, qubits: Sequence[int]) -> np.ndarray:
        """Born marginal over physical ``qubits``; index as in :func:`marginal_distribution`."""
        logical = [self.logical[q] for q in qubits]
        out = np.zeros(2 ** len(qubits))
        for i, a in self.amps.items():
            k = 0
            for j, lq in enumerate(logical):
                k |= ((i >> lq) & 1) << j
            out[k] += abs(a) ** 2
        return out

    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self.amps.values()))


def basis_index(bits: dict[int, int] | Sequence[int]) -> int:
    """Index of a basis state given ``{qubit: bit}`` or a bit list (qubit 0 first)."""
    items = bits.items() if isinstance(bits, dict) else enumerate(bits)
    return sum(int(b) << q for q, b in items)
