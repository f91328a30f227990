"""R_y multiplexors: chain-rule angles, state preparation, and decompositions.

A multiplexor with target ``t`` and controls ``c_0..c_{k-1}`` applies
``RotY(theta_b)`` to ``t`` whenever the controls spell ``b`` (``c_0`` least
significant).  ``chain_angles`` and ``state_prepare_circuit`` realize the
chain rule: a probability vector ``q`` over ``n`` bits is loaded as
``sum_b sqrt(q_b) |b>`` by multiplexors of increasing control count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .circuit import Circuit, cnot, mux_roty, roty, roty_matrix
from .errors import NotUnitaryError

UNITARY_TOL = 1e-10


@dataclass(frozen=True)
class RyMultiplexor:
    target: int
    controls: tuple[int, ...]
    angles: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "controls", tuple(int(c) for c in self.controls))
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        if len(self.angles) != 2 ** len(self.controls):
            raise ValueError("need 2**len(controls) angles")
        if not all(math.isfinite(a) for a in self.angles):
            raise ValueError("angles must be finite")
        if self.target in self.controls or len(set(self.controls)) != len(self.controls):
            raise ValueError("target and controls must be distinct")

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    def gate(self):
        if not self.controls:
            return roty(self.target, self.angles[0])
        return mux_roty(self.target, self.controls, self.angles)

    def dense(self, n_qubits: int | None = None) -> np.ndarray:
        """``sum_b RotY(theta_b)(target) (x) P_b(controls)`` as a matrix."""
        n = n_qubits or max((self.target,) + self.controls) + 1
        return dense_multiplexor([roty_matrix(a) for a in self.angles], [self.target], self.controls, n)


def dense_multiplexor(blocks: Sequence[np.ndarray], targets: Sequence[int],
                      controls: Sequence[int], n_qubits: int) -> np.ndarray:
    """Dense ``sum_b U_b(targets) (x) P_b(controls)`` for arbitrary blocks.

    ``blocks[b]`` acts on ``targets`` with ``targets[0]`` least significant.
    """
    dim = 2**n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    nt = len(targets)
    tmask = sum(1 << t for t in targets)
    for col in range(dim):
        b = sum(((col >> c) & 1) << j for j, c in enumerate(controls))
        tin = sum(((col >> t) & 1) << j for j, t in enumerate(targets))
        base = col & ~tmask
        u = blocks[b]
        for tout in range(2**nt):
            row = base | sum(((tout >> j) & 1) << t for j, t in enumerate(targets))
            out[row, col] += u[tout, tin]
    return out


@dataclass(frozen=True)
class AngleTree:
    """Level ``k`` holds ``2**k`` angles indexed by the lower ``k`` bits."""

    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        for k, lv in enumerate(self.levels):
            if len(lv) != 2**k:
                raise ValueError(f"level {k} needs {2**k} angles")

    @property
    def n_bits(self) -> int:
        return len(self.levels)


def chain_angles(q: Sequence[float], tol: float = 1e-12) -> AngleTree:
    """Chain-rule angles for ``sum_b sqrt(q_b) |b>``.

    Bit 0 is fixed first: ``theta`` at level ``k`` and lower bits ``l`` satisfies
    ``cos = sqrt(q(bit_k = 0, low = l) / q(low = l))``.  A zero conditional
    marginal yields angle 0 (the branch is unreachable).
    """
    q = np.asarray(q, dtype=float)
    n = int(round(math.log2(q.size))) if q.size else -1
    if n < 0 or 2**n != q.size:
        raise ValueError("length of q must be a power of two")
    if np.any(q < 0) or abs(q.sum() - 1.0) > tol:
        raise ValueError("q must be a nonnegative vector summing to 1")
    levels = []
    for k in range(n):
        m = q.reshape(-1, 2 ** (k + 1)).sum(axis=0)
        low = 2**k
        levels.append(np.arctan2(np.sqrt(m[low:]), np.sqrt(m[:low])))
    return AngleTree(tuple(levels))


def state_prepare_circuit(tree: AngleTree, qubits: Sequence[int] | None = None,
                          n_qubits: int | None = None) -> Circuit:
    """One RotY then multiplexors with 1, 2, ... controls on lower bits."""
    n = tree.n_bits
    qubits = list(range(n)) if qubits is None else list(qubits)
    circ = Circuit(n_qubits if n_qubits is not None else (max(qubits) + 1 if qubits else 0))
    for k, lv in enumerate(tree.levels):
        circ.append(RyMultiplexor(qubits[k], tuple(qubits[:k]), tuple(lv)).gate())
    return circ


def gray(i: int) -> int:
    return i ^ (i >> 1)


def walsh_angles(angles: Sequence[float]) -> np.ndarray:
    """Rotation angles of the CNOT ladder for a Gray-code ordered multiplexor."""
    theta = np.asarray(angles, dtype=float)
    k = theta.size
    b = np.arange(k)[:, None]
    g = np.array([gray(i) for i in range(k)])[None, :]
    parity = np.vectorize(lambda v: bin(v).count("1") & 1)(b & g)
    M = 1.0 - 2.0 * parity
    return M.T @ theta / k


def decompose_multiplexor(m: RyMultiplexor, n_qubits: int | None = None) -> Circuit:
    """Alternating RotY / CNOT sequence with ``2**N_K`` CNOTs.

    Rotation ``i`` carries the Walsh transform of the angles; CNOT ``i`` is
    controlled by the control bit that flips between Gray codes ``i`` and
    ``i + 1`` (cyclically), so every pattern ``b`` sees the signed sum that
    reproduces ``theta_b``.
    """
    n = n_qubits or max((m.target,) + m.controls) + 1
    circ = Circuit(n)
    k = m.n_controls
    if k == 0:
        return circ.append(roty(m.target, m.angles[0]))
    alpha = walsh_angles(m.angles)
    size = 2**k
    for i in range(size):
        circ.append(roty(m.target, float(alpha[i])))
        flip = gray(i) ^ gray((i + 1) % size)
        circ.append(cnot(m.target, m.controls[flip.bit_length() - 1]))
    return circ


@dataclass(frozen=True)
class CsdResult:
    L0: np.ndarray
    L1: np.ndarray
    theta: np.ndarray
    R0: np.ndarray
    R1: np.ndarray

    def __iter__(self):
        return iter((self.L0, self.L1, self.theta, self.R0, self.R1))

    def middle(self) -> np.ndarray:
        """``exp(i sigma_y (x) Theta) = [[C, S], [-S, C]]``."""
        c, s = np.diag(np.cos(self.theta)), np.diag(np.sin(self.theta))
        return np.block([[c, s], [-s, c]])

    def reconstruct(self) -> np.ndarray:
        L = scipy.linalg.block_diag(self.L0, self.L1)
        R = scipy.linalg.block_diag(self.R0, self.R1)
        return L @ self.middle() @ R


def is_unitary(U: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    U = np.asarray(U)
    return U.ndim == 2 and U.shape[0] == U.shape[1] and \
        float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0])))) <= tol


def csd_split(U: np.ndarray) -> CsdResult:
    """One level of the cosine-sine decomposition.

    ``U = (L0 (+) L1) exp(i sigma_y (x) Theta) (R0 (+) R1)`` with angles in
    ``[0, pi/2]`` sorted ascending, i.e. cosines nonincreasing.

    Raises:
        NotUnitaryError: if ``U`` is not unitary or has odd dimension.
    """
    U = np.asarray(U, dtype=complex)
    if not is_unitary(U) or U.shape[0] % 2:
        raise NotUnitaryError("csd_split needs an even-dimensional unitary")
    h = U.shape[0] // 2
    (u1, u2), theta, (v1h, v2h) = scipy.linalg.cossin(U, p=h, q=h, separate=True)
    # scipy's middle factor is [[C, -S], [S, C]]; flip the sign of the second blocks
    L0, L1, R0, R1 = u1, -u2, v1h, -v2h
    order = np.argsort(theta, kind="stable")
    return CsdResult(L0[:, order], L1[:, order], theta[order], R0[order, :], R1[order, :])
