"""State-vector simulation of brickwork random unitary circuits.

Qubit q is bit q of the amplitude index. A d-qubit gate on qubits
``start .. start+d-1`` is applied by permuting those index bits to the
fastest-varying position, viewing the state as a (2**(N-d), 2**d) matrix
and right-multiplying by U^T through the backend's zgemm.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .datagen import haar_unitary

MAX_QUBITS = 26


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    @property
    def nbytes(self) -> int:
        return 16 * 2 ** self.n_qubits


def init_state(n: int) -> StateVector:
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")
    amp = np.zeros(2 ** n, dtype=np.complex128)
    amp[0] = 1.0
    return StateVector(n, amp)


def _to_matrix(amp: np.ndarray, n: int, start: int, d: int) -> np.ndarray:
    t = amp.reshape(2 ** (n - start - d), 2 ** d, 2 ** start)
    return t.transpose(0, 2, 1).reshape(2 ** (n - d), 2 ** d)


def _from_matrix(mat: np.ndarray, n: int, start: int, d: int) -> np.ndarray:
    t = mat.reshape(2 ** (n - start - d), 2 ** start, 2 ** d)
    return np.ascontiguousarray(t.transpose(0, 2, 1)).reshape(2 ** n)


def apply_gate(state: StateVector, u, start: int, backend) -> StateVector:
    """Apply the 2**d x 2**d unitary ``u`` to qubits start .. start+d-1."""
    u = np.asarray(u, dtype=np.complex128)
    dim = u.shape[0]
    if u.ndim != 2 or u.shape[1] != dim or dim & (dim - 1) or dim < 2:
        raise ValueError(f"gate must be a 2**d square matrix, got shape {u.shape}")
    d = dim.bit_length() - 1
    n = state.n_qubits
    if not (0 <= start and start + d <= n):
        raise ValueError(f"window [{start}, {start + d}) outside {n} qubits")
    if np.abs(u @ u.conj().T - np.eye(dim)).max() > 1e-10:
        warnings.warn("gate is not unitary to 1e-10", RuntimeWarning, stacklevel=2)
    mat = np.ascontiguousarray(_to_matrix(state.amplitudes, n, start, d))
    out = backend.zgemm(mat, np.ascontiguousarray(u.T))
    return StateVector(n, _from_matrix(np.asarray(out), n, start, d))


@dataclass(frozen=True)
class CircuitSpec:
    n_qubits: int
    gate_qubits: int
    layers: int
    seed: int = 0

    def __post_init__(self):
        d, n = self.gate_qubits, self.n_qubits
        if d < 2 or d % 2:
            raise ValueError("gate width must be even and >= 2")
        if d > n:
            raise ValueError("gate width exceeds qubit count")
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        init_state(n)  # range check

    def windows(self, layer: int) -> list[int]:
        """Gate start qubits: offsets 0 on even layers, d/2 on odd ones."""
        d = self.gate_qubits
        offset = 0 if layer % 2 == 0 else d // 2
        return list(range(offset, self.n_qubits - d + 1, d))

    def gates(self):
        """Yield (layer, start, unitary); gate g uses Philox stream g."""
        g = 0
        for layer in range(self.layers):
            for start in self.windows(layer):
                yield layer, start, haar_unitary(2 ** self.gate_qubits, self.seed, g)
                g += 1


@dataclass
class SimReport:
    backend: str
    amp0_real: float
    splits: list[int] = field(default_factory=list)
    gemm_shapes: list[tuple[int, int, int]] = field(default_factory=list)
    peak_slice_bytes: float = 0.0
    rel_error: Optional[float] = None
    max_norm_drift: float = 0.0

    def splits_histogram(self) -> dict[int, int]:
        return dict(sorted(Counter(self.splits).items()))


def run_brickwork(spec: CircuitSpec, backend, reference=None) -> tuple[StateVector, SimReport]:
    """Run all layers in order with ``backend``.

    ``reference`` may be a finished StateVector or another backend; in the
    latter case the circuit is re-run with it and the relative error of
    Re<0...0|psi> is recorded.
    """
    state = init_state(spec.n_qubits)
    d = spec.gate_qubits
    shape = (2 ** (spec.n_qubits - d), 2 ** d, 2 ** d)
    report = SimReport(getattr(backend, "label", type(backend).__name__), 1.0)
    reports = getattr(backend, "reports", None)
    first = len(reports) if reports is not None else 0
    for _, start, u in spec.gates():
        state = apply_gate(state, u, start, backend)
        report.gemm_shapes.append(shape)
        report.max_norm_drift = max(report.max_norm_drift, abs(state.norm() - 1.0))
    if reports is not None:
        for rep in reports[first:]:
            report.splits.append(rep.splits_used)
            report.peak_slice_bytes = max(report.peak_slice_bytes, rep.slice_bytes)
    report.amp0_real = float(state.amplitudes[0].real)
    if reference is not None:
        if not isinstance(reference, StateVector):
            reference, _ = run_brickwork(spec, reference)
        ref = float(reference.amplitudes[0].real)
        if ref == 0.0:
            report.rel_error = abs(report.amp0_real)
        else:
            report.rel_error = abs(report.amp0_real - ref) / abs(ref)
    return state, report
