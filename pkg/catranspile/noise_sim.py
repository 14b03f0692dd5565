import dataclasses
import itertools
import json
import logging
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import errors
from .circuit_ir import Circuit, Gate, GateKind

logger = logging.getLogger(__name__)

MAX_QUBITS = 12

TOLERANCE = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
SX = np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex) / 2
CX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)

CHANNEL_KINDS = ("none", "bit_flip", "bit_phase_flip", "depolarizing")
PLACEMENTS = ("acted", "layer", "two_qubit")


def rz_matrix(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex)


def rx_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


_FIXED = {GateKind.X: X, GateKind.SX: SX, GateKind.H: H, GateKind.CX: CX, GateKind.SWAP: SWAP}
_ROTATIONS = {GateKind.RZ: rz_matrix, GateKind.RX: rx_matrix, GateKind.RY: ry_matrix}


def gate_matrix(gate: Gate) -> np.ndarray:
    """Return the unitary of a bound gate; the first listed qubit is the most significant."""
    if gate.kind in _FIXED:
        return _FIXED[gate.kind]
    if gate.kind in _ROTATIONS:
        assert gate.param is not None
        if not gate.param.is_bound:
            raise errors.SimulationError(
                "Gate {} has unbound parameters {}".format(gate, gate.param.free_symbols)
            )
        return _ROTATIONS[gate.kind](gate.param.constant)
    raise errors.SimulationError("{} is not a unitary gate".format(gate.kind.value))


@dataclasses.dataclass(frozen=True)
class NoiseChannel:
    """
    A single-qubit error channel applied with rate ``rate``.

    ``placement`` selects where the channel acts: ``"acted"`` after every unitary gate on each qubit
    it touched, ``"layer"`` on every qubit after each layer of the ASAP schedule, and
    ``"two_qubit"`` only after two-qubit gates on their qubits.
    """

    kind: str = "none"
    rate: float = 0.0
    placement: str = "acted"

    def __post_init__(self) -> None:
        if self.kind not in CHANNEL_KINDS:
            raise ValueError("unknown channel kind {!r}".format(self.kind))
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("channel rate must lie in [0, 1]")
        if self.placement not in PLACEMENTS:
            raise ValueError("unknown channel placement {!r}".format(self.placement))

    @property
    def is_identity(self) -> bool:
        return self.kind == "none" or self.rate == 0.0

    def kraus_weights(self) -> List[Tuple[float, np.ndarray]]:
        lam = self.rate
        if self.kind == "bit_flip":
            return [(1 - lam, I2), (lam, X)]
        if self.kind == "bit_phase_flip":
            return [(1 - lam, I2), (lam, Y)]
        if self.kind == "depolarizing":
            return [(1 - 3 * lam / 4, I2), (lam / 4, X), (lam / 4, Y), (lam / 4, Z)]
        return [(1.0, I2)]


NOISELESS = NoiseChannel()


@dataclasses.dataclass(frozen=True)
class DensityMatrix:
    num_qubits: int
    data: np.ndarray = dataclasses.field(compare=False)

    @classmethod
    def zero_state(cls, num_qubits: int) -> "DensityMatrix":
        data = np.zeros((2 ** num_qubits, 2 ** num_qubits), dtype=complex)
        data[0, 0] = 1.0
        return cls(num_qubits, data)

    @classmethod
    def from_statevector(cls, psi: Sequence[complex]) -> "DensityMatrix":
        vec = np.asarray(psi, dtype=complex)
        num_qubits = int(round(np.log2(len(vec))))
        return cls(num_qubits, np.outer(vec, vec.conj()))

    def violations(self, tol: float = TOLERANCE) -> List[str]:
        dim = 2 ** self.num_qubits
        if self.data.shape != (dim, dim):
            return ["shape {} does not match {} qubits".format(self.data.shape, self.num_qubits)]

        found = []
        if np.max(np.abs(self.data - self.data.conj().T)) > tol:
            found.append("not Hermitian")
        if abs(np.trace(self.data) - 1.0) > tol:
            found.append("trace {} differs from 1".format(np.trace(self.data).real))
        if not found and np.min(np.linalg.eigvalsh(self.data)) < -tol:
            found.append("not positive semidefinite")
        return found

    def probabilities(self) -> np.ndarray:
        return np.clip(np.real(np.diag(self.data)), 0.0, None)


def _apply_unitary(
    data: np.ndarray, matrix: np.ndarray, qubits: Sequence[int], n: int
) -> np.ndarray:
    k = len(qubits)
    tensor = data.reshape([2] * (2 * n))
    u = matrix.reshape([2] * (2 * k))
    inputs = list(range(k, 2 * k))

    tensor = np.tensordot(u, tensor, axes=(inputs, list(qubits)))
    tensor = np.moveaxis(tensor, list(range(k)), list(qubits))

    cols = [n + q for q in qubits]
    tensor = np.tensordot(tensor, u.conj(), axes=(cols, inputs))
    tensor = np.moveaxis(tensor, list(range(2 * n - k, 2 * n)), cols)

    return tensor.reshape(2 ** n, 2 ** n)


def _reset(data: np.ndarray, qubit: int, n: int) -> np.ndarray:
    k0 = np.array([[1, 0], [0, 0]], dtype=complex)
    k1 = np.array([[0, 1], [0, 0]], dtype=complex)
    return _apply_unitary(data, k0, [qubit], n) + _apply_unitary(data, k1, [qubit], n)


def apply_gate(rho: DensityMatrix, gate: Gate) -> DensityMatrix:
    """Apply a bound gate by conjugation; ``reset`` is applied as its two-Kraus channel."""
    if gate.kind == GateKind.BARRIER:
        return rho
    if gate.kind == GateKind.RESET:
        return DensityMatrix(rho.num_qubits, _reset(rho.data, gate.qubits[0], rho.num_qubits))
    if gate.kind == GateKind.MEASURE:
        raise errors.SimulationError("Measurements are handled by simulate()")

    matrix = gate_matrix(gate)
    data = _apply_unitary(rho.data, matrix, gate.qubits, rho.num_qubits)
    return DensityMatrix(rho.num_qubits, data)


def apply_channel(rho: DensityMatrix, channel: NoiseChannel, qubit: int) -> DensityMatrix:
    """
    Apply ``channel`` to one qubit of ``rho``.

    The bit-flip channel is ``λ XρX + (1 − λ)ρ``, the bit-phase-flip channel
    ``λ YρY + (1 − λ)ρ``, and the depolarizing channel
    ``(λ/4)(XρX + YρY + ZρZ) + (1 − 3λ/4)ρ``.
    """

    if channel.is_identity:
        return rho

    total = np.zeros_like(rho.data)
    for weight, pauli in channel.kraus_weights():
        if weight == 0.0:
            continue
        if pauli is I2:
            total += weight * rho.data
        else:
            total += weight * _apply_unitary(rho.data, pauli, [qubit], rho.num_qubits)
    return DensityMatrix(rho.num_qubits, total)


@dataclasses.dataclass(frozen=True)
class SimulationResult:
    density: DensityMatrix
    distribution: Dict[str, float]


def _layers(gates: Sequence[Gate], num_qubits: int) -> List[int]:
    levels = [0] * num_qubits
    result = []
    for gate in gates:
        if gate.kind == GateKind.BARRIER:
            cut = max((levels[q] for q in gate.qubits), default=0)
            for q in gate.qubits:
                levels[q] = cut
            result.append(cut)
            continue
        layer = max(levels[q] for q in gate.qubits) + 1
        for q in gate.qubits:
            levels[q] = layer
        result.append(layer)
    return result


def _distribution(
    probs: np.ndarray, readout: Mapping[int, int], num_qubits: int, num_clbits: int
) -> Dict[str, float]:
    result: Dict[str, float] = {}
    for index, p in enumerate(probs):
        if p <= 0.0:
            continue
        bits = [(index >> (num_qubits - 1 - q)) & 1 for q in range(num_qubits)]
        if num_clbits:
            clbits = ["0"] * num_clbits
            for c, q in readout.items():
                clbits[c] = str(bits[q])
            key = "".join(clbits)
        else:
            key = "".join(str(b) for b in bits)
        result[key] = result.get(key, 0.0) + float(p)
    return dict(sorted(result.items()))


def simulate(c: Circuit, channel: NoiseChannel = NOISELESS) -> SimulationResult:
    """
    Run a bound circuit on the density-matrix simulator.

    After each operation selected by ``channel.placement`` the channel is applied. Measurements
    must be terminal on their qubit; the returned density matrix is the pre-measurement state and
    the distribution maps classical bitstrings (classical bit 0 leftmost) to probabilities. A
    circuit without classical bits reports the distribution over all qubits (qubit 0 leftmost).
    """

    if c.num_qubits > MAX_QUBITS:
        raise errors.SimulationError(
            "{} qubits exceed the simulator limit of {}".format(c.num_qubits, MAX_QUBITS)
        )
    if not c.is_bound:
        raise errors.SimulationError("Circuit has unbound parameters {}".format(c.free_symbols))

    n = c.num_qubits
    rho = DensityMatrix.zero_state(n)
    # Source index, qubit and classical bit of every measurement
    measures: List[Tuple[int, int, int]] = []

    per_layer = channel.placement == "layer"
    layers = _layers(c.gates, n)
    order = sorted(range(len(c.gates)), key=lambda i: (layers[i], i)) if per_layer else None

    for _, group in itertools.groupby(
        order if per_layer else range(len(c.gates)),
        key=lambda i: layers[i] if per_layer else i,
    ):
        touched = False
        for index in group:
            gate = c.gates[index]
            if gate.kind == GateKind.MEASURE:
                assert gate.clbit is not None
                measures.append((index, gate.qubits[0], gate.clbit))
                continue
            if gate.kind != GateKind.BARRIER and any(
                q == m for _, m, _ in measures for q in gate.qubits
            ):
                raise errors.SimulationError(
                    "Mid-circuit measurement is not supported: {}".format(gate)
                )

            rho = apply_gate(rho, gate)
            if not gate.kind.unitary:
                continue
            touched = True
            if per_layer or (channel.placement == "two_qubit" and len(gate.qubits) < 2):
                continue
            for q in gate.qubits:
                rho = apply_channel(rho, channel, q)

        if per_layer and touched:
            for q in range(n):
                rho = apply_channel(rho, channel, q)

    # A qubit may be read into several classical bits; a bit written twice keeps the last value
    readout = {clbit: q for _, q, clbit in sorted(measures)}
    return SimulationResult(rho, _distribution(rho.probabilities(), readout, n, c.num_clbits))


def state_fidelity(rho1: DensityMatrix, rho2: DensityMatrix) -> float:
    """
    Return the state fidelity ``(Tr sqrt(sqrt(ρ1) ρ2 sqrt(ρ1)))**2`` of two density matrices.

    If either state is pure (purity within ``TOLERANCE`` of 1) the fidelity is ``Tr(ρ1 ρ2)``,
    which equals ``<ψ|ρ|ψ>``. Otherwise square roots come from Hermitian eigendecompositions
    with negative eigenvalues clipped to 0. The result is clipped to ``[0, 1]``.
    """

    if rho1.num_qubits != rho2.num_qubits:
        raise errors.SimulationError("Density matrices have different dimensions")
    for rho in (rho1, rho2):
        found = rho.violations()
        if found:
            raise errors.SimulationError("Invalid density matrix: {}".format(", ".join(found)))

    if any(abs(np.real(np.trace(rho.data @ rho.data)) - 1.0) <= TOLERANCE for rho in (rho1, rho2)):
        value = float(np.real(np.trace(rho1.data @ rho2.data)))
        return min(max(value, 0.0), 1.0)

    evals, evecs = np.linalg.eigh(rho1.data)
    sqrt1 = (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.conj().T
    inner = np.linalg.eigvalsh(sqrt1 @ rho2.data @ sqrt1)
    value = float(np.sum(np.sqrt(np.clip(inner, 0.0, None))) ** 2)
    return min(max(value, 0.0), 1.0)


def sample_counts(distribution: Mapping[str, float], shots: int, seed: int = 0) -> Dict[str, int]:
    """Draw ``shots`` samples from ``distribution``; the result depends only on ``seed``."""
    if shots < 1:
        raise ValueError("shots must be at least 1")

    keys = sorted(distribution)
    probs = np.array([distribution[k] for k in keys], dtype=float)
    probs = probs / probs.sum()

    rng = np.random.default_rng(seed)
    draws = rng.multinomial(shots, probs)
    return {k: int(n) for k, n in zip(keys, draws) if n}


def counts_to_json(
    counts: Mapping[str, int], metadata: Optional[Mapping[str, object]] = None
) -> str:
    payload = {"counts": dict(sorted(counts.items())), "shots": sum(counts.values())}
    if metadata:
        payload.update(metadata)
    return json.dumps(payload, indent=2, sort_keys=True)
