import cmath
import dataclasses
import logging
import math
import random
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import errors
from .circuit_ir import (
    Circuit,
    Gate,
    GateKind,
    Number,
    ParameterExpr,
    bind_parameters,
    compute_metrics,
    normalize_angle,
)
from .noise_sim import gate_matrix

logger = logging.getLogger(__name__)

BASIS = frozenset(
    [
        GateKind.RZ,
        GateKind.SX,
        GateKind.X,
        GateKind.CX,
        GateKind.MEASURE,
        GateKind.BARRIER,
        GateKind.RESET,
    ]
)

PASS_ORDER = (
    "decompose",
    "optimize_1q",
    "commutative_cancellation",
    "cx_cancellation",
    "remove_diagonal_before_measure",
    "remove_reset_in_zero_state",
)

_MAX_ROUNDS = 100


@dataclasses.dataclass(frozen=True)
class PassConfig:
    repetitions: int = 15
    pass_order: Tuple[str, ...] = PASS_ORDER
    angle_tolerance: float = 1e-9
    seed: int = 0

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if not self.angle_tolerance > 0:
            raise ValueError("angle tolerance must be positive")
        unknown = [name for name in self.pass_order if name not in PASS_ORDER]
        if unknown:
            raise ValueError("unknown passes {}".format(unknown))


def _rz(q: int, angle: Union[Number, ParameterExpr]) -> Gate:
    param = angle if isinstance(angle, ParameterExpr) else ParameterExpr.literal(angle)
    return Gate(GateKind.RZ, (q,), param)


def _sx(q: int) -> Gate:
    return Gate(GateKind.SX, (q,))


def _cx(a: int, b: int) -> Gate:
    return Gate(GateKind.CX, (a, b))


def decompose_to_basis(c: Circuit) -> Circuit:
    """
    Lower every gate to ``{rz, sx, x, cx, measure, barrier, reset}``.

    The identities used (equal up to global phase, listed in circuit order):

    - ``h`` → ``rz(π/2) sx rz(π/2)``
    - ``rx(θ)`` → ``rz(π/2) sx rz(θ + π) sx rz(π/2)``
    - ``ry(θ)`` → ``sx rz(θ + π) sx rz(π)``
    - ``swap(a, b)`` → ``cx(a, b) cx(b, a) cx(a, b)``

    Every lowering is affine in the rotation angle, so symbolic angles survive lowering.
    """

    half_pi = math.pi / 2
    gates: List[Gate] = []

    for gate in c.gates:
        kind = gate.kind
        if kind in BASIS:
            gates.append(gate)
            continue

        q = gate.qubits[0]
        if kind == GateKind.H:
            gates.extend([_rz(q, half_pi), _sx(q), _rz(q, half_pi)])
        elif kind == GateKind.RX:
            assert gate.param is not None
            gates.extend(
                [_rz(q, half_pi), _sx(q), _rz(q, gate.param + math.pi), _sx(q), _rz(q, half_pi)]
            )
        elif kind == GateKind.RY:
            assert gate.param is not None
            gates.extend([_sx(q), _rz(q, gate.param + math.pi), _sx(q), _rz(q, math.pi)])
        elif kind == GateKind.SWAP:
            a, b = gate.qubits
            gates.extend([_cx(a, b), _cx(b, a), _cx(a, b)])
        else:  # pragma: no cover
            raise AssertionError(kind)

    return c.with_gates(gates)


def _equal_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float = 1e-8) -> bool:
    index = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    if abs(a[index]) < tol:
        return False
    phase = b[index] / a[index]
    return bool(np.allclose(a * phase, b, atol=tol))


def _run_matrix(gates: Sequence[Gate]) -> np.ndarray:
    matrix = np.eye(2, dtype=complex)
    for gate in gates:
        matrix = gate_matrix(gate) @ matrix
    return matrix


def _candidates(matrix: np.ndarray, q: int, tol: float) -> List[List[Gate]]:
    def rz(angle: float) -> List[Gate]:
        angle = normalize_angle(angle)
        return [] if abs(angle) <= tol else [_rz(q, angle)]

    u00, u01, u10, u11 = matrix[0, 0], matrix[0, 1], matrix[1, 0], matrix[1, 1]

    if abs(u01) <= tol and abs(u10) <= tol:
        return [rz(cmath.phase(u11) - cmath.phase(u00))]

    theta = 2 * math.atan2(abs(u10), abs(u00))
    phase = cmath.phase(u00) if abs(u00) > tol else cmath.phase(u10)
    phi = cmath.phase(u10) - phase
    lam = cmath.phase(-u01) - phase

    found = []
    if abs(theta - math.pi) <= tol:
        found.append([Gate(GateKind.X, (q,))] + rz(phi - lam + math.pi))
    if abs(theta - math.pi / 2) <= tol:
        found.append(rz(lam - math.pi / 2) + [_sx(q)] + rz(phi + math.pi / 2))
    found.append(rz(lam) + [_sx(q)] + rz(theta + math.pi) + [_sx(q)] + rz(phi + math.pi))
    return found


def _resynthesize(run: List[Gate], q: int, tol: float) -> List[Gate]:
    if not run:
        return run

    matrix = _run_matrix(run)
    for candidate in sorted(_candidates(matrix, q, tol), key=len):
        if len(candidate) >= len(run):
            break
        if not candidate:
            if _equal_up_to_phase(np.eye(2, dtype=complex), matrix):
                return candidate
            continue
        if _equal_up_to_phase(_run_matrix(candidate), matrix):
            return candidate
    return run


def _require_bound(c: Circuit) -> None:
    if not c.is_bound:
        raise errors.UnboundParameterError(c.free_symbols[0])


def optimize_1q(c: Circuit, tol: float = 1e-9) -> Circuit:
    """
    Collapse every maximal run of single-qubit basis gates on one wire.

    A run is replaced by the shortest equivalent form among nothing, ``rz``, ``x rz``,
    ``rz sx rz`` and ``rz sx rz sx rz`` (angles within ``tol`` of zero dropped), and only when that
    form is strictly shorter than the run.
    """

    _require_bound(c)

    out: List[Gate] = []
    pending: Dict[int, List[Gate]] = {}

    def flush(q: int) -> None:
        out.extend(_resynthesize(pending.pop(q, []), q, tol))

    for gate in c.gates:
        if gate.kind in (GateKind.RZ, GateKind.SX, GateKind.X):
            pending.setdefault(gate.qubits[0], []).append(gate)
            continue
        for q in gate.qubits:
            flush(q)
        out.append(gate)

    for q in sorted(pending):
        flush(q)

    return c.with_gates(out)


def _z_like(gate: Gate, q: int) -> bool:
    return gate.kind == GateKind.RZ or (gate.kind == GateKind.CX and gate.qubits[0] == q)


def _x_like(gate: Gate, q: int) -> bool:
    if gate.kind in (GateKind.X, GateKind.SX, GateKind.RX):
        return True
    return gate.kind == GateKind.CX and gate.qubits[1] == q


def commutes(g: Gate, h: Gate) -> bool:
    """Conservative commutation check: ``True`` only when ``g`` and ``h`` provably commute."""
    shared = set(g.qubits).intersection(h.qubits)
    if not shared:
        return True
    if not (g.kind.unitary and h.kind.unitary):
        return False
    return all(
        (_z_like(g, q) and _z_like(h, q)) or (_x_like(g, q) and _x_like(h, q)) for q in shared
    )


def _combine(g: Gate, h: Gate, tol: float) -> Optional[List[Gate]]:
    """What ``g`` followed (possibly after commuting) by ``h`` reduces to, or ``None``."""
    if g.qubits != h.qubits:
        return None
    if g.kind == h.kind and g.kind in (GateKind.CX, GateKind.X):
        return []
    if g.kind == h.kind == GateKind.SX:
        return [Gate(GateKind.X, g.qubits)]
    if g.kind == h.kind == GateKind.RZ:
        assert g.param is not None and h.param is not None
        total = g.param + h.param
        if total.is_bound:
            angle = normalize_angle(total.constant)
            return [] if abs(angle) <= tol else [_rz(g.qubits[0], angle)]
        return [Gate(GateKind.RZ, g.qubits, total)]
    return None


def commutative_cancellation(c: Circuit, seed: int = 0, tol: float = 1e-9) -> Circuit:
    """
    Cancel or merge gate pairs that become adjacent after commuting through intermediate gates.

    ``rz`` and cx controls commute; ``x``, ``sx`` and cx targets commute. Pairs of identical cx or
    x vanish, ``rz`` pairs merge, ``sx`` pairs become ``x``. ``seed`` only changes the order in
    which candidate gates are examined (seed 0 scans front to back); the loop always runs until
    no candidate pair is left.
    """

    gates: List[Optional[Gate]] = list(c.gates)
    rng = random.Random(seed)

    changed = True
    while changed:
        changed = False
        order = list(range(len(gates)))
        if seed:
            rng.shuffle(order)

        for i in order:
            g = gates[i]
            if g is None or g.kind not in (GateKind.CX, GateKind.X, GateKind.SX, GateKind.RZ):
                continue

            for j in range(i + 1, len(gates)):
                h = gates[j]
                if h is None or not set(g.qubits).intersection(h.qubits):
                    continue
                merged = _combine(g, h, tol)
                if merged is not None:
                    gates[i] = None
                    gates[j] = merged[0] if merged else None
                    changed = True
                    break
                if not commutes(g, h):
                    break

        gates = [g for g in gates if g is not None]

    return c.with_gates(g for g in gates if g is not None)


def cx_cancellation(c: Circuit) -> Circuit:
    """Remove pairs of identical cx with nothing in between on either wire, to fixpoint."""
    out: List[Optional[Gate]] = []
    stacks: Dict[int, List[int]] = {}

    for gate in c.gates:
        if gate.kind == GateKind.CX:
            a, b = gate.qubits
            stack_a, stack_b = stacks.get(a), stacks.get(b)
            if stack_a and stack_b and stack_a[-1] == stack_b[-1] and out[stack_a[-1]] == gate:
                out[stack_a[-1]] = None
                stacks[a].pop()
                stacks[b].pop()
                continue

        out.append(gate)
        for q in gate.qubits:
            stacks.setdefault(q, []).append(len(out) - 1)

    return c.with_gates(g for g in out if g is not None)


def _is_rz(gate: Optional[Gate]) -> bool:
    return gate is not None and gate.kind == GateKind.RZ


def remove_diagonal_before_measure(c: Circuit) -> Circuit:
    """Drop ``rz`` gates whose only successor on their wire is a measurement."""
    out: List[Optional[Gate]] = []
    stacks: Dict[int, List[int]] = {}

    for gate in c.gates:
        if gate.kind == GateKind.MEASURE:
            stack = stacks.get(gate.qubits[0], [])
            while stack and _is_rz(out[stack[-1]]):
                out[stack.pop()] = None

        out.append(gate)
        for q in gate.qubits:
            stacks.setdefault(q, []).append(len(out) - 1)

    return c.with_gates(g for g in out if g is not None)


def remove_reset_in_zero_state(c: Circuit) -> Circuit:
    """Drop resets that act on a wire no gate has touched yet (barriers do not count)."""
    touched = set()
    out = []

    for gate in c.gates:
        if gate.kind == GateKind.RESET and gate.qubits[0] not in touched:
            continue
        if gate.kind != GateKind.BARRIER:
            touched.update(gate.qubits)
        out.append(gate)

    return c.with_gates(out)


def _passes(cfg: PassConfig, seed: int) -> Dict[str, Callable[[Circuit], Circuit]]:
    tol = cfg.angle_tolerance
    return {
        "decompose": decompose_to_basis,
        "optimize_1q": lambda c: optimize_1q(c, tol),
        "commutative_cancellation": lambda c: commutative_cancellation(c, seed, tol),
        "cx_cancellation": cx_cancellation,
        "remove_diagonal_before_measure": remove_diagonal_before_measure,
        "remove_reset_in_zero_state": remove_reset_in_zero_state,
    }


def run_passes(c: Circuit, cfg: PassConfig = PassConfig(), seed: int = 0) -> Circuit:
    passes = _passes(cfg, seed)

    for _ in range(_MAX_ROUNDS):
        before = c.gates
        for name in cfg.pass_order:
            c = passes[name](c)
        if c.gates == before:
            break

    return c


def do_pipeline(
    c: Circuit, binding: Mapping[str, Number], cfg: PassConfig = PassConfig()
) -> Circuit:
    """
    Bind ``c`` and lower it to the native basis with the fewest cx gates found.

    The pass list runs to a fixpoint ``cfg.repetitions`` times, each repetition with its own seed
    for the commutation scan order. The candidate with the fewest cx wins; ties go to fewer gates,
    then lower depth, then the earlier repetition.
    """

    bound = bind_parameters(c, binding)

    best: Optional[Tuple[Tuple[int, int, int, int], Circuit]] = None
    for rep in range(cfg.repetitions):
        candidate = run_passes(bound, cfg, cfg.seed + rep)
        metrics = compute_metrics(candidate)
        key = (metrics.cx_count, metrics.size, metrics.depth, rep)
        if best is None or key < best[0]:
            best = (key, candidate)

    assert best is not None
    logger.debug("Selected optimization candidate %d (cx=%d)", best[0][3], best[0][0])
    return best[1]
