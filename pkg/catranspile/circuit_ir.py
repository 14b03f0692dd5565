import dataclasses
import enum
import math
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from . import errors

Number = Union[int, float]


class GateKind(enum.Enum):
    X = "x"
    SX = "sx"
    H = "h"
    RX = "rx"
    RY = "ry"
    RZ = "rz"
    CX = "cx"
    SWAP = "swap"
    MEASURE = "measure"
    BARRIER = "barrier"
    RESET = "reset"

    @property
    def arity(self) -> Optional[int]:
        """Number of qubits, or ``None`` for ``barrier``, which spans any nonzero number."""
        if self == GateKind.BARRIER:
            return None
        return 2 if self in (GateKind.CX, GateKind.SWAP) else 1

    @property
    def parameterized(self) -> bool:
        return self in (GateKind.RX, GateKind.RY, GateKind.RZ)

    @property
    def unitary(self) -> bool:
        return self not in (GateKind.MEASURE, GateKind.BARRIER, GateKind.RESET)


SINGLE_QUBIT_UNITARIES = frozenset(
    [GateKind.X, GateKind.SX, GateKind.H, GateKind.RX, GateKind.RY, GateKind.RZ]
)


def normalize_angle(angle: float) -> float:
    """Reduce ``angle`` modulo 2π into the half-open interval (−π, π]."""
    reduced = math.remainder(angle, 2 * math.pi)
    if reduced <= -math.pi:
        reduced += 2 * math.pi
    return reduced


def check_symbol(name: str) -> None:
    if not isinstance(name, str) or not name.isidentifier():
        raise errors.InvalidSymbolError(str(name), "not an identifier")
    if name == "pi":
        raise errors.InvalidSymbolError(name, "reserved for the constant")


@dataclasses.dataclass(frozen=True)
class ParameterExpr:
    """
    A linear angle expression ``c_1*θ_1 + ... + c_k*θ_k + d``.

    ``terms`` is kept sorted by symbol name with zero coefficients dropped, so two expressions that
    denote the same linear form compare equal. Symbol names are identifiers other than ``pi``,
    which always denotes the constant.
    """

    terms: Tuple[Tuple[str, float], ...] = ()
    constant: float = 0.0

    def __post_init__(self) -> None:
        merged: Dict[str, float] = {}
        for name, coeff in self.terms:
            check_symbol(name)
            merged[name] = merged.get(name, 0.0) + float(coeff)

        object.__setattr__(
            self, "terms", tuple(sorted((n, c) for n, c in merged.items() if c != 0.0))
        )
        object.__setattr__(self, "constant", float(self.constant))

    @classmethod
    def literal(cls, value: Number) -> "ParameterExpr":
        return cls((), float(value))

    @classmethod
    def symbol(cls, name: str, coeff: Number = 1.0) -> "ParameterExpr":
        return cls(((name, float(coeff)),), 0.0)

    @property
    def is_bound(self) -> bool:
        return not self.terms

    @property
    def free_symbols(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.terms)

    def value(self) -> float:
        if self.terms:
            raise errors.UnboundParameterError(self.terms[0][0])
        return self.constant

    def evaluate(self, binding: Mapping[str, Number]) -> float:
        total = self.constant
        for name, coeff in self.terms:
            if name not in binding:
                raise errors.UnboundParameterError(name)
            total += coeff * float(binding[name])
        return total

    def __add__(self, other: Union["ParameterExpr", Number]) -> "ParameterExpr":
        if not isinstance(other, ParameterExpr):
            return ParameterExpr(self.terms, self.constant + float(other))
        return ParameterExpr(self.terms + other.terms, self.constant + other.constant)

    __radd__ = __add__

    def __neg__(self) -> "ParameterExpr":
        return self.scale(-1.0)

    def __sub__(self, other: Union["ParameterExpr", Number]) -> "ParameterExpr":
        return self + (-other)

    def scale(self, factor: Number) -> "ParameterExpr":
        return ParameterExpr(
            tuple((n, c * float(factor)) for n, c in self.terms), self.constant * float(factor)
        )

    def __str__(self) -> str:
        parts = ["{!r}*{}".format(c, n) for n, c in self.terms]
        if self.constant != 0.0 or not parts:
            parts.append(repr(self.constant))
        return " + ".join(parts)


def as_expr(param: Union[ParameterExpr, Number]) -> ParameterExpr:
    if isinstance(param, ParameterExpr):
        return param
    return ParameterExpr.literal(param)


@dataclasses.dataclass(frozen=True)
class Gate:
    kind: GateKind
    qubits: Tuple[int, ...]
    param: Optional[ParameterExpr] = None
    clbit: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if self.param is not None and not isinstance(self.param, ParameterExpr):
            object.__setattr__(self, "param", as_expr(self.param))

    @property
    def angle(self) -> float:
        assert self.param is not None
        return self.param.value()

    def on(self, qubits: Sequence[int]) -> "Gate":
        return dataclasses.replace(self, qubits=tuple(qubits))

    def __str__(self) -> str:
        text = self.kind.value
        if self.param is not None:
            text += "({})".format(self.param)
        text += " " + ",".join(str(q) for q in self.qubits)
        if self.clbit is not None:
            text += " -> c{}".format(self.clbit)
        return text


def make_gate(
    kind: Union[GateKind, str],
    *qubits: int,
    param: Union[ParameterExpr, Number, None] = None,
    clbit: Optional[int] = None,
) -> Gate:
    if isinstance(kind, str):
        kind = GateKind(kind)
    return Gate(kind, tuple(qubits), None if param is None else as_expr(param), clbit)


@dataclasses.dataclass(frozen=True)
class Circuit:
    """
    An ordered gate list over ``num_qubits`` wires.

    Wire ``i`` of a routed circuit stands for physical qubit ``qubit_labels[i]``; logical circuits
    leave ``qubit_labels`` as ``None`` and wire ``i`` is simply qubit ``i``.
    """

    num_qubits: int
    gates: Tuple[Gate, ...] = ()
    num_clbits: int = 0
    name: str = "circuit"
    qubit_labels: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.qubit_labels is not None:
            object.__setattr__(self, "qubit_labels", tuple(self.qubit_labels))

    def label(self, wire: int) -> int:
        return wire if self.qubit_labels is None else self.qubit_labels[wire]

    @property
    def labels(self) -> Tuple[int, ...]:
        if self.qubit_labels is None:
            return tuple(range(self.num_qubits))
        return self.qubit_labels

    @property
    def free_symbols(self) -> Tuple[str, ...]:
        names = set()
        for gate in self.gates:
            if gate.param is not None:
                names.update(gate.param.free_symbols)
        return tuple(sorted(names))

    @property
    def is_bound(self) -> bool:
        return not self.free_symbols

    def with_gates(self, gates: Iterable[Gate]) -> "Circuit":
        return dataclasses.replace(self, gates=tuple(gates))

    def relabel(self, placement: Mapping[int, int]) -> "Circuit":
        return dataclasses.replace(self, qubit_labels=tuple(placement[q] for q in self.labels))

    def active_wires(self) -> List[int]:
        return sorted({q for g in self.gates if g.kind != GateKind.BARRIER for q in g.qubits})


@dataclasses.dataclass(frozen=True)
class CircuitMetrics:
    depth: int
    size: int
    cx_count: int
    measure_count: int
    delta_depth: Optional[float] = None
    delta_size: Optional[float] = None
    delta_cx: Optional[float] = None

    def to_dict(self) -> Dict[str, Optional[Number]]:
        return dataclasses.asdict(self)


def validate(c: Circuit) -> List[str]:
    """
    Check the structural invariants of ``c`` and return a list of violations.

    Each violation is a string of the form ``"<kind> at gate <index>"`` (followed by a short
    detail); an empty list means the circuit is well-formed.
    """

    violations = []
    measured = set()

    for index, gate in enumerate(c.gates):
        where = "at gate {}".format(index)

        if gate.kind.arity is None:
            if not gate.qubits:
                violations.append(
                    "arity-mismatch {} ({} expects at least 1 qubit)".format(where, gate.kind.value)
                )
        elif len(gate.qubits) != gate.kind.arity:
            violations.append(
                "arity-mismatch {} ({} expects {} qubits)".format(
                    where, gate.kind.value, gate.kind.arity
                )
            )
        if len(set(gate.qubits)) != len(gate.qubits):
            violations.append("duplicate-qubit {}".format(where))

        bad = [q for q in gate.qubits if not 0 <= q < c.num_qubits]
        if bad:
            violations.append("index-out-of-range {} (qubit {})".format(where, bad[0]))

        if gate.kind.parameterized != (gate.param is not None):
            violations.append("parameter-mismatch {}".format(where))

        if gate.kind == GateKind.MEASURE:
            if gate.clbit is None or not 0 <= gate.clbit < c.num_clbits:
                violations.append("clbit-out-of-range {}".format(where))
        elif gate.clbit is not None:
            violations.append("unexpected-clbit {}".format(where))

        if gate.kind == GateKind.MEASURE:
            measured.update(gate.qubits)
        elif gate.kind == GateKind.RESET:
            measured.difference_update(gate.qubits)
        elif gate.kind != GateKind.BARRIER and measured.intersection(gate.qubits):
            violations.append("gate-after-measure {}".format(where))

    return violations


def check_valid(c: Circuit) -> None:
    violations = validate(c)
    if violations:
        raise errors.build_validation_error(violations)


def circuit_depth(c: Circuit) -> int:
    levels = [0] * c.num_qubits
    for gate in c.gates:
        if gate.kind == GateKind.BARRIER:
            # A barrier aligns the wires it spans at their latest frontier
            cut = max((levels[q] for q in gate.qubits), default=0)
            for q in gate.qubits:
                levels[q] = cut
            continue

        layer = max(levels[q] for q in gate.qubits) + 1
        for q in gate.qubits:
            levels[q] = layer

    return max(levels, default=0)


def percent_change(after: Number, before: Number) -> Optional[float]:
    if before <= 0:
        return None
    return 100.0 * (after - before) / before


def compute_metrics(c: Circuit, reference: Optional[Circuit] = None) -> CircuitMetrics:
    """
    Compute depth, gate count, cx count and measure count of ``c``.

    Barriers contribute nothing to the gate count but force a layer boundary across all wires;
    measures count both as gates and as a layer. If ``reference`` is given, the percentage
    changes ``100 * (x - x_ref) / x_ref`` are filled in for every metric whose reference value is
    positive.
    """

    check_valid(c)

    size = sum(1 for g in c.gates if g.kind != GateKind.BARRIER)
    cx_count = sum(1 for g in c.gates if g.kind == GateKind.CX)
    measure_count = sum(1 for g in c.gates if g.kind == GateKind.MEASURE)
    depth = circuit_depth(c)

    if reference is None:
        return CircuitMetrics(depth, size, cx_count, measure_count)

    ref = compute_metrics(reference)
    return CircuitMetrics(
        depth,
        size,
        cx_count,
        measure_count,
        delta_depth=percent_change(depth, ref.depth),
        delta_size=percent_change(size, ref.size),
        delta_cx=percent_change(cx_count, ref.cx_count),
    )


def bind_parameters(c: Circuit, binding: Mapping[str, Number]) -> Circuit:
    """
    Substitute every free symbol of ``c`` using ``binding``.

    The result has only literal angles, each normalized to (−π, π]. Symbols present in
    ``binding`` but absent from ``c`` are ignored; a symbol of ``c`` missing from ``binding``
    raises ``UnboundParameterError``.
    """

    gates = []
    for gate in c.gates:
        if gate.param is not None:
            value = normalize_angle(gate.param.evaluate(binding))
            gate = dataclasses.replace(gate, param=ParameterExpr.literal(value))
        gates.append(gate)

    return c.with_gates(gates)
