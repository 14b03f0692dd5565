# pylint: disable=too-few-public-methods
from typing import Any, Dict, List, Optional, Sequence


class TranspileError(Exception):
    """
    Base class for every error raised by ``catranspile``.

    ``code`` is a stable machine-readable identifier and ``exit_status`` is the process exit code
    used by the command-line front-end when the error escapes a command.
    """

    code = "transpile-error"
    exit_status = 1

    def to_record(self) -> Dict[str, Any]:
        return {"error": self.code, "message": str(self)}


class CircuitValidationError(TranspileError, ValueError):
    code = "invalid-circuit"
    exit_status = 2

    def __init__(self, violations: Sequence[str]) -> None:
        super().__init__("; ".join(violations))
        self.violations = list(violations)

    def to_record(self) -> Dict[str, Any]:
        return {"error": self.code, "message": str(self), "violations": self.violations}


class UnboundParameterError(TranspileError, ValueError):
    code = "unbound-parameter"
    exit_status = 3

    def __init__(self, symbol: str) -> None:
        super().__init__("Unbound parameter {!r}".format(symbol))
        self.symbol = symbol


class QasmSyntaxError(TranspileError, ValueError):
    code = "qasm-syntax"
    exit_status = 4

    def __init__(self, message: str, span: Any) -> None:
        super().__init__("{} at line {}, column {}".format(message, span.line, span.column))
        self.span = span

    def to_record(self) -> Dict[str, Any]:
        return {
            "error": self.code,
            "message": str(self),
            "line": self.span.line,
            "column": self.span.column,
            "offset": self.span.offset,
        }


class SchemaError(TranspileError, ValueError):
    code = "schema"
    exit_status = 5


class ConnectivityError(TranspileError, ValueError):
    code = "connectivity"
    exit_status = 6

    def __init__(self, message: str, gate_index: Optional[int] = None) -> None:
        super().__init__(message)
        self.gate_index = gate_index


class CapacityError(TranspileError, ValueError):
    code = "capacity"
    exit_status = 7


class RoutingFailureError(TranspileError, RuntimeError):
    code = "routing-failure"
    exit_status = 8


class CxBoundUnsatisfiableError(TranspileError, RuntimeError):
    code = "cx-bound-unsatisfiable"
    exit_status = 9

    def __init__(self, message: str, best_attempt: Any) -> None:
        super().__init__(message)
        self.best_attempt = best_attempt


class DegenerateBaselineError(TranspileError, ZeroDivisionError):
    code = "degenerate-baseline"
    exit_status = 10


class SimulationError(TranspileError, ValueError):
    code = "simulation"
    exit_status = 11


class GridSearchError(TranspileError, ValueError):
    code = "grid-search"
    exit_status = 12


class InvalidArgumentError(TranspileError, ValueError):
    code = "invalid-argument"
    exit_status = 14


class InvalidSymbolError(TranspileError, ValueError):
    code = "invalid-symbol"
    exit_status = 15

    def __init__(self, symbol: str, reason: str) -> None:
        super().__init__("Invalid parameter symbol {!r}: {}".format(symbol, reason))
        self.symbol = symbol


def build_validation_error(violations: List[str]) -> CircuitValidationError:
    return CircuitValidationError(violations)


def build_connectivity_error(index: int, qubits: Sequence[int]) -> ConnectivityError:
    return ConnectivityError(
        "Gate {} acts on physical qubits {} which are not coupled".format(index, tuple(qubits)),
        index,
    )


def build_schema_error(path: Any, detail: str) -> SchemaError:
    if path is None:
        return SchemaError(detail)
    return SchemaError("{}: {}".format(path, detail))
