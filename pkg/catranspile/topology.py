import dataclasses
import datetime
import json
import logging
import math
import pathlib
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import networkx as nx

from . import errors
from .circuit_ir import SINGLE_QUBIT_UNITARIES, Circuit, GateKind

logger = logging.getLogger(__name__)

PathLike = Union[str, pathlib.Path]
Edge = Tuple[int, int]

DATA_DIR = pathlib.Path(__file__).resolve().parent / "data"


def edge_key(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclasses.dataclass(frozen=True)
class CouplingMap:
    """Undirected device connectivity; cx is native in both orientations of every edge."""

    name: str
    num_qubits: int
    edges: Tuple[Edge, ...]
    graph: nx.Graph = dataclasses.field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise errors.build_schema_error(None, "self-loop on qubit {}".format(u))
            if not (0 <= u < self.num_qubits and 0 <= v < self.num_qubits):
                raise errors.build_schema_error(None, "edge {}-{} out of range".format(u, v))
            key = edge_key(u, v)
            if key in seen:
                raise errors.build_schema_error(None, "duplicate edge {}-{}".format(*key))
            seen.add(key)

        object.__setattr__(self, "edges", tuple(sorted(seen)))

        graph = nx.Graph()
        graph.add_nodes_from(range(self.num_qubits))
        graph.add_edges_from(self.edges)
        object.__setattr__(self, "graph", graph)

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.graph.has_edge(u, v))

    def to_dict(self) -> Dict[str, Any]:
        edges = [list(e) for e in self.edges]
        return {"name": self.name, "num_qubits": self.num_qubits, "edges": edges}


@dataclasses.dataclass(frozen=True)
class CalibrationSnapshot:
    """Per-component fidelities of one calibration cycle (error rates already converted)."""

    timestamp: datetime.datetime
    f_u: Mapping[int, float]
    f_cx: Mapping[Edge, float]
    f_d: Mapping[int, float]


@dataclasses.dataclass(frozen=True)
class DriftPolicy:
    delta: float = 0.01

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ValueError("drift threshold must be positive")


def _read_json(path: PathLike) -> Any:
    try:
        with open(path, encoding="utf-8") as file:
            return json.load(file)
    except json.JSONDecodeError as ex:
        raise errors.build_schema_error(path, "invalid JSON ({})".format(ex)) from None


def coupling_from_dict(data: Any, path: Optional[PathLike] = None) -> CouplingMap:
    try:
        name = str(data["name"])
        num_qubits = int(data["num_qubits"])
        edges = tuple((int(u), int(v)) for u, v in data["edges"])
    except (KeyError, TypeError, ValueError) as ex:
        raise errors.build_schema_error(path, "malformed coupling map ({!r})".format(ex)) from None

    try:
        return CouplingMap(name, num_qubits, edges)
    except errors.SchemaError as ex:
        raise errors.build_schema_error(path, str(ex)) from None


def load_coupling(path: PathLike) -> CouplingMap:
    return coupling_from_dict(_read_json(path), path)


def heavy_hex_27() -> CouplingMap:
    """The bundled 27-qubit heavy-hex coupling map."""
    return load_coupling(DATA_DIR / "heavy_hex_27.json")


def parse_timestamp(text: str) -> datetime.datetime:
    """Parse an ISO 8601 timestamp into an aware UTC datetime; naive times are taken as UTC."""
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    stamp = datetime.datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        return stamp.replace(tzinfo=datetime.timezone.utc)
    return stamp.astimezone(datetime.timezone.utc)


def _fidelity(path: Optional[PathLike], what: str, rate: Any) -> float:
    try:
        value = 1.0 - float(rate)
    except (TypeError, ValueError):
        raise errors.build_schema_error(path, "non-numeric {}".format(what)) from None
    if not 0.0 <= value <= 1.0:
        raise errors.build_schema_error(path, "fidelity of {} out of [0, 1]".format(what))
    return value


def _qubit_rates(
    data: Any, section: str, cmap: CouplingMap, path: Optional[PathLike]
) -> Dict[int, float]:
    raw = data.get(section)
    if not isinstance(raw, dict):
        raise errors.build_schema_error(path, "missing section {!r}".format(section))

    result = {}
    for key, rate in raw.items():
        try:
            qubit = int(key)
        except ValueError:
            raise errors.build_schema_error(path, "bad qubit key {!r}".format(key)) from None
        if not 0 <= qubit < cmap.num_qubits:
            detail = "{} names unknown qubit {}".format(section, qubit)
            raise errors.build_schema_error(path, detail)
        result[qubit] = _fidelity(path, "{} of qubit {}".format(section, qubit), rate)

    for qubit in range(cmap.num_qubits):
        if qubit not in result:
            raise errors.build_schema_error(path, "{} missing qubit {}".format(section, qubit))
    return result


def _edge_rates(data: Any, cmap: CouplingMap, path: Optional[PathLike]) -> Dict[Edge, float]:
    raw = data.get("cx_error")
    if not isinstance(raw, dict):
        raise errors.build_schema_error(path, "missing section 'cx_error'")

    result = {}
    for key, rate in raw.items():
        try:
            u, v = (int(part) for part in str(key).split("-"))
        except ValueError:
            raise errors.build_schema_error(path, "bad edge key {!r}".format(key)) from None
        if not cmap.has_edge(u, v):
            detail = "edge {}-{} is not in the coupling map".format(u, v)
            raise errors.build_schema_error(path, detail)
        result[edge_key(u, v)] = _fidelity(path, "cx_error of edge {}-{}".format(u, v), rate)

    for edge in cmap.edges:
        if edge not in result:
            raise errors.build_schema_error(path, "cx_error missing edge {}-{}".format(*edge))
    return result


def calibration_from_dict(
    data: Any, cmap: CouplingMap, path: Optional[PathLike] = None
) -> CalibrationSnapshot:
    if not isinstance(data, dict):
        raise errors.build_schema_error(path, "calibration must be a JSON object")
    try:
        timestamp = parse_timestamp(str(data["timestamp"]))
    except (KeyError, ValueError):
        raise errors.build_schema_error(path, "missing or malformed timestamp") from None

    return CalibrationSnapshot(
        timestamp=timestamp,
        f_u=_qubit_rates(data, "single_qubit_error", cmap, path),
        f_cx=_edge_rates(data, cmap, path),
        f_d=_qubit_rates(data, "readout_error", cmap, path),
    )


def load_calibration(path: PathLike, cmap: CouplingMap) -> CalibrationSnapshot:
    """
    Load a calibration snapshot for ``cmap`` from ``path``.

    The file stores error *rates* ``e`` (as published by device providers); they are converted to
    fidelities ``1 - e``. Every qubit of ``cmap`` must have a single-qubit and a readout rate and
    every edge must have a cx rate; anything else raises ``SchemaError``.
    """

    return calibration_from_dict(_read_json(path), cmap, path)


def load_calibration_series(directory: PathLike, cmap: CouplingMap) -> List[CalibrationSnapshot]:
    snapshots = []
    for path in sorted(pathlib.Path(directory).glob("*.json")):
        snapshots.append((path.name, load_calibration(path, cmap)))

    snapshots.sort(key=lambda item: (item[1].timestamp, item[0]))
    logger.info("Loaded %d calibration snapshots from %s", len(snapshots), directory)
    return [snap for _, snap in snapshots]


def calibration_to_dict(snapshot: CalibrationSnapshot) -> Dict[str, Any]:
    return {
        "timestamp": snapshot.timestamp.isoformat(),
        "single_qubit_error": {str(q): 1.0 - f for q, f in sorted(snapshot.f_u.items())},
        "cx_error": {"{}-{}".format(u, v): 1.0 - f for (u, v), f in sorted(snapshot.f_cx.items())},
        "readout_error": {str(q): 1.0 - f for q, f in sorted(snapshot.f_d.items())},
    }


def uniform_calibration(
    cmap: CouplingMap,
    f_u: float = 0.999,
    f_cx: float = 0.99,
    f_d: float = 0.98,
    timestamp: Optional[datetime.datetime] = None,
) -> CalibrationSnapshot:
    return CalibrationSnapshot(
        timestamp=timestamp or datetime.datetime(2022, 1, 1, tzinfo=datetime.timezone.utc),
        f_u={q: f_u for q in range(cmap.num_qubits)},
        f_cx={e: f_cx for e in cmap.edges},
        f_d={q: f_d for q in range(cmap.num_qubits)},
    )


def _product(values: Iterable[float]) -> float:
    logs = []
    for value in values:
        if value <= 0.0:
            return 0.0
        logs.append(math.log(value))
    return math.exp(math.fsum(logs))


def get_fidelity(c: Circuit, snapshot: CalibrationSnapshot) -> float:
    """
    Score a circuit on physical qubits by its effective average fidelity.

    The score is the mean of three products: the single-qubit gate fidelities, the cx fidelities
    and the readout fidelities of every gate instance in ``c`` (a component used twice contributes
    twice; an empty product is 1). A swap counts as three cx on its edge. Barriers and resets are
    not scored.
    """

    f_u, f_cx, f_d = [], [], []

    for index, gate in enumerate(c.gates):
        physical = [c.label(q) for q in gate.qubits]

        if gate.kind in (GateKind.CX, GateKind.SWAP):
            key = edge_key(*physical)
            if key not in snapshot.f_cx:
                raise errors.build_connectivity_error(index, physical)
            f_cx.extend([snapshot.f_cx[key]] * (3 if gate.kind == GateKind.SWAP else 1))
            continue

        if gate.kind not in SINGLE_QUBIT_UNITARIES and gate.kind != GateKind.MEASURE:
            continue

        table = snapshot.f_d if gate.kind == GateKind.MEASURE else snapshot.f_u
        if physical[0] not in table:
            raise errors.ConnectivityError(
                "Gate {} acts on unmapped physical qubit {}".format(index, physical[0]), index
            )
        (f_d if gate.kind == GateKind.MEASURE else f_u).append(table[physical[0]])

    return (_product(f_u) + _product(f_cx) + _product(f_d)) / 3


def drift_check(
    c: Circuit,
    baseline: CalibrationSnapshot,
    current: CalibrationSnapshot,
    policy: DriftPolicy = DriftPolicy(),
) -> bool:
    """
    Decide whether ``current`` calibration differs enough from ``baseline`` to re-match ``c``.

    Drift is measured on the deployed circuit's score: re-matching is needed iff the relative
    change of ``get_fidelity`` exceeds ``policy.delta``.
    """

    reference = get_fidelity(c, baseline)
    if reference == 0.0:
        raise errors.DegenerateBaselineError("Baseline fidelity of the deployed circuit is 0")

    change = abs(get_fidelity(c, current) - reference) / reference
    drifted = change > policy.delta
    logger.info("Calibration drift %.4f%% (threshold %.4f%%)", 100 * change, 100 * policy.delta)
    return drifted
