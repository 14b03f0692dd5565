"""
Topology-aware pre-transpilation.

The stage runs once per ansatz and ignores calibration data. Two-qubit structure is grouped into
blocks, the logical qubits are placed onto the coupling map, swaps are inserted between blocks by
an exact depth-minimizing search, swaps made redundant by final measurements are dropped, the
remaining swaps are lowered to cx with boundary cancellation, and idle wires are removed.
"""

import dataclasses
import itertools
import logging
import random
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import networkx as nx
from networkx.algorithms import isomorphism

from . import errors, routing
from .circuit_ir import Circuit, Gate, GateKind, check_valid, compute_metrics
from .do_passes import cx_cancellation
from .topology import CouplingMap, edge_key

logger = logging.getLogger(__name__)

# Logical qubit -> physical qubit
QubitMapping = Dict[int, int]

# Monomorphisms inspected per pattern while looking for one with a connected image
_CONNECTED_SEARCH_LIMIT = 2000


@dataclasses.dataclass(frozen=True)
class Block:
    """
    A group of consecutive gates acting only on one qubit pair.

    ``tag`` is ``"zz"`` for the pattern ``cx(a,b) rz(b) cx(a,b)``, otherwise the kind of the single
    two-qubit gate the block holds (``"cx"`` or ``"swap"``).
    """

    qubits: Tuple[int, int]
    gates: Tuple[Gate, ...]
    tag: str
    gate_indices: Tuple[int, ...]

    @property
    def parameters(self) -> Tuple[str, ...]:
        names: Set[str] = set()
        for gate in self.gates:
            if gate.param is not None:
                names.update(gate.param.free_symbols)
        return tuple(sorted(names))

    @property
    def ends_with_cx(self) -> bool:
        return self.gates[-1].kind == GateKind.CX

    @property
    def diagonal(self) -> bool:
        return self.tag == "zz"


@dataclasses.dataclass(frozen=True)
class TaptConfig:
    cx_max_increase: Optional[float] = None
    time_budget: float = 60.0
    depth_increment: int = 1
    seed: int = 0
    max_retries: int = 20
    region_radius: int = 0

    def __post_init__(self) -> None:
        if self.cx_max_increase is not None and self.cx_max_increase < 0:
            raise ValueError("cx increase bound must be non-negative")
        if not self.time_budget > 0:
            raise ValueError("routing time budget must be positive")
        if self.depth_increment < 1:
            raise ValueError("depth increment must be at least 1")
        if self.max_retries < 1:
            raise ValueError("max_retries must be at least 1")
        if self.region_radius < 0:
            raise ValueError("region radius must be non-negative")


@dataclasses.dataclass(frozen=True)
class RoutedCircuit:
    """
    A circuit over physical qubits together with the placement history.

    ``initial_mapping`` and ``final_mapping`` send logical qubits to physical qubits before and
    after all swaps. ``source`` is the logical circuit the result was routed from.
    """

    circuit: Circuit
    initial_mapping: QubitMapping
    final_mapping: QubitMapping
    status: str
    block_depth: int
    provenance: Dict[str, Any]
    source: Circuit

    def replace(self, **changes: Any) -> "RoutedCircuit":
        return dataclasses.replace(self, **changes)


def _wire_positions(c: Circuit) -> Dict[int, List[int]]:
    positions: Dict[int, List[int]] = {}
    for index, gate in enumerate(c.gates):
        for q in gate.qubits:
            positions.setdefault(q, []).append(index)
    return positions


def _next_on_wire(positions: Dict[int, List[int]], q: int, index: int) -> Optional[int]:
    wire = positions[q]
    at = wire.index(index)
    return wire[at + 1] if at + 1 < len(wire) else None


def partition_blocks(c: Circuit) -> Tuple[List[Block], nx.Graph]:
    """
    Group the two-qubit gates of ``c`` into blocks.

    A cx whose target next sees a single ``rz`` and then the same cx again (with nothing in between
    on the control) forms a ``"zz"`` block; every other two-qubit gate is a block on its own. The
    interaction graph has one node per qubit of ``c`` and an edge per pair sharing a block.
    """

    positions = _wire_positions(c)
    blocks: List[Block] = []
    consumed: Set[int] = set()

    for index, gate in enumerate(c.gates):
        if gate.kind.arity != 2 or index in consumed:
            continue

        a, b = gate.qubits
        indices: Tuple[int, ...] = (index,)
        tag = gate.kind.value

        if gate.kind == GateKind.CX:
            middle = _next_on_wire(positions, b, index)
            close = _next_on_wire(positions, a, index)
            if (
                middle is not None
                and close is not None
                and c.gates[middle].kind == GateKind.RZ
                and _next_on_wire(positions, b, middle) == close
                and c.gates[close] == gate
            ):
                indices = (index, middle, close)
                tag = "zz"

        consumed.update(indices)
        blocks.append(Block((a, b), tuple(c.gates[i] for i in indices), tag, indices))

    graph = nx.Graph()
    graph.add_nodes_from(range(c.num_qubits))
    graph.add_edges_from(block.qubits for block in blocks)
    return blocks, graph


def _target_graph(cmap: CouplingMap, seed: int) -> nx.Graph:
    if seed == 0:
        return cmap.graph

    nodes = list(cmap.graph.nodes)
    random.Random(seed).shuffle(nodes)
    order = {node: i for i, node in enumerate(nodes)}

    graph = nx.Graph()
    graph.add_nodes_from(nodes)
    graph.add_edges_from(sorted(cmap.graph.edges, key=lambda e: sorted(order[v] for v in e)))
    return graph


def _connected_image(target: nx.Graph, placement: QubitMapping) -> bool:
    if not placement:
        return True
    return bool(nx.is_connected(target.subgraph(placement.values())))


def initial_mapping(graph: nx.Graph, cmap: CouplingMap, seed: int = 0) -> QubitMapping:
    """
    Place the logical qubits of the interaction ``graph`` onto ``cmap``.

    When the interaction graph is a subgraph of the coupling map, every interaction edge lands on a
    coupling edge. Otherwise the placement satisfies as many interaction edges as possible: edge
    subsets are tried from largest to smallest and the first one that embeds wins. Among
    embeddings, one whose image is connected is preferred. Seed 0 searches the coupling map in its
    natural vertex order; other seeds search a shuffled order.
    """

    logical = sorted(graph.nodes)
    if len(logical) > cmap.num_qubits:
        raise errors.CapacityError(
            "{} logical qubits do not fit on {} ({} qubits)".format(
                len(logical), cmap.name, cmap.num_qubits
            )
        )
    if not logical:
        return {}

    target = _target_graph(cmap, seed)
    max_degree = max((d for _, d in target.degree), default=0)
    edges = sorted(edge_key(u, v) for u, v in graph.edges)

    for size in range(len(edges), -1, -1):
        fallback: Optional[QubitMapping] = None

        for subset in itertools.combinations(edges, size):
            pattern = nx.Graph()
            pattern.add_nodes_from(logical)
            pattern.add_edges_from(subset)
            if max((d for _, d in pattern.degree), default=0) > max_degree:
                continue

            matcher = isomorphism.GraphMatcher(target, pattern)
            monomorphisms = matcher.subgraph_monomorphisms_iter()
            for mono in itertools.islice(monomorphisms, _CONNECTED_SEARCH_LIMIT):
                placement = {q: p for p, q in mono.items()}
                if _connected_image(target, placement):
                    logger.debug("Placement satisfies %d of %d interactions", size, len(edges))
                    return dict(sorted(placement.items()))
                if fallback is None:
                    fallback = placement

        if fallback is not None:
            logger.debug("Disconnected placement satisfies %d of %d interactions", size, len(edges))
            return dict(sorted(fallback.items()))

    # Unreachable: the empty edge subset always embeds
    raise errors.CapacityError("No placement found on {}".format(cmap.name))


def _region(mapping: QubitMapping, cmap: CouplingMap, radius: int) -> nx.Graph:
    image = sorted(set(mapping.values()))
    component = nx.node_connected_component(cmap.graph, image[0])
    stray = [p for p in image if p not in component]
    if stray:
        raise errors.ConnectivityError(
            "Placement spans disconnected parts of {} (qubits {} and {})".format(
                cmap.name, image[0], stray[0]
            )
        )

    nodes = set(image)
    for p in image:
        nodes.update(nx.single_source_shortest_path_length(cmap.graph, p, cutoff=radius))
    if not nx.is_connected(cmap.graph.subgraph(nodes)):
        for u, v in itertools.combinations(image, 2):
            nodes.update(nx.shortest_path(cmap.graph, u, v))

    return cmap.graph.subgraph(sorted(nodes)).copy()


class _Dependencies:
    """
    Ordering constraints between blocks and the remaining gates.

    Items are blocks and unblocked gates in source order. Two items on a shared qubit are ordered
    unless both are diagonal (zz blocks and rz commute with each other).
    """

    def __init__(self, c: Circuit, blocks: Sequence[Block]) -> None:
        owner = {i: b for b, block in enumerate(blocks) for i in block.gate_indices}
        self.items: List[Tuple[str, int]] = []
        for index, gate in enumerate(c.gates):
            if index not in owner:
                self.items.append(("gate", index))
            elif blocks[owner[index]].gate_indices[0] == index:
                self.items.append(("block", owner[index]))

        def diagonal(item: Tuple[str, int]) -> bool:
            kind, ref = item
            if kind == "block":
                return blocks[ref].diagonal
            return c.gates[ref].kind == GateKind.RZ

        def qubits(item: Tuple[str, int]) -> Tuple[int, ...]:
            kind, ref = item
            return blocks[ref].qubits if kind == "block" else c.gates[ref].qubits

        self.dag = nx.DiGraph()
        self.dag.add_nodes_from(self.items)
        seen: Dict[int, List[Tuple[str, int]]] = {}
        for item in self.items:
            for q in qubits(item):
                for earlier in seen.get(q, []):
                    if not (diagonal(earlier) and diagonal(item)):
                        self.dag.add_edge(earlier, item)
                seen.setdefault(q, []).append(item)

    def precedence(self) -> Tuple[Tuple[int, int], ...]:
        pairs = set()
        for kind, ref in self.items:
            if kind != "block":
                continue
            for before_kind, before in nx.ancestors(self.dag, (kind, ref)):
                if before_kind == "block":
                    pairs.add((before, ref))
        return tuple(sorted(pairs))

    def slots(self, c: Circuit, times: Sequence[int], depth: int) -> Dict[int, int]:
        """Step after which each unblocked gate runs; measurements go last when no block follows."""
        result: Dict[int, int] = {}
        for kind, ref in self.items:
            if kind != "gate":
                continue
            item = (kind, ref)
            slot = 0
            for before_kind, before in self.dag.predecessors(item):
                slot = max(slot, times[before] if before_kind == "block" else result[before])
            if c.gates[ref].kind == GateKind.MEASURE and not any(
                k == "block" for k, _ in nx.descendants(self.dag, item)
            ):
                slot = depth
            result[ref] = slot
        return result


def _physical(gate: Gate, mapping: QubitMapping) -> Gate:
    return gate.on([mapping[q] for q in gate.qubits])


def _emit(
    c: Circuit,
    blocks: Sequence[Block],
    schedule: routing.Schedule,
    deps: _Dependencies,
    cmap: CouplingMap,
) -> Circuit:
    slots = deps.slots(c, schedule.times, schedule.depth)
    by_slot: Dict[int, List[int]] = {}
    for index, slot in sorted(slots.items()):
        by_slot.setdefault(slot, []).append(index)

    gates: List[Gate] = []
    for step in range(1, schedule.depth + 1):
        before = schedule.mappings[step - 1]
        gates.extend(_physical(c.gates[i], before) for i in by_slot.get(step - 1, []))

        for b in schedule.blocks_at(step):
            gates.extend(_physical(g, before) for g in blocks[b].gates)
            if b in schedule.fused:
                pair = [before[q] for q in blocks[b].qubits]
                gates.append(Gate(GateKind.SWAP, tuple(pair)))
        gates.extend(Gate(GateKind.SWAP, edge) for edge in schedule.swaps_at(step))

    last = schedule.mappings[schedule.depth]
    gates.extend(_physical(c.gates[i], last) for i in by_slot.get(schedule.depth, []))

    for index, gate in enumerate(gates):
        if gate.kind.arity == 2 and not cmap.has_edge(*gate.qubits):
            raise errors.build_connectivity_error(index, gate.qubits)

    return Circuit(cmap.num_qubits, tuple(gates), c.num_clbits, c.name)


def route_optimal(
    c: Circuit,
    blocks: Sequence[Block],
    mapping: QubitMapping,
    cmap: CouplingMap,
    cfg: TaptConfig = TaptConfig(),
) -> RoutedCircuit:
    """
    Insert swaps between the blocks of ``c`` so every block runs on a coupling edge.

    The schedule has minimal block-level depth (each block, fused block+swap or swap takes one
    step; operations on disjoint qubits share a step) and, at that depth, the fewest extra cx.
    Routing is confined to the placement's image, grown by ``cfg.region_radius`` and by shortest
    paths if the image is not connected, so both optima hold among schedules that stay inside that
    region. With the default radius of zero a schedule that borrows an idle neighbor could be
    shallower; the provenance key ``"optimal_within"`` says ``"coupling-map"`` only when the region
    is the whole connected component. The returned circuit is over all physical qubits of
    ``cmap``.
    """

    if sorted(mapping) != list(range(c.num_qubits)):
        raise ValueError("mapping must place every logical qubit")
    if len(set(mapping.values())) != len(mapping):
        raise ValueError("mapping must be injective")
    if any(not 0 <= p < cmap.num_qubits for p in mapping.values()):
        raise ValueError("mapping leaves the coupling map")

    if not mapping:
        return RoutedCircuit(
            Circuit(cmap.num_qubits, c.gates, c.num_clbits, c.name),
            {},
            {},
            "optimal",
            0,
            {"status": "optimal", "block_depth": 0, "proven_depth": 0, "swap_cost": 0},
            c,
        )

    region = _region(mapping, cmap, cfg.region_radius)
    component = nx.node_connected_component(cmap.graph, next(iter(mapping.values())))
    whole = set(region.nodes) == component
    deps = _Dependencies(c, blocks)
    problem = routing.RoutingProblem(
        blocks=tuple(block.qubits for block in blocks),
        cheap_fuse=tuple(block.ends_with_cx for block in blocks),
        precedence=deps.precedence(),
        region=region,
        initial=dict(mapping),
    )

    schedule = routing.solve_schedule(problem, cfg.seed, cfg.time_budget, cfg.depth_increment)
    logger.info(
        "Routed %d blocks in %d steps with %d swaps (%s)",
        len(blocks),
        schedule.depth,
        len(schedule.swaps) + len(schedule.fused),
        schedule.status,
    )

    return RoutedCircuit(
        circuit=_emit(c, blocks, schedule, deps, cmap),
        initial_mapping=dict(mapping),
        final_mapping=dict(schedule.mappings[schedule.depth]),
        status=schedule.status,
        block_depth=schedule.depth,
        provenance={
            "status": schedule.status,
            "block_depth": schedule.depth,
            "proven_depth": schedule.proven_depth,
            "swap_cost": schedule.cost,
            "region": sorted(region.nodes),
            "region_radius": cfg.region_radius,
            "optimal_within": "coupling-map" if whole else "region",
            "seed": cfg.seed,
        },
        source=c,
    )


def _only_readout_after(gates: Sequence[Gate], start: int, wires: Tuple[int, ...]) -> bool:
    for gate in gates[start:]:
        if set(gate.qubits).intersection(wires) and gate.kind not in (
            GateKind.MEASURE,
            GateKind.BARRIER,
        ):
            return False
    return True


def elide_final_swaps(rc: RoutedCircuit) -> RoutedCircuit:
    """
    Drop swaps followed only by measurements (and barriers) on both their qubits.

    The measurements after an elided swap read the other wire instead, which exchanges their
    classical targets, and ``final_mapping`` is updated to match. Repeated until no swap qualifies.
    """

    gates = list(rc.circuit.gates)
    final = dict(rc.final_mapping)
    elided = 0

    changed = True
    while changed:
        changed = False
        for index in range(len(gates) - 1, -1, -1):
            gate = gates[index]
            if gate.kind != GateKind.SWAP or not _only_readout_after(gates, index + 1, gate.qubits):
                continue

            a, b = gate.qubits
            exchange = {a: b, b: a}
            for later in range(index + 1, len(gates)):
                moved = [exchange.get(q, q) for q in gates[later].qubits]
                gates[later] = gates[later].on(moved)
            del gates[index]

            final = {q: exchange.get(p, p) for q, p in final.items()}
            elided += 1
            changed = True
            break

    if not elided:
        return rc

    logger.debug("Elided %d final swaps", elided)
    return rc.replace(circuit=rc.circuit.with_gates(gates), final_mapping=final)


def _swap_orientation(gates: Sequence[Gate], index: int) -> Tuple[int, int]:
    a, b = gates[index].qubits

    def neighbor(step: int) -> Optional[Gate]:
        near: Dict[int, int] = {}
        i = index + step
        while 0 <= i < len(gates) and len(near) < 2:
            for q in gates[i].qubits:
                if q in (a, b) and q not in near:
                    near[q] = i
            i += step
        if near.get(a) is not None and near.get(a) == near.get(b):
            return gates[near[a]]
        return None

    for step in (-1, 1):
        gate = neighbor(step)
        if gate is not None and gate.kind == GateKind.CX:
            control, target = gate.qubits
            return control, target

    return min(a, b), max(a, b)


def decompose_and_cancel(rc: RoutedCircuit) -> RoutedCircuit:
    """
    Lower every swap to three cx and cancel adjacent cx pairs.

    Each swap is expanded as ``cx(c,t) cx(t,c) cx(c,t)`` with ``(c, t)`` copied from the cx right
    before it on both its wires if there is one, else from the cx right after it, else with the
    lower physical qubit as control.
    """

    source = list(rc.circuit.gates)
    lowered: List[Gate] = []
    for index, gate in enumerate(source):
        if gate.kind != GateKind.SWAP:
            lowered.append(gate)
            continue
        control, target = _swap_orientation(source, index)
        forward = Gate(GateKind.CX, (control, target))
        lowered.extend([forward, Gate(GateKind.CX, (target, control)), forward])

    circuit = cx_cancellation(rc.circuit.with_gates(lowered))
    return rc.replace(circuit=circuit)


def remove_idle_wires(rc: RoutedCircuit) -> RoutedCircuit:
    """
    Keep only wires touched by a gate other than a barrier.

    Wire ``i`` of the result carries physical qubit ``qubit_labels[i]``. Barriers lose their removed
    wires and vanish if none is left. A circuit with no idle wire is returned unchanged.
    """

    c = rc.circuit
    active = c.active_wires()
    if len(active) == c.num_qubits:
        return rc

    index = {wire: i for i, wire in enumerate(active)}
    gates: List[Gate] = []
    for g in c.gates:
        kept = [index[q] for q in g.qubits if q in index]
        if kept:
            gates.append(g.on(kept))
    compact = Circuit(
        len(active), tuple(gates), c.num_clbits, c.name, tuple(c.label(w) for w in active)
    )
    return rc.replace(circuit=compact)


def _attempt(
    c: Circuit, blocks: List[Block], graph: nx.Graph, cmap: CouplingMap, cfg: TaptConfig
) -> RoutedCircuit:
    mapping = initial_mapping(graph, cmap, cfg.seed)
    rc = route_optimal(c, blocks, mapping, cmap, cfg)
    return remove_idle_wires(decompose_and_cancel(elide_final_swaps(rc)))


def tapt(c: Circuit, cmap: CouplingMap, cfg: TaptConfig = TaptConfig()) -> RoutedCircuit:
    """
    Pre-transpile ``c`` for ``cmap``.

    If ``cfg.cx_max_increase`` is set, a result whose cx count grew by more than that percentage is
    discarded and the whole stage rerun with the next seed, at most ``cfg.max_retries`` times in
    total. ``CxBoundUnsatisfiableError`` carries the attempt with the smallest cx count if none
    qualifies.
    """

    check_valid(c)
    blocks, graph = partition_blocks(c)
    attempts = cfg.max_retries if cfg.cx_max_increase is not None else 1

    best: Optional[Tuple[float, RoutedCircuit]] = None
    for attempt in range(attempts):
        seed = cfg.seed + attempt
        rc = _attempt(c, blocks, graph, cmap, dataclasses.replace(cfg, seed=seed))
        increase = compute_metrics(rc.circuit, c).delta_cx or 0.0
        rc = rc.replace(provenance=dict(rc.provenance, retries=attempt, seed=seed))

        if cfg.cx_max_increase is None or increase <= cfg.cx_max_increase + 1e-9:
            return rc

        logger.info(
            "Attempt %d raised cx by %.2f%% (bound %.2f%%); retrying",
            attempt,
            increase,
            cfg.cx_max_increase,
        )
        if best is None or increase < best[0]:
            best = (increase, rc)

    assert best is not None
    raise errors.CxBoundUnsatisfiableError(
        "No attempt kept the cx increase within {:.2f}% (best {:.2f}%)".format(
            cfg.cx_max_increase, best[0]
        ),
        best[1],
    )
