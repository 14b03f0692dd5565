import functools
import itertools
import math
import random
from typing import (
    Any,
    Callable,
    Dict,
    FrozenSet,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
)

import networkx as nx
import numpy as np
from hypothesis import strategies as st

from catranspile.circuit_ir import Circuit, Gate, GateKind, ParameterExpr, make_gate
from catranspile.routing import SWAP_COST

_MATRICES = {
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
    GateKind.H: np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    GateKind.SX: np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex) / 2,
}


def _one_qubit(gate: Gate) -> np.ndarray:
    if gate.kind in _MATRICES:
        return _MATRICES[gate.kind]
    theta = gate.angle
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    if gate.kind == GateKind.RZ:
        return np.diag([complex(c, -s), complex(c, s)])
    if gate.kind == GateKind.RX:
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if gate.kind == GateKind.RY:
        return np.array([[c, -s], [s, c]], dtype=complex)
    raise ValueError(gate.kind)


def _projector(bit: int) -> np.ndarray:
    proj = np.zeros((2, 2), dtype=complex)
    proj[bit, bit] = 1
    return proj


def _embed(ops: Mapping[int, np.ndarray], n: int) -> np.ndarray:
    result = np.eye(1, dtype=complex)
    for q in range(n):
        result = np.kron(result, ops.get(q, np.eye(2, dtype=complex)))
    return result


def unitary(c: Circuit) -> np.ndarray:
    """Unitary of the gates of ``c`` by Kronecker products (qubit 0 most significant)."""
    n = c.num_qubits
    total = np.eye(2 ** n, dtype=complex)
    x = _MATRICES[GateKind.X]

    for gate in c.gates:
        if gate.kind in (GateKind.MEASURE, GateKind.BARRIER):
            continue
        if gate.kind == GateKind.CX:
            a, b = gate.qubits
            op = _embed({a: _projector(0)}, n) + _embed({a: _projector(1), b: x}, n)
        elif gate.kind == GateKind.SWAP:
            a, b = gate.qubits
            op = sum(
                _embed({a: _ket_bra(i, j), b: _ket_bra(j, i)}, n)
                for i in range(2)
                for j in range(2)
            )
        else:
            op = _embed({gate.qubits[0]: _one_qubit(gate)}, n)
        total = op @ total

    return total


def _ket_bra(i: int, j: int) -> np.ndarray:
    out = np.zeros((2, 2), dtype=complex)
    out[i, j] = 1
    return out


def statevector(c: Circuit) -> np.ndarray:
    psi = np.zeros(2 ** c.num_qubits, dtype=complex)
    psi[0] = 1
    return unitary(c) @ psi


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> bool:
    index = int(np.argmax(np.abs(b)))
    if abs(b.flat[index]) < tol:
        return bool(np.allclose(a, b, atol=tol))
    phase = a.flat[index] / b.flat[index]
    return bool(abs(abs(phase) - 1) < tol and np.allclose(a, phase * b, atol=tol))


def total_variation(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    keys = set(p) | set(q)
    return sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys) / 2


def asap_depth(c: Circuit) -> int:
    """Depth by explicit layer assignment; a barrier aligns the wires it spans."""
    layers: List[Set[int]] = []
    floor = [0] * c.num_qubits

    def after_last(q: int) -> int:
        for i in range(len(layers) - 1, floor[q] - 1, -1):
            if q in layers[i]:
                return i + 1
        return floor[q]

    for gate in c.gates:
        if gate.kind == GateKind.BARRIER:
            cut = max(after_last(q) for q in gate.qubits)
            for q in gate.qubits:
                floor[q] = cut
            continue
        level = max(after_last(q) for q in gate.qubits)
        if level == len(layers):
            layers.append(set())
        layers[level].update(gate.qubits)
    return len(layers)


def zz_block(a: int, b: int, angle: float = 0.7) -> List[Gate]:
    return [make_gate("cx", a, b), make_gate("rz", b, param=angle), make_gate("cx", a, b)]


def brute_force_depth(
    blocks: Sequence[Tuple[int, int]],
    precedence: Sequence[Tuple[int, int]],
    region: nx.Graph,
    initial: Mapping[int, int],
    limit: int = 6,
) -> Optional[int]:
    """Smallest number of steps that executes every block."""
    found = brute_force_optimum(blocks, (True,) * len(blocks), precedence, region, initial, limit)
    return None if found is None else found[0]


def brute_force_optimum(
    blocks: Sequence[Tuple[int, int]],
    cheap_fuse: Sequence[bool],
    precedence: Sequence[Tuple[int, int]],
    region: nx.Graph,
    initial: Mapping[int, int],
    limit: int = 6,
) -> Optional[Tuple[int, int]]:
    """
    Smallest number of steps that executes every block and the smallest swap cost at that depth,
    by a layered search over states keeping the cheapest way to reach each one.

    Each step runs any set of vertex-disjoint operations: an adjacent ready block, the same block
    followed by a swap of its qubits, or a swap on a region edge.
    """

    preds: Dict[int, Set[int]] = {b: set() for b in range(len(blocks))}
    for i, j in precedence:
        preds[j].add(i)
    edges = [tuple(sorted(e)) for e in region.edges]

    frontier: Dict[_State, int] = {(tuple(sorted(initial.items())), frozenset()): 0}

    for depth in range(limit + 1):
        finished = [cost for (_, done), cost in frontier.items() if len(done) == len(blocks)]
        if finished:
            return depth, min(finished)

        following: Dict[_State, int] = {}
        for (mapping_items, done), cost in frontier.items():
            mapping = dict(mapping_items)
            for nxt, extra in _successors(blocks, cheap_fuse, preds, edges, mapping, done):
                if cost + extra < following.get(nxt, cost + extra + 1):
                    following[nxt] = cost + extra
        frontier = following

    return None


# (kind, block index or -1 for a swap, physical edge)
_Op = Tuple[str, int, Tuple[int, ...]]
_State = Tuple[Tuple[Tuple[int, int], ...], FrozenSet[int]]


def _successors(
    blocks: Sequence[Tuple[int, int]],
    cheap_fuse: Sequence[bool],
    preds: Mapping[int, Set[int]],
    edges: Sequence[Tuple[int, ...]],
    mapping: Dict[int, int],
    done: FrozenSet[int],
) -> Iterator[Tuple[_State, int]]:
    ops: List[_Op] = []
    for b, (qa, qb) in enumerate(blocks):
        if b in done or not preds[b] <= done:
            continue
        pair = tuple(sorted((mapping[qa], mapping[qb])))
        if pair in edges:
            ops.append(("block", b, pair))
            ops.append(("fused", b, pair))
    ops.extend(("swap", -1, edge) for edge in edges)

    def choose(start: int, used: FrozenSet[int]) -> Iterator[List[_Op]]:
        for i in range(start, len(ops)):
            if used.isdisjoint(ops[i][2]):
                yield [ops[i]]
                for rest in choose(i + 1, used | frozenset(ops[i][2])):
                    yield [ops[i]] + rest

    occupant = {p: q for q, p in mapping.items()}
    for chosen in choose(0, frozenset()):
        moved = dict(occupant)
        for kind, _, (u, v) in chosen:
            if kind == "block":
                continue
            moved.pop(u, None)
            moved.pop(v, None)
            if u in occupant:
                moved[v] = occupant[u]
            if v in occupant:
                moved[u] = occupant[v]
        new_mapping = tuple(sorted((q, p) for p, q in moved.items()))
        block_ids = frozenset(b for kind, b, _ in chosen if kind != "swap")
        cost = sum(
            SWAP_COST if kind == "swap" else 1 if cheap_fuse[b] else SWAP_COST
            for kind, b, _ in chosen
            if kind != "block"
        )
        yield (new_mapping, done | block_ids), cost


def best_satisfied_edges(pattern: nx.Graph, target: nx.Graph) -> int:
    """Most pattern edges landing on target edges over all injective placements."""
    nodes = sorted(pattern.nodes)
    best = 0
    for image in itertools.permutations(sorted(target.nodes), len(nodes)):
        placement = dict(zip(nodes, image))
        hits = sum(1 for u, v in pattern.edges if target.has_edge(placement[u], placement[v]))
        best = max(best, hits)
    return best


def satisfied_edges(pattern: nx.Graph, target: nx.Graph, placement: Mapping[int, int]) -> int:
    return sum(1 for u, v in pattern.edges if target.has_edge(placement[u], placement[v]))


def count_monomorphisms(pattern: nx.Graph, target: nx.Graph) -> int:
    """Backtracking count of injective maps sending every pattern edge onto a target edge."""
    order = list(nx.dfs_preorder_nodes(pattern)) if pattern.number_of_nodes() else []
    for node in sorted(pattern.nodes):
        if node not in order:
            order.append(node)

    @functools.lru_cache(maxsize=None)
    def extend(assigned: Tuple[int, ...]) -> int:
        if len(assigned) == len(order):
            return 1
        node = order[len(assigned)]
        total = 0
        for candidate in target.nodes:
            if candidate in assigned:
                continue
            if all(
                target.has_edge(candidate, assigned[order.index(other)])
                for other in pattern.neighbors(node)
                if order.index(other) < len(assigned)
            ):
                total += extend(assigned + (candidate,))
        return total

    return extend(())


_ONE_QUBIT = ("x", "sx", "h", "rx", "ry", "rz")


def random_circuit(
    seed: int, num_qubits: int, size: int, two_qubit_share: float = 0.4, measure: bool = True
) -> Circuit:
    """A bound circuit of ``size`` random gates, optionally followed by a measure on every qubit."""
    rng = random.Random(seed)
    gates = []
    for _ in range(size):
        if num_qubits > 1 and rng.random() < two_qubit_share:
            a, b = rng.sample(range(num_qubits), 2)
            gates.append(make_gate(rng.choice(("cx", "cx", "swap")), a, b))
            continue
        kind = rng.choice(_ONE_QUBIT)
        q = rng.randrange(num_qubits)
        param = rng.uniform(-math.pi, math.pi) if GateKind(kind).parameterized else None
        gates.append(make_gate(kind, q, param=param))

    clbits = num_qubits if measure else 0
    if measure:
        gates.extend(make_gate("measure", q, clbit=q) for q in range(num_qubits))
    return Circuit(num_qubits, tuple(gates), clbits, "random_{}".format(seed))


@st.composite
def circuits(draw: Callable[..., Any], max_qubits: int = 5, max_gates: int = 20) -> Circuit:
    """Valid circuits over the whole gate vocabulary, with literal and symbolic angles."""
    n = draw(st.integers(1, max_qubits))
    angles = st.one_of(
        st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False).map(ParameterExpr.literal),
        st.builds(
            lambda name, coeff, const: ParameterExpr.symbol(name, coeff) + const,
            st.sampled_from(["theta", "gamma_1", "beta_1", "θ", "γ_1", "π", "pi_", "Ω"]),
            st.floats(-4.0, 4.0, allow_nan=False, allow_infinity=False).filter(bool),
            st.floats(-4.0, 4.0, allow_nan=False, allow_infinity=False),
        ),
    )

    gates = []
    for _ in range(draw(st.integers(0, max_gates))):
        kind = draw(st.sampled_from([k for k in GateKind if k != GateKind.MEASURE]))
        if kind.arity == 2 and n < 2:
            continue
        width = draw(st.integers(1, n)) if kind.arity is None else kind.arity
        qubits = draw(st.permutations(range(n)))[:width]
        param = draw(angles) if kind.parameterized else None
        gates.append(Gate(kind, tuple(qubits), param))

    clbits = draw(st.integers(0, n))
    for c in range(clbits):
        gates.append(Gate(GateKind.MEASURE, (draw(st.integers(0, n - 1)),), clbit=c))
    return Circuit(n, tuple(gates), clbits, draw(st.sampled_from(["c", "qaoa_x"])))
