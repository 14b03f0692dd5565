"""
Noise-aware matching.

A pre-transpiled circuit only depends on the shape of the coupling subgraph it occupies, so it can
be moved onto any other copy of that shape by relabeling its physical qubits. Matching scores such
relabelings against the current calibration and keeps the best one.
"""

import dataclasses
import itertools
import logging
import random
from typing import Any, Dict, Iterator, List, Optional

import networkx as nx
from networkx.algorithms import isomorphism

from .circuit_ir import Circuit, GateKind
from .tapt import RoutedCircuit, remove_idle_wires
from .topology import CalibrationSnapshot, CouplingMap, get_fidelity

logger = logging.getLogger(__name__)

# Physical qubit of the routed circuit -> physical qubit it is moved to
Placement = Dict[int, int]


@dataclasses.dataclass(frozen=True)
class NamConfig:
    trials: int = 15
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trial count must be at least 1")


@dataclasses.dataclass(frozen=True)
class MatchResult:
    """
    Outcome of matching: the placement kept, its score and cx count, the trial that produced it
    (``None`` for the identity placement) and one log record per trial.
    """

    assignment: Placement
    score: float
    cx_count: int
    trial: Optional[int]
    log: List[Dict[str, Any]]
    circuit: Circuit

    def apply(self, rc: RoutedCircuit) -> RoutedCircuit:
        """Move ``rc`` onto the chosen placement, keeping its mappings consistent."""
        move = self.assignment
        return rc.replace(
            circuit=self.circuit,
            initial_mapping={q: move.get(p, p) for q, p in rc.initial_mapping.items()},
            final_mapping={q: move.get(p, p) for q, p in rc.final_mapping.items()},
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "assignment": {str(k): v for k, v in sorted(self.assignment.items())},
            "score": self.score,
            "cx_count": self.cx_count,
            "trial": self.trial,
            "trials": self.log,
        }


def active_subgraph(c: Circuit) -> nx.Graph:
    """The physical qubits ``c`` acts on, joined by the pairs its two-qubit gates use."""
    graph = nx.Graph()
    graph.add_nodes_from(c.label(w) for w in c.active_wires())
    for gate in c.gates:
        if gate.kind.arity == 2:
            graph.add_edge(*(c.label(q) for q in gate.qubits))
    return graph


def enumerate_placements(
    pqc: RoutedCircuit, cmap: CouplingMap, seed: int = 0
) -> Iterator[Placement]:
    """
    Yield every monomorphism of the circuit's active subgraph into ``cmap`` exactly once.

    The monomorphisms are collected, sorted canonically and shuffled with ``seed``, so the order is
    reproducible and differs between seeds.
    """

    pattern = active_subgraph(pqc.circuit)
    nodes = sorted(pattern.nodes)

    matcher = isomorphism.GraphMatcher(cmap.graph, pattern)
    found = [
        {q: p for p, q in mono.items()} for mono in matcher.subgraph_monomorphisms_iter()
    ]
    found.sort(key=lambda placement: [placement[v] for v in nodes])
    random.Random(seed).shuffle(found)

    logger.debug("Active subgraph on %d qubits has %d placements", len(nodes), len(found))
    for placement in found:
        yield dict(sorted(placement.items()))


def _cx_count(c: Circuit) -> int:
    return sum(1 for g in c.gates if g.kind == GateKind.CX)


def nam(
    pqc: RoutedCircuit,
    cmap: CouplingMap,
    snapshot: CalibrationSnapshot,
    cfg: NamConfig = NamConfig(),
) -> MatchResult:
    """
    Re-place ``pqc`` onto the copy of its subgraph with the best effective fidelity.

    The identity placement starts as incumbent. Each of up to ``cfg.trials`` placements replaces
    it only if its cx count is not higher and its score is strictly higher; ties keep the
    incumbent. Since trials are pure relabelings the cx check always passes. Idle wires are
    removed before matching.
    """

    circuit = remove_idle_wires(pqc).circuit
    nodes = sorted(active_subgraph(circuit).nodes)
    best = MatchResult(
        assignment={v: v for v in nodes},
        score=get_fidelity(circuit, snapshot),
        cx_count=_cx_count(circuit),
        trial=None,
        log=[],
        circuit=circuit,
    )
    log = []

    placements = enumerate_placements(pqc, cmap, cfg.seed)
    for trial, placement in enumerate(itertools.islice(placements, cfg.trials)):
        moved = circuit.relabel({p: placement.get(p, p) for p in circuit.labels})
        score = get_fidelity(moved, snapshot)
        cx_count = _cx_count(moved)
        log.append(
            {
                "trial": trial,
                "placement": [placement[v] for v in nodes],
                "score": score,
                "cx_count": cx_count,
            }
        )

        if cx_count <= best.cx_count and score > best.score:
            logger.debug("Trial %d improves fidelity %.6f -> %.6f", trial, best.score, score)
            best = MatchResult(placement, score, cx_count, trial, [], moved)

    logger.info("Matching kept trial %s with fidelity %.6f", best.trial, best.score)
    return dataclasses.replace(best, log=log)
