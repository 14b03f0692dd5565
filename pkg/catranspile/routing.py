"""
Block-level swap scheduling on a region of the coupling graph.

A schedule is a sequence of time steps. In each step a set of operations on pairwise disjoint
physical qubits runs: a block (its two logical qubits must sit on adjacent physical qubits), a block
immediately followed by a swap of the same two qubits (a "fused" swap), or a standalone swap of an
edge. Depth is the number of steps; the secondary cost counts the extra cx gates swaps introduce.
"""

import dataclasses
import itertools
import logging
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple

import networkx as nx
import z3

from . import errors

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]
_Solution = Tuple[Tuple[int, ...], FrozenSet[int], List[Tuple[int, Edge]]]

SWAP_COST = 3


@dataclasses.dataclass(frozen=True)
class RoutingProblem:
    """
    ``blocks[i]`` is the logical qubit pair of block ``i``; ``cheap_fuse[i]`` says whether a swap
    fused onto block ``i`` costs one extra cx (the block ends in a cx that cancels) rather than
    three. ``precedence`` lists ``(i, j)`` pairs where block ``i`` must run before block ``j``.
    """

    blocks: Tuple[Tuple[int, int], ...]
    cheap_fuse: Tuple[bool, ...]
    precedence: Tuple[Tuple[int, int], ...]
    region: nx.Graph
    initial: Mapping[int, int]

    def fuse_cost(self, block: int) -> int:
        return 1 if self.cheap_fuse[block] else SWAP_COST

    def conflicts(self) -> List[Tuple[int, int]]:
        ordered = set(self.precedence)
        found = []
        for i, j in itertools.combinations(range(len(self.blocks)), 2):
            if (i, j) in ordered or (j, i) in ordered:
                continue
            if set(self.blocks[i]).intersection(self.blocks[j]):
                found.append((i, j))
        return found


@dataclasses.dataclass(frozen=True)
class Schedule:
    depth: int
    times: Tuple[int, ...]
    fused: FrozenSet[int]
    swaps: Tuple[Tuple[int, Edge], ...]
    mappings: Tuple[Dict[int, int], ...]
    cost: int
    status: str
    proven_depth: Optional[int]

    def blocks_at(self, step: int) -> List[int]:
        return [b for b, t in enumerate(self.times) if t == step]

    def swaps_at(self, step: int) -> List[Edge]:
        return [edge for t, edge in self.swaps if t == step]


def lower_bound(problem: RoutingProblem) -> int:
    if not problem.blocks:
        return 0

    per_qubit: Dict[int, int] = {}
    for pair in problem.blocks:
        for q in pair:
            per_qubit[q] = per_qubit.get(q, 0) + 1

    dag = nx.DiGraph()
    dag.add_nodes_from(range(len(problem.blocks)))
    dag.add_edges_from(problem.precedence)
    chain = nx.dag_longest_path_length(dag) + 1

    return max(max(per_qubit.values()), chain)


def replay(
    problem: RoutingProblem,
    times: Sequence[int],
    fused: FrozenSet[int],
    swaps: Sequence[Tuple[int, Edge]],
    depth: int,
) -> Tuple[Dict[int, int], ...]:
    """Apply a schedule step by step, checking it, and return the mapping after every step."""
    mapping = dict(problem.initial)
    history = [dict(mapping)]
    done: Set[int] = set()

    for step in range(1, depth + 1):
        busy: Set[int] = set()
        occupant = {p: q for q, p in mapping.items()}

        for block in (b for b, t in enumerate(times) if t == step):
            a, b = problem.blocks[block]
            pa, pb = mapping[a], mapping[b]
            if not problem.region.has_edge(pa, pb):
                detail = "Block {} is not adjacent at step {}".format(block, step)
                raise errors.RoutingFailureError(detail)
            if busy.intersection((pa, pb)):
                raise errors.RoutingFailureError("Overlapping operations at step {}".format(step))
            if any(i not in done for i, j in problem.precedence if j == block):
                raise errors.RoutingFailureError("Block {} runs before a predecessor".format(block))
            busy.update((pa, pb))
            if block in fused:
                occupant[pa], occupant[pb] = b, a

        for t, (u, v) in swaps:
            if t != step:
                continue
            if busy.intersection((u, v)) or not problem.region.has_edge(u, v):
                raise errors.RoutingFailureError("Invalid swap {}-{} at step {}".format(u, v, step))
            busy.update((u, v))
            qu, qv = occupant.get(u), occupant.get(v)
            occupant.pop(u, None)
            occupant.pop(v, None)
            if qu is not None:
                occupant[v] = qu
            if qv is not None:
                occupant[u] = qv

        done.update(b for b, t in enumerate(times) if t == step)
        mapping = {q: p for p, q in occupant.items()}
        history.append(dict(mapping))

    if len(done) != len(problem.blocks):
        raise errors.RoutingFailureError("Schedule leaves blocks unexecuted")
    return tuple(history)


def _cost(problem: RoutingProblem, fused: FrozenSet[int], swaps: Sequence[Tuple[int, Edge]]) -> int:
    return sum(problem.fuse_cost(b) for b in fused) + SWAP_COST * len(swaps)


def heuristic_schedule(problem: RoutingProblem) -> Schedule:
    """
    Greedy nearest-neighbor schedule.

    Every step runs all ready blocks whose qubits are adjacent (in block order, skipping blocks
    that would overlap). When none can run, the first ready block's first qubit is swapped one
    edge along a shortest path toward its partner.
    """

    mapping = dict(problem.initial)
    times = [0] * len(problem.blocks)
    swaps: List[Tuple[int, Edge]] = []
    preds: Dict[int, Set[int]] = {b: set() for b in range(len(problem.blocks))}
    for i, j in problem.precedence:
        preds[j].add(i)

    done: Set[int] = set()
    step = 0
    while len(done) < len(problem.blocks):
        step += 1
        ready = [b for b in range(len(problem.blocks)) if b not in done and preds[b] <= done]

        busy: Set[int] = set()
        ran = []
        for block in ready:
            pa, pb = (mapping[q] for q in problem.blocks[block])
            if problem.region.has_edge(pa, pb) and not busy.intersection((pa, pb)):
                busy.update((pa, pb))
                ran.append(block)

        if ran:
            for block in ran:
                times[block] = step
            done.update(ran)
            continue

        a, b = problem.blocks[ready[0]]
        try:
            path = nx.shortest_path(problem.region, mapping[a], mapping[b])
        except nx.NetworkXNoPath:
            raise errors.RoutingFailureError(
                "Block {} joins physical qubits {} and {}, which the region does not "
                "connect".format(ready[0], mapping[a], mapping[b])
            ) from None
        u, v = path[0], path[1]
        occupant = {p: q for q, p in mapping.items()}
        if v in occupant:
            mapping[occupant[v]] = u
        mapping[a] = v
        swaps.append((step, (min(u, v), max(u, v))))

    fused: FrozenSet[int] = frozenset()
    mappings = replay(problem, times, fused, swaps, step)
    return Schedule(
        depth=step,
        times=tuple(times),
        fused=fused,
        swaps=tuple(swaps),
        mappings=mappings,
        cost=_cost(problem, fused, swaps),
        status="heuristic-fallback",
        proven_depth=None,
    )


class _Encoding:
    """Constraint model of all schedules with exactly ``depth`` steps."""

    def __init__(self, problem: RoutingProblem, depth: int, ctx: z3.Context) -> None:
        self.problem = problem
        self.depth = depth
        self.ctx = ctx

        self.vertices = sorted(problem.region.nodes)
        self.edges = sorted((min(u, v), max(u, v)) for u, v in problem.region.edges)
        self.qubits = sorted(problem.initial)

        self.pi = {
            q: [z3.Int("map_q{}_t{}".format(q, t), ctx) for t in range(depth + 1)]
            for q in self.qubits
        }
        self.time = [z3.Int("time_b{}".format(b), ctx) for b in range(len(problem.blocks))]
        self.fuse = [z3.Bool("fuse_b{}".format(b), ctx) for b in range(len(problem.blocks))]
        self.swap = {
            e: [z3.Bool("swap_e{}_{}_t{}".format(e[0], e[1], t), ctx) for t in range(depth + 1)]
            for e in self.edges
        }

        # Tie-break order of the canonical schedule after the block times
        self.swap_keys = [(t, e) for t in range(1, depth + 1) for e in self.edges]
        self.flags = self.fuse + [self.swap[e][t] for t, e in self.swap_keys]

    def _adjacent(self, x: z3.ArithRef, y: z3.ArithRef) -> z3.BoolRef:
        if not self.edges:
            return z3.BoolVal(False, self.ctx)
        return z3.Or(
            [z3.Or(z3.And(x == u, y == v), z3.And(x == v, y == u)) for u, v in self.edges]
        )

    def constraints(self) -> List[z3.BoolRef]:
        problem, depth, pi = self.problem, self.depth, self.pi
        found: List[z3.BoolRef] = []

        for q in self.qubits:
            found.append(pi[q][0] == problem.initial[q])
            for t in range(1, depth + 1):
                found.append(z3.Or([pi[q][t] == v for v in self.vertices]))
        for t in range(depth + 1):
            if len(self.qubits) > 1:
                found.append(z3.Distinct([pi[q][t] for q in self.qubits]))

        for b, (qa, qb) in enumerate(problem.blocks):
            found.append(z3.And(self.time[b] >= 1, self.time[b] <= depth))
            for t in range(1, depth + 1):
                found.append(
                    z3.Implies(self.time[b] == t, self._adjacent(pi[qa][t - 1], pi[qb][t - 1]))
                )

        for i, j in problem.precedence:
            found.append(self.time[i] < self.time[j])
        for i, j in problem.conflicts():
            found.append(self.time[i] != self.time[j])

        for t in range(1, depth + 1):
            found.extend(self._step_exclusivity(t))
            found.extend(self._transitions(t))

        # Swaps at step 0 do not exist
        found.extend(z3.Not(self.swap[e][0]) for e in self.edges)
        return found

    def _step_exclusivity(self, t: int) -> List[z3.BoolRef]:
        problem, pi = self.problem, self.pi
        found = []

        for e1, e2 in itertools.combinations(self.edges, 2):
            if set(e1).intersection(e2):
                found.append(z3.Not(z3.And(self.swap[e1][t], self.swap[e2][t])))

        for (u, v), b in itertools.product(self.edges, range(len(problem.blocks))):
            qa, qb = problem.blocks[b]
            found.append(
                z3.Implies(
                    z3.And(self.swap[(u, v)][t], self.time[b] == t),
                    z3.And([pi[q][t - 1] != w for q in (qa, qb) for w in (u, v)]),
                )
            )
        return found

    def _transitions(self, t: int) -> List[z3.BoolRef]:
        problem, pi = self.problem, self.pi
        found = []

        for q in self.qubits:
            moved = []
            for u, v in self.edges:
                swap = self.swap[(u, v)][t]
                found.append(z3.Implies(z3.And(swap, pi[q][t - 1] == u), pi[q][t] == v))
                found.append(z3.Implies(z3.And(swap, pi[q][t - 1] == v), pi[q][t] == u))
                moved.append(z3.And(swap, z3.Or(pi[q][t - 1] == u, pi[q][t - 1] == v)))

            for b, pair in enumerate(problem.blocks):
                if q not in pair:
                    continue
                other = pair[1] if pair[0] == q else pair[0]
                fused_here = z3.And(self.time[b] == t, self.fuse[b])
                found.append(z3.Implies(fused_here, pi[q][t] == pi[other][t - 1]))
                moved.append(fused_here)

            if moved:
                found.append(z3.Implies(z3.Not(z3.Or(moved)), pi[q][t] == pi[q][t - 1]))
            else:
                found.append(pi[q][t] == pi[q][t - 1])
        return found

    def cost(self) -> z3.ArithRef:
        terms = [z3.If(fuse, self.problem.fuse_cost(b), 0) for b, fuse in enumerate(self.fuse)]
        terms.extend(
            z3.If(self.swap[e][t], SWAP_COST, 0)
            for e in self.edges
            for t in range(1, self.depth + 1)
        )
        return z3.Sum(terms) if terms else z3.IntVal(0, self.ctx)

    def values(self, model: z3.ModelRef) -> "_Values":
        times = tuple(model.eval(t, model_completion=True).as_long() for t in self.time)
        flags = tuple(z3.is_true(model.eval(f, model_completion=True)) for f in self.flags)
        return times, flags

    def solution(self, values: "_Values") -> _Solution:
        times, flags = values
        count = len(self.fuse)
        fused = frozenset(b for b in range(count) if flags[b])
        swaps = [key for key, chosen in zip(self.swap_keys, flags[count:]) if chosen]
        return times, fused, swaps


# Block times, then the fuse and swap flags in ``_Encoding.flags`` order
_Values = Tuple[Tuple[int, ...], Tuple[bool, ...]]

# Solver resource units granted per second of routing budget
RLIMIT_PER_SECOND = 2_000_000


class _BudgetExhausted(Exception):
    pass


class _DepthSearch:
    """
    Runs the satisfiability checks of one routing problem.

    Every check gets the same deterministic resource limit, derived from the time budget, and all
    solvers live in a private z3 context seeded from ``seed``. A check that runs out of resources
    counts as exhausting the budget.
    """

    def __init__(self, problem: RoutingProblem, seed: int, time_budget: float) -> None:
        self.problem = problem
        self.seed = seed
        self.rlimit = int(time_budget * RLIMIT_PER_SECOND)
        self.ctx = z3.Context()

    def _solver(self) -> z3.Solver:
        if self.rlimit < 1:
            raise _BudgetExhausted()
        solver = z3.Solver(ctx=self.ctx)
        solver.set("random_seed", self.seed)
        solver.set("rlimit", self.rlimit)
        return solver

    def feasible(self, depth: int) -> Optional[Tuple[z3.Solver, _Encoding, _Values]]:
        encoding = _Encoding(self.problem, depth, self.ctx)
        solver = self._solver()
        solver.add(encoding.constraints())

        result = solver.check()
        logger.debug("Routing depth %d: %s", depth, result)
        if result == z3.unsat:
            return None
        if result != z3.sat:
            raise _BudgetExhausted()
        return solver, encoding, encoding.values(solver.model())

    @staticmethod
    def _attempt(
        solver: z3.Solver, encoding: _Encoding, constraint: z3.BoolRef
    ) -> Tuple[z3.CheckSatResult, Optional[_Values]]:
        solver.push()
        solver.add(constraint)
        result = solver.check()
        values = encoding.values(solver.model()) if result == z3.sat else None
        solver.pop()
        return result, values

    def cheapest(
        self, solver: z3.Solver, encoding: _Encoding, best: _Values
    ) -> Tuple[_Values, int, str]:
        """
        Tighten the swap cost at a fixed depth and pin it to its minimum in ``solver``.

        The status is ``"depth-optimal"`` if a check runs out of resources before the minimum is
        proven.
        """

        cost = encoding.cost()
        best_cost = _cost(self.problem, *encoding.solution(best)[1:])
        status = "optimal"

        while best_cost > 0:
            result, values = self._attempt(solver, encoding, cost < best_cost)
            if result == z3.unsat:
                break
            if values is None:
                status = "depth-optimal"
                break
            best = values
            best_cost = _cost(self.problem, *encoding.solution(best)[1:])

        solver.add(cost == best_cost)
        return best, best_cost, status

    def canonical(self, solver: z3.Solver, encoding: _Encoding, current: _Values) -> _Values:
        """
        The lexicographically smallest schedule among those ``solver`` still admits.

        Block times are minimized in block order, then every fuse and swap flag in turn prefers
        ``False``. The result only depends on which constraint sets are satisfiable, not on the
        model the solver happens to return. A check that runs out of resources keeps the current
        value.
        """

        for b, var in enumerate(encoding.time):
            for t in range(1, current[0][b]):
                _, values = self._attempt(solver, encoding, var == t)
                if values is not None:
                    current = values
                    break
            solver.add(var == current[0][b])

        for index, flag in enumerate(encoding.flags):
            if current[1][index]:
                _, values = self._attempt(solver, encoding, z3.Not(flag))
                if values is not None:
                    current = values
            solver.add(flag if current[1][index] else z3.Not(flag))

        return current


def solve_schedule(
    problem: RoutingProblem, seed: int = 0, time_budget: float = 60.0, depth_increment: int = 1
) -> Schedule:
    """
    Find a depth-minimal schedule, and among those one with minimal swap cost.

    Depths are tried upward from a lower bound in steps of ``depth_increment`` until one is
    satisfiable (the greedy schedule's depth is always feasible and caps the search); smaller
    depths down to the last unsatisfiable one are then re-checked so the result stays minimal.
    Once the depth is fixed, the cost is tightened until the solver proves no cheaper schedule
    exists; if the budget ends first the status is ``"depth-optimal"``. Among the remaining
    schedules the lexicographically smallest one is returned, so equal inputs give equal
    schedules regardless of solver state.

    ``time_budget`` is turned into a deterministic resource limit of ``RLIMIT_PER_SECOND`` units
    per second for every solver check. If a check exhausts it before the depth is settled, the
    greedy schedule is returned with status ``"heuristic-fallback"``. ``proven_depth`` is the
    largest depth known to be a lower bound on the optimum.
    """

    if depth_increment < 1:
        raise ValueError("depth increment must be at least 1")

    fallback = heuristic_schedule(problem)
    if not problem.blocks:
        return dataclasses.replace(fallback, status="optimal", proven_depth=0)

    search = _DepthSearch(problem, seed, time_budget)

    proven = lower_bound(problem)
    depth = proven
    try:
        found = search.feasible(depth)
        while found is None:
            proven = depth + 1
            depth = min(depth + depth_increment, fallback.depth)
            found = search.feasible(depth)

        while depth > proven:
            smaller = search.feasible(depth - 1)
            if smaller is None:
                proven = depth
                break
            depth, found = depth - 1, smaller
        proven = depth
    except _BudgetExhausted:
        logger.warning(
            "Routing budget exhausted (optimal depth >= %d); using the greedy schedule", proven
        )
        return dataclasses.replace(fallback, proven_depth=proven)

    solver, encoding, first = found
    best, cost, status = search.cheapest(solver, encoding, first)
    times, fused, swaps = encoding.solution(search.canonical(solver, encoding, best))
    logger.debug("Routing depth %d proven minimal, swap cost %d (%s)", depth, cost, status)

    return Schedule(
        depth=depth,
        times=times,
        fused=fused,
        swaps=tuple(swaps),
        mappings=replay(problem, times, fused, swaps, depth),
        cost=cost,
        status=status,
        proven_depth=proven,
    )
