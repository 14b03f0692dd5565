"""
QAOA for budget-constrained portfolio selection.

Selections are bitstrings ``z`` with ``z[i] = 1`` when asset ``i`` is held. Measured bitstrings use
the same order: classical bit ``i`` (leftmost is bit 0) is the measurement of qubit ``i``.

The cost is the risk-adjusted Markowitz objective ``F(z) = q zᵀΣz - (1 - q) μᵀz``. The circuit
encodes the unconstrained ``F``; the budget only enters through post-selection when scoring.
"""

import csv
import dataclasses
import itertools
import json
import logging
import math
import pathlib
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import errors
from .circuit_ir import Circuit, Gate, GateKind, ParameterExpr, bind_parameters
from .noise_sim import NOISELESS, NoiseChannel, sample_counts, simulate, state_fidelity

logger = logging.getLogger(__name__)

PathLike = Union[str, pathlib.Path]
Bitstring = Union[str, Sequence[int]]

DATA_DIR = pathlib.Path(__file__).resolve().parent / "data"

_COST_TOLERANCE = 1e-12


@dataclasses.dataclass(frozen=True)
class PortfolioInstance:
    num_assets: int
    budget: int
    returns: np.ndarray = dataclasses.field(compare=False)
    covariance: np.ndarray = dataclasses.field(compare=False)
    risk: float = 0.5
    name: str = "portfolio"
    f_min: float = dataclasses.field(init=False)
    f_max: float = dataclasses.field(init=False)

    def __post_init__(self) -> None:
        returns = np.asarray(self.returns, dtype=float)
        covariance = np.asarray(self.covariance, dtype=float)
        n = self.num_assets

        if n < 1:
            raise ValueError("an instance needs at least one asset")
        if not 1 <= self.budget <= n:
            raise ValueError("budget must lie in [1, {}]".format(n))
        if returns.shape != (n,) or covariance.shape != (n, n):
            raise ValueError("returns and covariance must match the asset count")
        if not np.allclose(covariance, covariance.T, rtol=0.0, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if not 0.0 <= self.risk <= 1.0:
            raise ValueError("risk weight must lie in [0, 1]")

        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "covariance", covariance)

        costs = [cost(self, z) for z in feasible_selections(self)]
        object.__setattr__(self, "f_min", min(costs))
        object.__setattr__(self, "f_max", max(costs))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "n": self.num_assets,
            "B": self.budget,
            "q": self.risk,
            "returns": self.returns.tolist(),
            "covariance": self.covariance.tolist(),
        }


def _bits(instance: PortfolioInstance, z: Bitstring) -> np.ndarray:
    bits = [int(b) for b in z]
    if len(bits) != instance.num_assets:
        raise ValueError(
            "selection has {} bits, instance has {} assets".format(len(bits), instance.num_assets)
        )
    if any(b not in (0, 1) for b in bits):
        raise ValueError("selection bits must be 0 or 1")
    return np.array(bits, dtype=float)


def cost(instance: PortfolioInstance, z: Bitstring) -> float:
    x = _bits(instance, z)
    risk = float(x @ instance.covariance @ x)
    gain = float(instance.returns @ x)
    return instance.risk * risk - (1.0 - instance.risk) * gain


def feasible_selections(instance: PortfolioInstance) -> List[str]:
    """All selections holding exactly ``budget`` assets, in lexicographic order."""
    result = []
    for held in itertools.combinations(range(instance.num_assets), instance.budget):
        bits = ["0"] * instance.num_assets
        for i in held:
            bits[i] = "1"
        result.append("".join(bits))
    return sorted(result)


def optimal_selections(instance: PortfolioInstance) -> List[str]:
    return [
        z
        for z in feasible_selections(instance)
        if abs(cost(instance, z) - instance.f_min) <= _COST_TOLERANCE
    ]


def approximation_ratio(instance: PortfolioInstance, z: Bitstring) -> float:
    """
    Score a selection: ``(F(z) - F_max) / (F_min - F_max)`` if it holds exactly ``budget`` assets,
    else 0. When every feasible selection costs the same, feasible selections score 1.
    """

    x = _bits(instance, z)
    if int(x.sum()) != instance.budget:
        return 0.0
    spread = instance.f_min - instance.f_max
    if spread == 0.0:
        return 1.0
    return (cost(instance, z) - instance.f_max) / spread


def instance_from_dict(data: Any, path: Optional[PathLike] = None) -> PortfolioInstance:
    try:
        return PortfolioInstance(
            num_assets=int(data["n"]),
            budget=int(data["B"]),
            returns=np.array(data["returns"], dtype=float),
            covariance=np.array(data["covariance"], dtype=float),
            risk=float(data["q"]),
            name=str(data.get("name", "portfolio")),
        )
    except (KeyError, TypeError, ValueError) as ex:
        detail = "malformed portfolio instance ({})".format(ex)
        raise errors.build_schema_error(path, detail) from None


def load_instance(path: PathLike) -> PortfolioInstance:
    try:
        with open(path, encoding="utf-8") as file:
            data = json.load(file)
    except json.JSONDecodeError as ex:
        raise errors.build_schema_error(path, "invalid JSON ({})".format(ex)) from None
    return instance_from_dict(data, path)


def bundled_instance() -> PortfolioInstance:
    return load_instance(DATA_DIR / "portfolio.json")


def random_instance(
    num_assets: int, budget: int, risk: float = 0.5, seed: int = 0
) -> PortfolioInstance:
    """A seeded instance with PSD covariance ``A Aᵀ / n`` and returns drawn from [0.5, 1.5)."""
    rng = np.random.default_rng(seed)
    factors = rng.normal(size=(num_assets, num_assets))
    covariance = factors @ factors.T / num_assets
    covariance = (covariance + covariance.T) / 2
    returns = rng.uniform(0.5, 1.5, size=num_assets)
    return PortfolioInstance(
        num_assets, budget, returns, covariance, risk, name="random-{}".format(seed)
    )


def ising_weights(
    instance: PortfolioInstance,
) -> Tuple[List[float], Dict[Tuple[int, int], float]]:
    """
    Coefficients of ``F`` written over Pauli-Z eigenvalues ``s_i = 1 - 2 z_i``.

    Up to a constant, ``F = Σ_i h_i s_i + Σ_{i<j} J_ij s_i s_j``.
    """

    q, sigma, mu = instance.risk, instance.covariance, instance.returns
    n = instance.num_assets

    couplings = {
        (i, j): q * sigma[i, j] / 2 for i, j in itertools.combinations(range(n), 2)
    }
    fields = []
    for i in range(n):
        off_diagonal = sum(sigma[i, j] for j in range(n) if j != i)
        fields.append(-q * sigma[i, i] / 2 - q * off_diagonal / 2 + (1 - q) * mu[i] / 2)
    return [float(h) for h in fields], {k: float(v) for k, v in couplings.items()}


@dataclasses.dataclass(frozen=True)
class QaoaConfig:
    depth: int = 1
    gamma_range: Tuple[float, float] = (0.0, 2 * math.pi)
    beta_range: Tuple[float, float] = (0.0, math.pi)
    step: float = 0.1
    shots: int = 10000

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError("QAOA depth must be at least 1")
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if self.shots < 1:
            raise ValueError("shot count must be at least 1")
        for low, high in (self.gamma_range, self.beta_range):
            if not low < high:
                raise ValueError("grid ranges must be non-empty")


def interaction_rounds(num_qubits: int) -> List[List[Tuple[int, int]]]:
    """
    Round-robin order of all qubit pairs: every round holds disjoint pairs.

    Pairs are ``(control, target)`` with the lower index as control.
    """

    n = num_qubits
    rounds = []
    if n % 2:
        for r in range(n):
            pairs = [((r + k) % n, (r - k) % n) for k in range(1, (n - 1) // 2 + 1)]
            rounds.append([(min(p), max(p)) for p in pairs])
    else:
        m = n - 1
        for r in range(m):
            pairs = [(r, n - 1)]
            pairs.extend(((r + k) % m, (r - k) % m) for k in range(1, (n - 2) // 2 + 1))
            rounds.append([(min(p), max(p)) for p in pairs])
    return rounds


def build_ansatz(instance: PortfolioInstance, cfg: QaoaConfig = QaoaConfig()) -> Circuit:
    """
    The QAOA circuit for ``instance`` with symbols ``gamma_l`` and ``beta_l`` for ``l = 1..p``.

    Each layer applies ``cx rz(2γJ_ij) cx`` for every nonzero coupling in round-robin order,
    ``rz(2γh_i)`` for every nonzero field, then the mixer ``rx(2β)`` on every qubit.
    """

    n = instance.num_assets
    fields, couplings = ising_weights(instance)
    gates = [Gate(GateKind.H, (q,)) for q in range(n)]

    for layer in range(1, cfg.depth + 1):
        gamma = "gamma_{}".format(layer)
        beta = "beta_{}".format(layer)
        for pairs in interaction_rounds(n):
            for a, b in pairs:
                weight = couplings[(a, b)]
                if weight == 0.0:
                    continue
                gates.append(Gate(GateKind.CX, (a, b)))
                gates.append(Gate(GateKind.RZ, (b,), ParameterExpr.symbol(gamma, 2 * weight)))
                gates.append(Gate(GateKind.CX, (a, b)))
        for q, field in enumerate(fields):
            if field != 0.0:
                gates.append(Gate(GateKind.RZ, (q,), ParameterExpr.symbol(gamma, 2 * field)))
        for q in range(n):
            gates.append(Gate(GateKind.RX, (q,), ParameterExpr.symbol(beta, 2.0)))

    gates.extend(Gate(GateKind.MEASURE, (q,), clbit=q) for q in range(n))
    return Circuit(n, tuple(gates), n, "qaoa_{}_p{}".format(instance.name, cfg.depth))


@dataclasses.dataclass(frozen=True)
class EvaluationResult:
    expectation: float
    approximation_ratio: float
    success_probability: float
    counts: Mapping[str, float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "E": self.expectation,
            "AR": self.approximation_ratio,
            "SP": self.success_probability,
            "counts": dict(sorted(self.counts.items())),
        }


def evaluate_counts(instance: PortfolioInstance, counts: Mapping[str, float]) -> EvaluationResult:
    """
    Average the cost, approximation ratio and optimal-selection indicator over ``counts``.

    ``counts`` may hold shot counts or probabilities; it is normalized by its total.
    """

    total = float(sum(counts.values()))
    if not counts or total <= 0.0:
        raise ValueError("counts are empty")

    best = set(optimal_selections(instance))
    energy = ratio = success = 0.0
    for z, weight in counts.items():
        p = weight / total
        energy += p * cost(instance, z)
        ratio += p * approximation_ratio(instance, z)
        if z in best:
            success += p

    return EvaluationResult(energy, ratio, success, dict(counts))


def exact_distribution(
    circuit: Circuit, binding: Mapping[str, float], channel: NoiseChannel = NOISELESS
) -> Dict[str, float]:
    return simulate(bind_parameters(circuit, binding), channel).distribution


def expectation(
    instance: PortfolioInstance,
    circuit: Circuit,
    binding: Mapping[str, float],
    channel: NoiseChannel = NOISELESS,
) -> float:
    """Exact ``E = Σ_z p(z) F(z)`` of the bound circuit, without sampling."""
    distribution = exact_distribution(circuit, binding, channel)
    return sum(p * cost(instance, z) for z, p in distribution.items())


def grid_axis(bounds: Tuple[float, float], step: float) -> List[float]:
    low, high = bounds
    count = int(math.floor((high - low) / step - 1e-9)) + 1
    return [round(low + k * step, 10) for k in range(count)]


@dataclasses.dataclass(frozen=True)
class GridResult:
    gamma: float
    beta: float
    energy: float
    landscape: Tuple[Tuple[float, float, float], ...]

    @property
    def binding(self) -> Dict[str, float]:
        return {"gamma_1": self.gamma, "beta_1": self.beta}


def grid_search(
    instance: PortfolioInstance,
    cfg: QaoaConfig = QaoaConfig(),
    channel: NoiseChannel = NOISELESS,
    circuit: Optional[Circuit] = None,
) -> GridResult:
    """
    Evaluate the exact expectation on the full (γ, β) grid and return its minimum.

    Cells are scanned with γ outermost, both ascending; the first cell reaching the minimum wins.
    ``circuit`` defaults to the instance's ansatz.
    """

    if cfg.depth != 1:
        raise errors.GridSearchError("Grid search supports depth 1 only (got {})".format(cfg.depth))

    ansatz = circuit if circuit is not None else build_ansatz(instance, cfg)
    landscape = []
    best: Optional[Tuple[float, float, float]] = None

    for gamma in grid_axis(cfg.gamma_range, cfg.step):
        for beta in grid_axis(cfg.beta_range, cfg.step):
            energy = expectation(instance, ansatz, {"gamma_1": gamma, "beta_1": beta}, channel)
            landscape.append((gamma, beta, energy))
            if best is None or energy < best[2]:
                best = (gamma, beta, energy)

    assert best is not None
    logger.info("Grid minimum E=%.6f at gamma=%.2f beta=%.2f", best[2], best[0], best[1])
    return GridResult(best[0], best[1], best[2], tuple(landscape))


def write_landscape_csv(landscape: Iterable[Tuple[float, float, float]], path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file)
        writer.writerow(["gamma", "beta", "E"])
        for gamma, beta, energy in landscape:
            writer.writerow([repr(gamma), repr(beta), repr(energy)])


@dataclasses.dataclass(frozen=True)
class SweepRow:
    kind: str
    rate: float
    fidelity: float
    expectation: float
    approximation_ratio: float
    success_probability: float


def lambda_sweep(
    instance: PortfolioInstance,
    circuit: Circuit,
    binding: Mapping[str, float],
    kinds: Sequence[str] = ("bit_flip", "bit_phase_flip", "depolarizing"),
    rates: Sequence[float] = (0.0, 0.001, 0.005, 0.01, 0.02, 0.05),
    placement: str = "acted",
    shots: Optional[int] = None,
    seed: int = 0,
) -> List[SweepRow]:
    """
    Simulate ``circuit`` under each channel kind and rate.

    Fidelity compares the pre-measurement state with the noiseless one. The scores use the exact
    distribution, or ``shots`` seeded samples from it when given.
    """

    bound = bind_parameters(circuit, binding)
    reference = simulate(bound).density

    rows = []
    for kind in kinds:
        for rate in rates:
            result = simulate(bound, NoiseChannel(kind, rate, placement))
            counts: Mapping[str, float] = result.distribution
            if shots is not None:
                counts = sample_counts(result.distribution, shots, seed)
            scores = evaluate_counts(instance, counts)
            rows.append(
                SweepRow(
                    kind,
                    rate,
                    state_fidelity(reference, result.density),
                    scores.expectation,
                    scores.approximation_ratio,
                    scores.success_probability,
                )
            )
            logger.debug("Sweep %s rate=%g fidelity=%.6f", kind, rate, rows[-1].fidelity)
    return rows


def write_sweep_csv(rows: Iterable[SweepRow], path: PathLike) -> None:
    fields = [field.name for field in dataclasses.fields(SweepRow)]
    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.DictWriter(file, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(dataclasses.asdict(row))
