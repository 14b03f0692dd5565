from .circuit_ir import (
    Circuit,
    CircuitMetrics,
    Gate,
    GateKind,
    ParameterExpr,
    bind_parameters,
    compute_metrics,
    validate,
)
from .cost_model import RunScenario, StageTimes, savings, total_baseline, total_ca
from .do_passes import PassConfig, do_pipeline
from .errors import TranspileError
from .nam import MatchResult, NamConfig, enumerate_placements, nam
from .noise_sim import DensityMatrix, NoiseChannel, simulate, state_fidelity
from .qaoa import (
    PortfolioInstance,
    QaoaConfig,
    approximation_ratio,
    build_ansatz,
    cost,
    evaluate_counts,
    grid_search,
)
from .qasm_io import parse, serialize
from .tapt import (
    RoutedCircuit,
    TaptConfig,
    decompose_and_cancel,
    elide_final_swaps,
    initial_mapping,
    partition_blocks,
    remove_idle_wires,
    route_optimal,
    tapt,
)
from .topology import (
    CalibrationSnapshot,
    CouplingMap,
    DriftPolicy,
    drift_check,
    get_fidelity,
    load_calibration,
    load_coupling,
)

__all__ = [
    "CalibrationSnapshot",
    "Circuit",
    "CircuitMetrics",
    "CouplingMap",
    "DensityMatrix",
    "DriftPolicy",
    "Gate",
    "GateKind",
    "MatchResult",
    "NamConfig",
    "NoiseChannel",
    "ParameterExpr",
    "PassConfig",
    "PortfolioInstance",
    "QaoaConfig",
    "RoutedCircuit",
    "RunScenario",
    "StageTimes",
    "TaptConfig",
    "TranspileError",
    "approximation_ratio",
    "bind_parameters",
    "build_ansatz",
    "compute_metrics",
    "cost",
    "decompose_and_cancel",
    "do_pipeline",
    "drift_check",
    "elide_final_swaps",
    "enumerate_placements",
    "evaluate_counts",
    "get_fidelity",
    "grid_search",
    "initial_mapping",
    "load_calibration",
    "load_coupling",
    "nam",
    "parse",
    "partition_blocks",
    "remove_idle_wires",
    "route_optimal",
    "savings",
    "serialize",
    "simulate",
    "state_fidelity",
    "tapt",
    "total_baseline",
    "total_ca",
    "validate",
]

__version__ = "0.1.0"
