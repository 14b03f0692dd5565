"""
Command-line front-end.

``catranspile transpile`` runs the whole calibration-aware flow: pre-transpilation once, then for
every calibration snapshot (in timestamp order) a drift check that re-matches the circuit when the
calibration moved, then decomposition and optimization for every parameter binding. The other
subcommands expose single stages.
"""

import argparse
import contextlib
import dataclasses
import json
import logging
import pathlib
import sys
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence

from . import __version__, cost_model, errors, qaoa, qasm_io
from .circuit_ir import Circuit, bind_parameters, compute_metrics
from .config import RunManifest, load_bindings, load_manifest
from .cost_model import StageTimer
from .do_passes import do_pipeline
from .nam import MatchResult, NamConfig, nam
from .noise_sim import (
    CHANNEL_KINDS,
    PLACEMENTS,
    NoiseChannel,
    counts_to_json,
    sample_counts,
    simulate,
)
from .tapt import RoutedCircuit, tapt
from .topology import (
    CalibrationSnapshot,
    CouplingMap,
    DriftPolicy,
    drift_check,
    get_fidelity,
    load_calibration,
    load_calibration_series,
    load_coupling,
)

logger = logging.getLogger(__name__)

IO_ERROR_STATUS = 13


def _write_json(path: pathlib.Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@contextlib.contextmanager
def _arguments() -> Iterator[None]:
    """Report configuration values rejected by the library as ``InvalidArgumentError``."""
    try:
        yield
    except errors.TranspileError:
        raise
    except (ValueError, ZeroDivisionError) as ex:
        raise errors.InvalidArgumentError(str(ex)) from ex


def _metrics(c: Circuit, reference: Optional[Circuit] = None) -> Dict[str, Any]:
    result: Dict[str, Any] = compute_metrics(c, reference).to_dict()
    return result


def _manifest(args: argparse.Namespace) -> RunManifest:
    if args.manifest is not None:
        manifest = load_manifest(args.manifest)
    else:
        manifest = RunManifest(out=pathlib.Path(args.out or "out"))

    changes: Dict[str, Any] = {}
    for name in ("out", "coupling", "calibration_dir", "bindings", "instance", "circuit"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = pathlib.Path(value)
    if args.seed is not None:
        changes["seed"] = args.seed

    seed = changes.get("seed", manifest.seed)
    with _arguments():
        tapt_cfg = dataclasses.replace(manifest.tapt, seed=seed)
        if getattr(args, "cx_max_increase", None) is not None:
            tapt_cfg = dataclasses.replace(tapt_cfg, cx_max_increase=args.cx_max_increase)
        if getattr(args, "time_budget", None) is not None:
            tapt_cfg = dataclasses.replace(tapt_cfg, time_budget=args.time_budget)
        changes["tapt"] = tapt_cfg

        nam_cfg = dataclasses.replace(manifest.nam, seed=seed)
        if getattr(args, "nam_trials", None) is not None:
            nam_cfg = NamConfig(args.nam_trials, seed)
        changes["nam"] = nam_cfg

        passes = dataclasses.replace(manifest.passes, seed=seed)
        if getattr(args, "do_repeats", None) is not None:
            passes = dataclasses.replace(passes, repetitions=args.do_repeats)
        changes["passes"] = passes

        if getattr(args, "drift_delta", None) is not None:
            changes["drift"] = DriftPolicy(args.drift_delta)

    manifest = dataclasses.replace(manifest, **changes)
    manifest.out.mkdir(parents=True, exist_ok=True)
    return manifest


def _source_circuit(manifest: RunManifest) -> Circuit:
    if manifest.circuit is not None:
        return qasm_io.load(manifest.circuit)
    return qaoa.build_ansatz(qaoa.load_instance(manifest.instance))


def _latest_snapshot(manifest: RunManifest, cmap: CouplingMap) -> CalibrationSnapshot:
    return load_calibration_series(manifest.calibration_dir, cmap)[-1]


def _loaded_routed(c: Circuit) -> RoutedCircuit:
    return RoutedCircuit(c, {}, {}, "loaded", 0, {}, c)


def _tapt_record(source: Circuit, rc: RoutedCircuit) -> Dict[str, Any]:
    return {
        "source": _metrics(source),
        "pqc": _metrics(rc.circuit, source),
        "initial_mapping": {str(k): v for k, v in sorted(rc.initial_mapping.items())},
        "final_mapping": {str(k): v for k, v in sorted(rc.final_mapping.items())},
        "provenance": rc.provenance,
    }


def cmd_tapt(args: argparse.Namespace) -> int:
    manifest = _manifest(args)
    source = _source_circuit(manifest)
    cmap = load_coupling(manifest.coupling)

    rc = tapt(source, cmap, manifest.tapt)
    qasm_io.dump(rc.circuit, manifest.out / "pqc.qasm")
    _write_json(manifest.out / "tapt.json", _tapt_record(source, rc))
    return 0


def cmd_nam(args: argparse.Namespace) -> int:
    manifest = _manifest(args)
    cmap = load_coupling(manifest.coupling)
    if manifest.circuit is None:
        raise errors.build_schema_error(None, "nam needs --circuit (a pre-transpiled circuit)")
    pqc = qasm_io.load(manifest.circuit)

    if args.calibration is not None:
        snapshot = load_calibration(args.calibration, cmap)
    else:
        snapshot = _latest_snapshot(manifest, cmap)

    match = nam(_loaded_routed(pqc), cmap, snapshot, manifest.nam)
    qasm_io.dump(match.circuit, manifest.out / "matched.qasm")
    _write_json(manifest.out / "nam.json", match.to_dict())
    return 0


def cmd_bind(args: argparse.Namespace) -> int:
    manifest = _manifest(args)
    if manifest.circuit is None:
        raise errors.build_schema_error(None, "bind needs --circuit")
    circuit = qasm_io.load(manifest.circuit)
    bindings = load_bindings(manifest.bindings)

    records = []
    for index, binding in enumerate(bindings):
        final = do_pipeline(circuit, binding, manifest.passes)
        qasm_io.dump(final, manifest.out / "final_{}.qasm".format(index))
        records.append({"binding": binding, "metrics": _metrics(final)})

    _write_json(manifest.out / "bind.json", records)
    return 0


@dataclasses.dataclass
class _Deployment:
    routed: RoutedCircuit
    baseline: CalibrationSnapshot
    match: MatchResult


def run_pipeline(manifest: RunManifest, timer: Optional[StageTimer] = None) -> Dict[str, Any]:
    """
    Run the calibration-aware flow described by ``manifest`` and write its circuits.

    Returns the metrics record that ``transpile`` stores as ``metrics.json``.
    """

    timer = timer or StageTimer()
    manifest.validate()
    source = _source_circuit(manifest)
    cmap = load_coupling(manifest.coupling)
    snapshots = load_calibration_series(manifest.calibration_dir, cmap)
    bindings = load_bindings(manifest.bindings)

    with timer.measure("tapt"):
        pqc = tapt(source, cmap, manifest.tapt)
    qasm_io.dump(pqc.circuit, manifest.out / "pqc.qasm")

    deployed: Optional[_Deployment] = None
    drift: List[Dict[str, Any]] = []
    for snapshot in snapshots:
        stamp = snapshot.timestamp.isoformat()
        if deployed is not None and not drift_check(
            deployed.match.circuit, deployed.baseline, snapshot, manifest.drift
        ):
            drift.append({"timestamp": stamp, "rematched": False})
            continue

        with timer.measure("nam"):
            match = nam(pqc, cmap, snapshot, manifest.nam)
        deployed = _Deployment(match.apply(pqc), snapshot, match)
        drift.append({"timestamp": stamp, "rematched": True, "score": match.score})

    assert deployed is not None
    qasm_io.dump(deployed.routed.circuit, manifest.out / "matched.qasm")

    finals = []
    for index, binding in enumerate(bindings):
        with timer.measure("do"):
            final = do_pipeline(deployed.routed.circuit, binding, manifest.passes)
        qasm_io.dump(final, manifest.out / "final_{}.qasm".format(index))
        if index == 0:
            qasm_io.dump(final, manifest.out / "final.qasm")
        finals.append(
            {
                "binding": binding,
                "metrics": _metrics(final),
                "fidelity": get_fidelity(final, deployed.baseline),
            }
        )

    record = _tapt_record(source, pqc)
    record.update(
        {
            "matched": deployed.match.to_dict(),
            "nam_runs": sum(1 for entry in drift if entry["rematched"]),
            "drift": drift,
            "final": finals,
        }
    )
    return record


def cmd_transpile(args: argparse.Namespace) -> int:
    manifest = _manifest(args)
    timer = StageTimer()
    record = run_pipeline(manifest, timer)

    _write_json(manifest.out / "metrics.json", record)
    _write_json(manifest.out / "timings.json", timer.to_dict())
    _write_json(manifest.out / "manifest.json", manifest.to_dict())
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    manifest = _manifest(args)
    with _arguments():
        channel = NoiseChannel(args.noise, args.rate, args.placement)
        if args.shots < 1:
            raise ValueError("shots must be at least 1")

    if manifest.circuit is None:
        raise errors.build_schema_error(None, "simulate needs --circuit")
    circuit = qasm_io.load(manifest.circuit)
    if not circuit.is_bound:
        bindings = load_bindings(manifest.bindings)
        if not 0 <= args.binding_index < len(bindings):
            detail = "no binding {}".format(args.binding_index)
            raise errors.build_schema_error(manifest.bindings, detail)
        circuit = bind_parameters(circuit, bindings[args.binding_index])

    result = simulate(circuit, channel)
    counts = sample_counts(result.distribution, args.shots, manifest.seed)
    metadata: Dict[str, object] = {"noise": args.noise, "rate": args.rate, "seed": manifest.seed}
    counts_path = manifest.out / "counts.json"
    counts_path.write_text(counts_to_json(counts, metadata) + "\n", encoding="utf-8")
    _write_json(manifest.out / "distribution.json", result.distribution)

    if args.evaluate:
        instance = qaoa.load_instance(manifest.instance)
        _write_json(
            manifest.out / "evaluation.json", qaoa.evaluate_counts(instance, counts).to_dict()
        )
    return 0


def cmd_gridsearch(args: argparse.Namespace) -> int:
    manifest = _manifest(args)
    instance = qaoa.load_instance(manifest.instance)
    with _arguments():
        cfg = qaoa.QaoaConfig(step=args.step)
        channel = NoiseChannel(args.noise, args.rate)

    result = qaoa.grid_search(instance, cfg, channel)
    qaoa.write_landscape_csv(result.landscape, manifest.out / "landscape.csv")
    _write_json(
        manifest.out / "grid.json",
        {"gamma": result.gamma, "beta": result.beta, "E": result.energy, "step": args.step},
    )
    print("gamma={:.2f} beta={:.2f} E={:.6f}".format(result.gamma, result.beta, result.energy))
    return 0


def cmd_cost(args: argparse.Namespace) -> int:
    devices = dict(cost_model.DEVICE_STAGE_TIMES)
    if args.device:
        devices = {name: cost_model.DEVICE_STAGE_TIMES[name] for name in args.device}

    if args.timings is not None:
        data = json.loads(pathlib.Path(args.timings).read_text(encoding="utf-8"))
        means = [float(data.get(stage, {}).get("mean", 0.0)) for stage in ("tapt", "nam", "do")]
        if args.baseline is None:
            raise errors.build_schema_error(args.timings, "measured timings need --baseline")
        devices = {"measured": (means[0], means[1], means[2], args.baseline)}

    with _arguments():
        rows = cost_model.table_report(devices, args.ansatz_counts, args.period)
    print(cost_model.format_report(rows))
    if args.out is not None:
        out = pathlib.Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "cost.json").write_text(cost_model.report_to_json(rows) + "\n", encoding="utf-8")
    return 0


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", help="JSON run manifest; flags override its values")
    parser.add_argument("--coupling", help="coupling map JSON (default: bundled heavy-hex)")
    parser.add_argument("--seed", type=int, help="seed for every stage (default: 0)")
    parser.add_argument("--out", help="output directory (default: out)")


def _add_circuit(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--circuit", help="input circuit (.qasm)")
    parser.add_argument("--instance", help="portfolio instance JSON (default: bundled)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catranspile", description="Calibration-aware transpilation of ansatz circuits."
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging level (default: WARNING)",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="same as --log-level INFO")
    commands = parser.add_subparsers(dest="command", required=True)

    def command(name: str, func: Callable[[argparse.Namespace], int], text: str) -> Any:
        sub = commands.add_parser(name, help=text, description=text)
        sub.set_defaults(func=func)
        _common(sub)
        return sub

    def tapt_flags(sub: argparse.ArgumentParser) -> None:
        sub.add_argument(
            "--cx-max-increase", type=float, help="reject results raising cx by more (percent)"
        )
        sub.add_argument(
            "--time-budget", type=float, help="routing solver budget in seconds (default: 60)"
        )

    sub = command("tapt", cmd_tapt, "Pre-transpile a circuit for the coupling map.")
    _add_circuit(sub)
    tapt_flags(sub)

    sub = command("nam", cmd_nam, "Re-place a pre-transpiled circuit for a calibration.")
    sub.add_argument("--circuit", help="pre-transpiled circuit (.qasm)")
    sub.add_argument("--calibration", help="calibration snapshot (default: latest in dir)")
    sub.add_argument("--calibration-dir", help="calibration snapshots (default: bundled)")
    sub.add_argument("--nam-trials", type=int, help="placements to try (default: 15)")

    sub = command("bind", cmd_bind, "Bind parameters and optimize a matched circuit.")
    sub.add_argument("--circuit", help="matched circuit (.qasm)")
    sub.add_argument("--bindings", help="JSON list of parameter bindings (default: bundled)")
    sub.add_argument("--do-repeats", type=int, help="optimization repetitions (default: 15)")

    sub = command("transpile", cmd_transpile, "Run the full calibration-aware flow.")
    _add_circuit(sub)
    tapt_flags(sub)
    sub.add_argument("--calibration-dir", help="calibration snapshots (default: bundled)")
    sub.add_argument("--bindings", help="JSON list of parameter bindings (default: bundled)")
    sub.add_argument("--nam-trials", type=int, help="placements to try (default: 15)")
    sub.add_argument("--do-repeats", type=int, help="optimization repetitions (default: 15)")
    sub.add_argument(
        "--drift-delta", type=float, help="relative fidelity change that re-matches (default: 0.01)"
    )

    sub = command("simulate", cmd_simulate, "Simulate a circuit with a noise channel.")
    _add_circuit(sub)
    sub.add_argument("--bindings", help="bindings used if the circuit is symbolic")
    sub.add_argument("--binding-index", type=int, default=0, help="binding to use (default: 0)")
    sub.add_argument("--noise", default="none", choices=CHANNEL_KINDS, help="(default: none)")
    sub.add_argument("--rate", type=float, default=0.0, help="channel rate (default: 0)")
    sub.add_argument("--placement", default="acted", choices=PLACEMENTS, help="(default: acted)")
    sub.add_argument("--shots", type=int, default=10000, help="samples (default: 10000)")
    sub.add_argument("--evaluate", action="store_true", help="score counts against --instance")

    sub = command("gridsearch", cmd_gridsearch, "Scan the (gamma, beta) landscape.")
    sub.add_argument("--instance", help="portfolio instance JSON (default: bundled)")
    sub.add_argument("--step", type=float, default=0.1, help="grid step (default: 0.1)")
    sub.add_argument("--noise", default="none", choices=CHANNEL_KINDS, help="(default: none)")
    sub.add_argument("--rate", type=float, default=0.0, help="channel rate (default: 0)")

    sub = commands.add_parser("cost", help="Report expected transpilation times.")
    sub.set_defaults(func=cmd_cost)
    sub.add_argument(
        "--device",
        action="append",
        choices=sorted(cost_model.DEVICE_STAGE_TIMES),
        help="device preset, repeatable (default: all)",
    )
    sub.add_argument(
        "--ansatz-counts", type=int, nargs="+", default=list(cost_model.REPORT_ANSATZ_COUNTS)
    )
    sub.add_argument("--period", type=int, default=cost_model.CHANGE_PERIOD)
    sub.add_argument("--timings", help="timings.json written by transpile")
    sub.add_argument("--baseline", type=float, help="baseline seconds per circuit for --timings")
    sub.add_argument("--out", help="directory for cost.json")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = "INFO" if args.verbose and args.log_level == "WARNING" else args.log_level
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        status: int = args.func(args)
    except errors.TranspileError as ex:
        print(json.dumps(ex.to_record(), sort_keys=True), file=sys.stderr)
        return ex.exit_status
    except OSError as ex:
        record = {"error": "io", "message": str(ex)}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return IO_ERROR_STATUS
    return status


if __name__ == "__main__":
    sys.exit(main())
