import datetime
import json
import math
import pathlib
from typing import Any, Dict

import pytest

from catranspile import errors
from catranspile.circuit_ir import Circuit, make_gate
from catranspile.topology import (
    DATA_DIR,
    CalibrationSnapshot,
    CouplingMap,
    DriftPolicy,
    calibration_from_dict,
    calibration_to_dict,
    coupling_from_dict,
    drift_check,
    get_fidelity,
    heavy_hex_27,
    load_calibration,
    load_calibration_series,
    load_coupling,
    uniform_calibration,
)


def _rates(cmap: CouplingMap, e_u: float = 0.001, e_cx: float = 0.01, e_d: float = 0.02) -> Any:
    return {
        "timestamp": "2022-03-01T09:00:00Z",
        "single_qubit_error": {str(q): e_u for q in range(cmap.num_qubits)},
        "cx_error": {"{}-{}".format(u, v): e_cx for u, v in cmap.edges},
        "readout_error": {str(q): e_d for q in range(cmap.num_qubits)},
    }


def _line(n: int) -> CouplingMap:
    return CouplingMap("line", n, tuple((i, i + 1) for i in range(n - 1)))


def test_heavy_hex() -> None:
    cmap = heavy_hex_27()
    assert cmap.num_qubits == 27
    assert len(cmap.edges) == 28
    for u, v in [(0, 1), (1, 4), (4, 7), (7, 6)]:
        assert cmap.has_edge(u, v)
        assert cmap.has_edge(v, u)
    assert not cmap.has_edge(0, 2)


def test_coupling_errors(tmp_path: pathlib.Path) -> None:
    with pytest.raises(errors.SchemaError, match="self-loop"):
        CouplingMap("bad", 2, ((1, 1),))
    with pytest.raises(errors.SchemaError, match="out of range"):
        CouplingMap("bad", 2, ((0, 2),))
    with pytest.raises(errors.SchemaError, match="duplicate edge"):
        CouplingMap("bad", 2, ((0, 1), (1, 0)))
    with pytest.raises(errors.SchemaError, match="malformed"):
        coupling_from_dict({"name": "x", "edges": []})

    path = tmp_path / "coupling.json"
    path.write_text("{not json")
    with pytest.raises(errors.SchemaError, match="invalid JSON"):
        load_coupling(path)

    path.write_text(json.dumps({"name": "tri", "num_qubits": 3, "edges": [[2, 0], [0, 1]]}))
    cmap = load_coupling(path)
    assert cmap.edges == ((0, 1), (0, 2))
    assert coupling_from_dict(cmap.to_dict()) == cmap


def test_load_calibration(tmp_path: pathlib.Path) -> None:
    cmap = _line(4)
    data = _rates(cmap)
    data["cx_error"]["1-2"] = 0.03
    path = tmp_path / "cal.json"
    path.write_text(json.dumps(data))

    snapshot = load_calibration(path, cmap)
    assert snapshot.timestamp == datetime.datetime(2022, 3, 1, 9, tzinfo=datetime.timezone.utc)
    assert snapshot.f_cx[(0, 1)] == pytest.approx(0.99)
    assert snapshot.f_cx[(1, 2)] == pytest.approx(0.97)
    assert snapshot.f_u[3] == pytest.approx(0.999)
    assert snapshot.f_d[0] == pytest.approx(0.98)

    # Serializing back gives the same error rates
    again = calibration_from_dict(calibration_to_dict(snapshot), cmap)
    assert again.f_cx == pytest.approx(snapshot.f_cx)
    assert again.timestamp == snapshot.timestamp


@pytest.mark.parametrize(
    "change,message",
    [
        (lambda d: d["readout_error"].pop("3"), "readout_error missing qubit 3"),
        (lambda d: d["cx_error"].update({"0-2": 0.01}), "edge 0-2 is not in the coupling map"),
        (lambda d: d["cx_error"].pop("2-3"), "cx_error missing edge 2-3"),
        (lambda d: d["single_qubit_error"].update({"1": 1.5}), "out of \\[0, 1\\]"),
        (lambda d: d["single_qubit_error"].update({"9": 0.1}), "unknown qubit 9"),
        (lambda d: d["single_qubit_error"].update({"1": "x"}), "non-numeric"),
        (lambda d: d.pop("timestamp"), "timestamp"),
        (lambda d: d.pop("cx_error"), "missing section 'cx_error'"),
    ],
)
def test_calibration_errors(change: Any, message: str) -> None:
    cmap = _line(4)
    data = _rates(cmap)
    change(data)
    with pytest.raises(errors.SchemaError, match=message):
        calibration_from_dict(data, cmap)


def test_calibration_series(tmp_path: pathlib.Path) -> None:
    cmap = _line(2)
    for name, stamp in [("b.json", "2022-03-01T10:00:00Z"), ("a.json", "2022-03-01T11:00:00Z")]:
        data = _rates(cmap)
        data["timestamp"] = stamp
        (tmp_path / name).write_text(json.dumps(data))

    series = load_calibration_series(tmp_path, cmap)
    assert [s.timestamp.hour for s in series] == [10, 11]


def test_calibration_series_mixed_offsets(tmp_path: pathlib.Path) -> None:
    cmap = _line(2)
    stamps = {
        "naive.json": "2022-03-01T10:30:00",
        "utc.json": "2022-03-01T10:00:00Z",
        "offset.json": "2022-03-01T12:15:00+02:00",
    }
    for name, stamp in stamps.items():
        data = _rates(cmap)
        data["timestamp"] = stamp
        (tmp_path / name).write_text(json.dumps(data))

    series = load_calibration_series(tmp_path, cmap)
    utc = datetime.timezone.utc
    assert [s.timestamp for s in series] == [
        datetime.datetime(2022, 3, 1, 10, 0, tzinfo=utc),
        datetime.datetime(2022, 3, 1, 10, 15, tzinfo=utc),
        datetime.datetime(2022, 3, 1, 10, 30, tzinfo=utc),
    ]


def test_bundled_calibrations() -> None:
    cmap = heavy_hex_27()
    series = load_calibration_series(DATA_DIR / "calibrations", cmap)
    assert len(series) == 3
    assert series == sorted(series, key=lambda s: s.timestamp)
    for snapshot in series:
        assert set(snapshot.f_cx) == set(cmap.edges)
        assert all(0.0 <= f <= 1.0 for f in snapshot.f_u.values())


def _snapshot(
    f_u: Dict[int, float], f_cx: Dict[Any, float], f_d: Dict[int, float]
) -> CalibrationSnapshot:
    stamp = datetime.datetime(2022, 1, 1, tzinfo=datetime.timezone.utc)
    return CalibrationSnapshot(stamp, f_u, f_cx, f_d)


def test_get_fidelity() -> None:
    cmap = _line(3)
    assert get_fidelity(Circuit(3), uniform_calibration(cmap)) == 1.0

    perfect = uniform_calibration(cmap, 1.0, 1.0, 1.0)
    busy = Circuit(3, (make_gate("cx", 0, 1), make_gate("x", 2), make_gate("measure", 0)))
    assert get_fidelity(busy, perfect) == 1.0

    one_cx = Circuit(2, (make_gate("cx", 0, 1),))
    snapshot = _snapshot({0: 0.9, 1: 0.9}, {(0, 1): 0.99, (1, 2): 0.98}, {0: 0.9, 1: 0.9})
    assert get_fidelity(one_cx, snapshot) == pytest.approx((1 + 0.99 + 1) / 3)

    c = Circuit(
        3,
        (
            make_gate("rz", 0, param=0.3),
            make_gate("cx", 0, 1),
            make_gate("cx", 2, 1),
            make_gate("barrier", 0),
            make_gate("measure", 1, clbit=0),
        ),
        1,
    )
    snapshot = _snapshot(
        {0: 0.999, 1: 0.5, 2: 0.5}, {(0, 1): 0.99, (1, 2): 0.98}, {0: 0.5, 1: 0.95, 2: 0.5}
    )
    expected = (0.999 + 0.99 * 0.98 + 0.95) / 3
    assert get_fidelity(c, snapshot) == pytest.approx(expected)

    # Log-sum oracle
    logs = [math.log(0.999), math.log(0.99) + math.log(0.98), math.log(0.95)]
    assert get_fidelity(c, snapshot) == pytest.approx(sum(math.exp(v) for v in logs) / 3)


def test_get_fidelity_per_instance() -> None:
    cmap = _line(2)
    snapshot = uniform_calibration(cmap, f_cx=0.9)
    twice = Circuit(2, (make_gate("cx", 0, 1), make_gate("cx", 1, 0)))
    assert get_fidelity(twice, snapshot) == pytest.approx((1 + 0.81 + 1) / 3)

    # A swap is scored as three cx on its edge
    swap = Circuit(2, (make_gate("swap", 0, 1),))
    assert get_fidelity(swap, snapshot) == pytest.approx((1 + 0.9 ** 3 + 1) / 3)


def test_get_fidelity_labels() -> None:
    cmap = _line(5)
    f_cx = {e: 0.99 for e in cmap.edges}
    f_cx[(3, 4)] = 0.5
    snapshot = _snapshot({q: 1.0 for q in range(5)}, f_cx, {q: 1.0 for q in range(5)})

    c = Circuit(2, (make_gate("cx", 0, 1),), qubit_labels=(3, 4))
    assert get_fidelity(c, snapshot) == pytest.approx((1 + 0.5 + 1) / 3)


def test_get_fidelity_unmapped() -> None:
    snapshot = uniform_calibration(_line(3))
    with pytest.raises(errors.ConnectivityError, match="not coupled") as info:
        get_fidelity(Circuit(3, (make_gate("x", 0), make_gate("cx", 0, 2))), snapshot)
    assert info.value.gate_index == 1


def test_get_fidelity_monotone() -> None:
    cmap = _line(3)
    c = Circuit(
        3,
        (make_gate("h", 0), make_gate("cx", 0, 1), make_gate("cx", 1, 2), make_gate("measure", 2)),
    )
    base = uniform_calibration(cmap, 0.99, 0.95, 0.9)
    score = get_fidelity(c, base)

    for table in ("f_u", "f_cx", "f_d"):
        for key in getattr(base, table):
            raised = dict(getattr(base, table))
            raised[key] = min(1.0, raised[key] + 0.01)
            better = CalibrationSnapshot(
                base.timestamp,
                raised if table == "f_u" else base.f_u,
                raised if table == "f_cx" else base.f_cx,
                raised if table == "f_d" else base.f_d,
            )
            assert get_fidelity(c, better) >= score


def test_get_fidelity_automorphism() -> None:
    cmap = _line(4)
    snapshot = _snapshot(
        {0: 0.91, 1: 0.92, 2: 0.93, 3: 0.94},
        {(0, 1): 0.81, (1, 2): 0.82, (2, 3): 0.83},
        {0: 0.71, 1: 0.72, 2: 0.73, 3: 0.74},
    )
    c = Circuit(4, (make_gate("x", 0), make_gate("cx", 0, 1), make_gate("measure", 1)))

    flip = {0: 3, 1: 2, 2: 1, 3: 0}
    mirrored = _snapshot(
        {flip[q]: f for q, f in snapshot.f_u.items()},
        {tuple(sorted((flip[u], flip[v]))): f for (u, v), f in snapshot.f_cx.items()},
        {flip[q]: f for q, f in snapshot.f_d.items()},
    )
    assert get_fidelity(c.relabel(flip), mirrored) == pytest.approx(get_fidelity(c, snapshot))
    assert cmap.has_edge(flip[0], flip[1])


def _scaled(cmap: CouplingMap, f_cx: float) -> CalibrationSnapshot:
    return uniform_calibration(cmap, 1.0, f_cx, 1.0)


def test_drift_check() -> None:
    cmap = _line(2)
    c = Circuit(2, (make_gate("cx", 0, 1),))
    policy = DriftPolicy(0.01)

    baseline = _scaled(cmap, 0.99)
    assert not drift_check(c, baseline, baseline, policy)

    # Scores (1 + f + 1) / 3: 0.90 vs 0.85 is a large change
    lowered = _scaled(cmap, 0.7)
    reference = _scaled(cmap, 0.85)
    assert get_fidelity(c, lowered) < get_fidelity(c, reference)
    assert drift_check(c, reference, lowered, policy)

    slightly = _scaled(cmap, 0.8485)
    assert not drift_check(c, reference, slightly, policy)


def test_drift_check_degenerate() -> None:
    cmap = _line(2)
    c = Circuit(2, (make_gate("x", 0), make_gate("cx", 0, 1), make_gate("measure", 0)))
    dead = uniform_calibration(cmap, 0.0, 0.0, 0.0)
    with pytest.raises(errors.DegenerateBaselineError):
        drift_check(c, dead, uniform_calibration(cmap))


def test_drift_policy() -> None:
    assert DriftPolicy().delta == 0.01
    with pytest.raises(ValueError):
        DriftPolicy(0.0)
