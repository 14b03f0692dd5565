import json
import time

import pytest

from catranspile import errors
from catranspile.cost_model import (
    CHANGE_PERIOD,
    DEVICE_STAGE_TIMES,
    REPORT_ANSATZ_COUNTS,
    RunScenario,
    StageTimer,
    StageTimes,
    device_times,
    format_report,
    report_to_json,
    savings,
    scenario_row,
    table_report,
    total_baseline,
    total_ca,
)

EHNINGEN = StageTimes(18.13, 4.41, 2.26)


def test_ehningen_short_run() -> None:
    sc = RunScenario(5, 5, 30.0)
    assert total_baseline(sc) == pytest.approx(150.0)
    assert total_ca(EHNINGEN, sc) == pytest.approx(33.83, abs=0.5)
    assert savings(EHNINGEN, sc) == pytest.approx(-77.44, abs=0.2)


def test_ehningen_long_run() -> None:
    changing = RunScenario(100, 5, 30.0)
    fixed = RunScenario(100, 100, 30.0)
    assert total_ca(EHNINGEN, changing) == pytest.approx(332.33, abs=0.5)
    assert total_ca(EHNINGEN, fixed) == pytest.approx(248.54, abs=0.5)
    assert savings(EHNINGEN, fixed) == pytest.approx(-91.72, abs=0.2)


def test_rematch_count_rounds_up() -> None:
    times = StageTimes(0.0, 1.0, 0.0)
    assert total_ca(times, RunScenario(7, 5, 1.0)) == 2.0
    assert total_ca(times, RunScenario(10, 5, 1.0)) == 2.0
    assert total_ca(times, RunScenario(10, 1, 1.0)) == 10.0


def test_scenario_errors() -> None:
    with pytest.raises(ZeroDivisionError):
        RunScenario(5, 0, 30.0)
    with pytest.raises(ValueError):
        RunScenario(5, 6, 30.0)
    with pytest.raises(ValueError):
        RunScenario(0, 1, 30.0)
    with pytest.raises(ValueError):
        StageTimes(-1.0, 0.0, 0.0)

    with pytest.raises(errors.DegenerateBaselineError):
        savings(EHNINGEN, RunScenario(5, 5, 0.0))


def test_device_times() -> None:
    times, baseline = device_times("ibmq_ehningen")
    assert times == EHNINGEN
    assert baseline == 30.0

    with pytest.raises(ValueError, match="unknown device"):
        device_times("ibmq_nowhere")


def test_scenario_row() -> None:
    row = scenario_row("ibmq_ehningen", EHNINGEN, 30.0, 5)
    assert row["ca_cer"] == pytest.approx(33.84)
    # With five ansatzes the calibration changes once either way
    assert row["ca_fer"] == pytest.approx(row["ca_cer"])
    assert row["baseline"] == pytest.approx(150.0)

    # A period longer than the run is clamped to the run
    short = scenario_row("ibmq_ehningen", EHNINGEN, 30.0, 2, period=CHANGE_PERIOD)
    assert short["ca_cer"] == pytest.approx(short["ca_fer"])


def test_table_report() -> None:
    rows = table_report()
    assert len(rows) == len(REPORT_ANSATZ_COUNTS) * len(DEVICE_STAGE_TIMES)
    assert {row["ansatz_count"] for row in rows} == set(REPORT_ANSATZ_COUNTS)
    for row in rows:
        # Calibration-aware runs are always faster here, more so when calibration is fixed
        assert row["savings_fer"] <= row["savings_cer"] < 0

    text = format_report(rows)
    header = ["device", "N_A", "CA-CER", "CA-FER", "SF", "dCER%", "dFER%"]
    assert text.splitlines()[0].split() == header
    assert "ibmq_ehningen" in text
    assert "33.84" in text

    data = json.loads(report_to_json(rows))
    assert len(data["rows"]) == len(rows)


def test_stage_timer() -> None:
    timer = StageTimer()
    assert timer.mean("tapt") == 0.0

    with timer.measure("tapt"):
        time.sleep(0.01)
    with pytest.raises(RuntimeError):
        with timer.measure("do"):
            raise RuntimeError("stage failed")
    with timer.measure("do"):
        pass

    assert timer.mean("tapt") >= 0.009
    assert len(timer.samples["do"]) == 2
    assert timer.stage_times().nam == 0.0
    assert timer.to_dict()["do"]["count"] == 2
