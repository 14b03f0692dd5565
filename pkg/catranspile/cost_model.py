"""
Expected transpilation time of a whole variational run.

The baseline transpiles every ansatz from scratch (``μ_SF`` per circuit). Calibration-aware
transpilation pre-transpiles once, re-matches whenever the calibration changes (every ``m``
iterations) and runs the per-parameter optimization for every ansatz.
"""

import contextlib
import dataclasses
import json
import logging
import math
import time
from typing import Any, Dict, Iterator, List, Mapping, Sequence, Tuple

from . import errors

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class StageTimes:
    tapt: float
    nam: float
    do: float

    def __post_init__(self) -> None:
        if min(self.tapt, self.nam, self.do) < 0:
            raise ValueError("stage times must be non-negative")


@dataclasses.dataclass(frozen=True)
class RunScenario:
    ansatz_count: int
    change_period: int
    baseline: float

    def __post_init__(self) -> None:
        if self.ansatz_count < 1:
            raise ValueError("ansatz count must be at least 1")
        if self.change_period < 1:
            raise ZeroDivisionError("calibration change period must be at least 1")
        if self.change_period > self.ansatz_count:
            raise ValueError("calibration change period cannot exceed the ansatz count")
        if self.baseline < 0:
            raise ValueError("baseline time must be non-negative")


def total_baseline(sc: RunScenario) -> float:
    return sc.baseline * sc.ansatz_count


def total_ca(times: StageTimes, sc: RunScenario) -> float:
    rematches = math.ceil(sc.ansatz_count / sc.change_period)
    return times.tapt + times.nam * rematches + times.do * sc.ansatz_count


def savings(times: StageTimes, sc: RunScenario) -> float:
    """Percentage change of the calibration-aware total against the baseline; negative is faster."""
    baseline = total_baseline(sc)
    if baseline == 0:
        raise errors.DegenerateBaselineError("Baseline total is 0; savings are undefined")
    return 100.0 * (total_ca(times, sc) - baseline) / baseline


# Mean seconds per invocation: (pre-transpilation, matching, optimization, full baseline)
DEVICE_STAGE_TIMES: Dict[str, Tuple[float, float, float, float]] = {
    "ibmq_ehningen": (18.13, 4.41, 2.26, 30.00),
    "ibm_cairo": (23.07, 3.59, 3.13, 25.90),
    "ibm_auckland": (22.92, 3.44, 2.31, 27.94),
    "ibm_hanoi": (17.44, 4.37, 2.50, 29.89),
}

REPORT_ANSATZ_COUNTS = (5, 100)
CHANGE_PERIOD = 5


def device_times(device: str) -> Tuple[StageTimes, float]:
    try:
        tapt, nam, do, baseline = DEVICE_STAGE_TIMES[device]
    except KeyError:
        raise ValueError(
            "unknown device {!r} (known: {})".format(device, ", ".join(sorted(DEVICE_STAGE_TIMES)))
        ) from None
    return StageTimes(tapt, nam, do), baseline


def scenario_row(
    device: str, times: StageTimes, baseline: float, ansatz_count: int, period: int = CHANGE_PERIOD
) -> Dict[str, Any]:
    """Totals for one device and ansatz count under changing and fixed calibration."""
    changing = RunScenario(ansatz_count, min(period, ansatz_count), baseline)
    fixed = RunScenario(ansatz_count, ansatz_count, baseline)
    return {
        "device": device,
        "ansatz_count": ansatz_count,
        "ca_cer": total_ca(times, changing),
        "ca_fer": total_ca(times, fixed),
        "baseline": total_baseline(changing),
        "savings_cer": savings(times, changing),
        "savings_fer": savings(times, fixed),
    }


def table_report(
    devices: Mapping[str, Tuple[float, float, float, float]] = DEVICE_STAGE_TIMES,
    ansatz_counts: Sequence[int] = REPORT_ANSATZ_COUNTS,
    period: int = CHANGE_PERIOD,
) -> List[Dict[str, Any]]:
    rows = []
    for count in ansatz_counts:
        for device, (tapt, nam, do, baseline) in devices.items():
            rows.append(scenario_row(device, StageTimes(tapt, nam, do), baseline, count, period))
    return rows


def format_report(rows: Sequence[Mapping[str, Any]]) -> str:
    header = "{:<16} {:>5} {:>10} {:>10} {:>10} {:>9} {:>9}".format(
        "device", "N_A", "CA-CER", "CA-FER", "SF", "dCER%", "dFER%"
    )
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            "{:<16} {:>5} {:>10.2f} {:>10.2f} {:>10.2f} {:>9.2f} {:>9.2f}".format(
                row["device"],
                row["ansatz_count"],
                row["ca_cer"],
                row["ca_fer"],
                row["baseline"],
                row["savings_cer"],
                row["savings_fer"],
            )
        )
    return "\n".join(lines)


def report_to_json(rows: Sequence[Mapping[str, Any]]) -> str:
    return json.dumps({"rows": list(rows)}, indent=2, sort_keys=True)


class StageTimer:
    """
    Collects wall-clock durations per stage::

        timer = StageTimer()
        with timer.measure("tapt"):
            ...
        timer.stage_times()
    """

    def __init__(self) -> None:
        self.samples: Dict[str, List[float]] = {}

    @contextlib.contextmanager
    def measure(self, stage: str) -> Iterator[None]:
        start = time.monotonic()
        try:
            yield
        finally:
            elapsed = time.monotonic() - start
            self.samples.setdefault(stage, []).append(elapsed)
            logger.info("Stage %s took %.3f s", stage, elapsed)

    def mean(self, stage: str) -> float:
        values = self.samples.get(stage, [])
        return math.fsum(values) / len(values) if values else 0.0

    def stage_times(self) -> StageTimes:
        return StageTimes(self.mean("tapt"), self.mean("nam"), self.mean("do"))

    def to_dict(self) -> Dict[str, Any]:
        return {
            stage: {"count": len(values), "total": math.fsum(values), "mean": self.mean(stage)}
            for stage, values in sorted(self.samples.items())
        }
