import dataclasses
import json
import pathlib
from typing import Any, Dict, List, Mapping, Optional, Union

from . import errors
from .do_passes import PassConfig
from .nam import NamConfig
from .tapt import TaptConfig
from .topology import DATA_DIR, DriftPolicy

PathLike = Union[str, pathlib.Path]


@dataclasses.dataclass(frozen=True)
class RunManifest:
    """
    Everything one pipeline run reads: input files, seeds and per-stage settings.

    ``circuit`` may be omitted, in which case the ansatz is generated from ``instance``. Paths are
    checked by ``validate``; the files themselves are parsed by the stages that use them.
    """

    out: pathlib.Path
    coupling: pathlib.Path = DATA_DIR / "heavy_hex_27.json"
    calibration_dir: pathlib.Path = DATA_DIR / "calibrations"
    bindings: pathlib.Path = DATA_DIR / "bindings.json"
    instance: pathlib.Path = DATA_DIR / "portfolio.json"
    circuit: Optional[pathlib.Path] = None
    seed: int = 0
    tapt: TaptConfig = TaptConfig()
    nam: NamConfig = NamConfig()
    passes: PassConfig = PassConfig()
    drift: DriftPolicy = DriftPolicy()

    def validate(self) -> None:
        files = [self.coupling, self.bindings, self.instance]
        if self.circuit is not None:
            files.append(self.circuit)
        for path in files:
            if not path.is_file():
                raise errors.build_schema_error(path, "no such file")
        if not self.calibration_dir.is_dir():
            raise errors.build_schema_error(self.calibration_dir, "no such directory")
        if not any(self.calibration_dir.glob("*.json")):
            raise errors.build_schema_error(self.calibration_dir, "no calibration snapshots")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "out": str(self.out),
            "coupling": str(self.coupling),
            "calibration_dir": str(self.calibration_dir),
            "bindings": str(self.bindings),
            "instance": str(self.instance),
            "circuit": None if self.circuit is None else str(self.circuit),
            "seed": self.seed,
            "tapt": dataclasses.asdict(self.tapt),
            "nam": dataclasses.asdict(self.nam),
            "passes": dataclasses.asdict(self.passes),
            "drift": dataclasses.asdict(self.drift),
        }


_PATH_FIELDS = ("out", "coupling", "calibration_dir", "bindings", "instance", "circuit")
_STAGE_FIELDS = {"tapt": TaptConfig, "nam": NamConfig, "passes": PassConfig, "drift": DriftPolicy}


def manifest_from_dict(
    data: Mapping[str, Any], base: Optional[pathlib.Path] = None, path: Optional[PathLike] = None
) -> RunManifest:
    """
    Build a manifest from parsed JSON.

    Relative paths are resolved against ``base`` (the manifest's directory when loaded from a
    file). Unknown keys are rejected.
    """

    known = set(_PATH_FIELDS) | set(_STAGE_FIELDS) | {"seed"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise errors.build_schema_error(path, "unknown manifest keys {}".format(unknown))
    if "out" not in data:
        raise errors.build_schema_error(path, "manifest needs an 'out' directory")

    kwargs: Dict[str, Any] = {}
    for name in _PATH_FIELDS:
        if data.get(name) is not None:
            value = pathlib.Path(str(data[name]))
            kwargs[name] = value if base is None or value.is_absolute() else base / value

    try:
        if "seed" in data:
            kwargs["seed"] = int(data["seed"])
        for name, cls in _STAGE_FIELDS.items():
            if name in data:
                section = dict(data[name])
                if "pass_order" in section:
                    section["pass_order"] = tuple(section["pass_order"])
                kwargs[name] = cls(**section)
    except (TypeError, ValueError) as ex:
        raise errors.build_schema_error(path, "invalid manifest ({})".format(ex)) from None

    return RunManifest(**kwargs)


def load_manifest(path: PathLike) -> RunManifest:
    path = pathlib.Path(path)
    try:
        with open(path, encoding="utf-8") as file:
            data = json.load(file)
    except json.JSONDecodeError as ex:
        raise errors.build_schema_error(path, "invalid JSON ({})".format(ex)) from None
    if not isinstance(data, dict):
        raise errors.build_schema_error(path, "manifest must be a JSON object")
    return manifest_from_dict(data, path.parent, path)


def load_bindings(path: PathLike) -> List[Dict[str, float]]:
    """Read a JSON list of parameter bindings (``{"gamma_1": 2.3, "beta_1": 2.1}`` per entry)."""
    try:
        with open(path, encoding="utf-8") as file:
            data = json.load(file)
    except json.JSONDecodeError as ex:
        raise errors.build_schema_error(path, "invalid JSON ({})".format(ex)) from None

    if not isinstance(data, list) or not all(isinstance(entry, dict) for entry in data):
        raise errors.build_schema_error(path, "bindings must be a list of objects")
    try:
        return [{str(k): float(v) for k, v in entry.items()} for entry in data]
    except (TypeError, ValueError):
        raise errors.build_schema_error(path, "binding values must be numbers") from None
