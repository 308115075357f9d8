"""
Reading and writing instance documents.

An instance is a single JSON object:

    {
        "world_points": [[x, y, z], ...],
        "measurements": [[u, v], ...],
        "meta": {...},
        "ground_truth": {"rotation_rows": [[...], [...], [...]],
                         "translation": [tx, ty, tz]}
    }

meta and ground_truth are optional. Every format problem is reported
as an InstanceFormatError naming the offending field.
"""
import dataclasses
import enum
import json
import math
import pathlib
import typing as t

import numpy as np

from sonarpnp.errors import InstanceFormatError, InvalidPose
from sonarpnp.models import CorrespondenceSet, Pose
from sonarpnp.type_aliases import JSONVals

InstanceJSON = t.Mapping[str, JSONVals]


@dataclasses.dataclass(slots=True, frozen=True)
class Instance:
    """Correspondences plus what is known about where they came from."""

    correspondences: CorrespondenceSet
    meta: dict[str, JSONVals] = dataclasses.field(default_factory=dict)
    ground_truth: t.Optional[Pose] = None


class ArrayEncoder(json.JSONEncoder):
    """A JSONEncoder which also handles numpy values, enums and poses."""

    def default(self, obj: t.Any) -> t.Any:
        """
        Convert the object to valid JSON.

        Arrays become nested lists and numpy scalars plain numbers.
        Otherwise, delegate to the parent encoder.
        """
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.generic):
            return obj.item()
        if isinstance(obj, enum.Enum):
            return obj.value
        if isinstance(obj, Pose):
            return pose_to_json(obj)
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return dataclasses.asdict(obj)
        return super().default(obj)


def _resolve_path(path: str, data: InstanceJSON) -> JSONVals:
    """Access data["a"]["b"] from the path "a.b"."""
    value: JSONVals = data  # type: ignore[assignment]
    for key in path.split("."):
        if not isinstance(value, t.Mapping):
            raise InstanceFormatError(path, "parent is not an object.")
        if key not in value:
            raise InstanceFormatError(path, "missing.")
        value = value[key]
    return value


def _number_rows(path: str, value: JSONVals, width: int) -> np.ndarray:
    """Check value is a list of lists of width finite numbers."""
    if not isinstance(value, list):
        raise InstanceFormatError(path, f"expected a list, got {value!r}.")
    for i, row in enumerate(value):
        field = f"{path}[{i}]"
        if not isinstance(row, list) or len(row) != width:
            raise InstanceFormatError(
                field, f"expected {width} numbers, got {row!r}."
            )
        for entry in row:
            # bool is an int subclass but never a coordinate.
            if isinstance(entry, bool) or not isinstance(entry, (int, float)):
                raise InstanceFormatError(
                    field, f"{entry!r} is not a number."
                )
            if not math.isfinite(entry):
                raise InstanceFormatError(field, f"{entry} is not finite.")
    return np.array(value, dtype=np.float64).reshape(-1, width)


def _load_ground_truth(data: InstanceJSON) -> t.Optional[Pose]:
    if data.get("ground_truth") is None:
        return None
    rotation = _number_rows(
        "ground_truth.rotation_rows",
        _resolve_path("ground_truth.rotation_rows", data),
        3,
    )
    if len(rotation) != 3:
        raise InstanceFormatError(
            "ground_truth.rotation_rows", "expected 3 rows."
        )
    translation = _number_rows(
        "ground_truth.translation",
        [_resolve_path("ground_truth.translation", data)],
        3,
    )[0]
    try:
        return Pose(rotation, translation)
    except InvalidPose as e:
        raise InstanceFormatError(
            "ground_truth.rotation_rows", e.message
        ) from e


def instance_from_json(data: JSONVals) -> Instance:
    """Validate a decoded instance document."""
    if not isinstance(data, t.Mapping):
        raise InstanceFormatError("<document>", "expected a JSON object.")
    world = _number_rows(
        "world_points", _resolve_path("world_points", data), 3
    )
    measured = _number_rows(
        "measurements", _resolve_path("measurements", data), 2
    )
    if len(world) != len(measured):
        raise InstanceFormatError(
            "measurements",
            f"{len(measured)} entries for {len(world)} world points.",
        )
    if not len(world):
        raise InstanceFormatError("world_points", "is empty.")

    meta = data.get("meta", {})
    if not isinstance(meta, t.Mapping):
        raise InstanceFormatError("meta", "expected an object.")

    return Instance(
        CorrespondenceSet(world, measured),
        dict(meta),
        _load_ground_truth(data),
    )


def load_instance(path: t.Union[str, pathlib.Path]) -> Instance:
    """Read and validate an instance file."""
    try:
        data = json.loads(pathlib.Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InstanceFormatError(
            "<document>", f"invalid JSON at line {e.lineno}: {e.msg}."
        ) from e
    return instance_from_json(data)


def pose_to_json(pose: Pose) -> dict[str, JSONVals]:
    return {
        "rotation_rows": pose.rotation.tolist(),
        "translation": pose.translation.tolist(),
    }


def instance_to_json(instance: Instance) -> dict[str, JSONVals]:
    data: dict[str, JSONVals] = {
        "world_points": instance.correspondences.world_points.tolist(),
        "measurements": instance.correspondences.measurements.tolist(),
        "meta": instance.meta,
    }
    if instance.ground_truth is not None:
        data["ground_truth"] = pose_to_json(instance.ground_truth)
    return data


def dump_instance(
    instance: Instance, path: t.Union[str, pathlib.Path]
) -> None:
    """Write an instance file that load_instance accepts."""
    with pathlib.Path(path).open("w") as f:
        json.dump(instance_to_json(instance), f, indent=4, cls=ArrayEncoder)
