"""Allows accessing the JSON config values through classes."""
import json
import math
import typing as t
from importlib import resources

from mergedeep import Strategy, merge

from sonarpnp.errors import InvalidConfiguration
from sonarpnp.helpers.dotted_mapping import DottedMapping
from sonarpnp.meta import APPLICATION_PATHS
from sonarpnp.type_aliases import JSONVals

DEFAULT_CONFIG_TRAVERSABLE = (
    resources.files(__package__) / "config-default.json"
)
USER_CONFIG_PATH = APPLICATION_PATHS.user_config_path / "config.json"

default_config_data = DottedMapping()
config_data = DottedMapping()
local_config_data = DottedMapping()


def load_config_data() -> None:
    """
    Read the default and user config files and merge them.

    The user file is optional; its values must keep the type of the
    default they replace.
    """
    default_config_data.clear()
    config_data.clear()
    local_config_data.clear()

    default_config_data.update(
        json.loads(DEFAULT_CONFIG_TRAVERSABLE.read_text())
    )
    # Deep copy through JSON so merges never alias the defaults.
    config_data.update(json.loads(json.dumps(default_config_data.data)))

    try:
        with USER_CONFIG_PATH.open() as f:
            local_config_data.update(json.load(f))
    except FileNotFoundError:
        return

    try:
        merge(
            config_data.data,
            local_config_data.data,
            strategy=Strategy.TYPESAFE_REPLACE,
        )
    except TypeError as e:
        raise InvalidConfiguration(
            f"{USER_CONFIG_PATH} overrides a value with another type: {e}"
        ) from e


class JsonLoaderMeta(type):
    """Enables fetching JSON config values by attribute access."""

    def __getattr__(cls, name: str) -> JSONVals:
        """
        Use the class's section and subsection attributes to fetch vals.

        name: the name of the actual key to fetch
        The subsection is optional.
        """
        section_name = cls.section
        try:
            # Avoid infinite recursion
            subsection_name = object.__getattribute__(cls, "subsection")
        except AttributeError:
            keys = [section_name, name]
        else:
            keys = [section_name, subsection_name, name]
        try:
            return config_data[keys]
        except KeyError:
            raise AttributeError(".".join(keys)) from None


class JsonLoader(metaclass=JsonLoaderMeta):
    """
    Base JSON loader class, inherited by namespaces.

    The subclasses shouldn't be instantiated, but accessed as
    namespaces.
    """


class Solver(JsonLoader):
    """Tolerances and backend of the dual SDP."""

    section = "solver"

    rank_tol: float
    gap_tol: float
    feasibility_tol: float
    duality_tol: float
    backend: str
    fallback_backend: str


class Coplanar(JsonLoader):
    """Tolerances of the two-dimensional kernel recovery."""

    section = "coplanar"

    imag_tol: float
    resid_tol: float
    leading_coef_tol: float
    grid_size: int
    grid_extent: float
    tie_tol: float
    newton_iterations: int
    plane_orientation_prior: bool


class Tz(JsonLoader):
    """Settings of the translation solver along the sonar's z-axis."""

    section = "tz"

    tie_tol: float
    imag_tol: float
    optimize_grid_size: int


class Refinement(JsonLoader):
    """Defaults of the constrained iterative refinement."""

    section = "refinement"

    max_iterations: int
    step_tolerance: float
    residual_tolerance: float
    initial_damping: float
    max_damping: float
    penalty_weight: float
    max_penalty_ramps: int
    constraint_mode: str


class Fov(JsonLoader):
    """The sonar field of view; angles are stored in degrees."""

    section = "fov"

    r_min: float
    r_max: float
    theta_min_deg: float
    theta_max_deg: float
    phi_min_deg: float
    phi_max_deg: float


class Harness(JsonLoader):
    """Defaults of the simulation benchmark."""

    section = "harness"

    modes: list[str]
    general_points: list[int]
    coplanar_points: list[int]
    n_points: list[int]
    sigma: list[float]
    trials: int
    seed: int
    record_timings: bool
    disc_radius: float
    plane_anchor: list[float]
    dihedral_min_deg: float
    dihedral_max_deg: float
    retry_factor: int
    refine: bool
    tz_method: str
    coplanar_policy: str
    projection: str


class Log(JsonLoader):
    """Namespace for the Log config section."""

    section = "log"

    level: str
    retention: int
    rotation: str


def positive(name: str, value: float) -> float:
    """Return value if it's a finite positive number, raise otherwise."""
    if not math.isfinite(value) or value <= 0:
        raise InvalidConfiguration(f"{name} must be positive, got {value}.")
    return value


def _write_local_config() -> None:
    USER_CONFIG_PATH.parent.mkdir(parents=True, exist_ok=True)
    with USER_CONFIG_PATH.open("w") as f:
        json.dump(local_config_data.data, f, indent=4)


def set_config_value(key_path: str, value: JSONVals) -> None:
    """Set a local config value and save it to the user config file."""
    parent_keys, _ = DottedMapping.split_key(key_path)
    current = local_config_data.data
    for parent_key in parent_keys:
        current = current.setdefault(parent_key, {})

    local_config_data[key_path] = value
    config_data[key_path] = value
    _write_local_config()


def unset_config_key(key_path: str) -> None:
    """
    Unset a local config value.

    The value's parent dictionaries are also removed if they're
    empty after removal.
    """
    del local_config_data[key_path]
    remaining_keys = key_path.split(".")[:-1]

    while remaining_keys and not local_config_data[remaining_keys]:
        del local_config_data[remaining_keys]
        remaining_keys.pop()

    config_data[key_path] = json.loads(
        json.dumps(default_config_data[key_path])
    )
    _write_local_config()
