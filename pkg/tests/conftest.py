import typing as t

import numpy as np
import pytest

from sonarpnp import config
from sonarpnp.harness.scene import (
    ScenarioConfig,
    Scene,
    SceneMode,
    generate_scene,
)
from sonarpnp.harness.sweep import trial_rng
from sonarpnp.helpers import logging as log_helpers
from sonarpnp.models import FovSpec, ProjectionKind, ProjectionModel


@pytest.fixture(autouse=True)
def isolated_config(
    tmp_path_factory: pytest.TempPathFactory,
    monkeypatch: pytest.MonkeyPatch,
) -> t.Iterator[None]:
    """Run every test against the defaults and a throwaway user config."""
    home = tmp_path_factory.mktemp("user")
    monkeypatch.setattr(config, "USER_CONFIG_PATH", home / "config.json")
    monkeypatch.setattr(log_helpers, "USER_LOG_PATH", home / "sonarpnp.log")
    config.load_config_data()
    yield
    config.USER_CONFIG_PATH.unlink(missing_ok=True)
    config.load_config_data()


def make_scene(
    mode: str = "general",
    point_count: int = 20,
    seed: int = 3,
    projection: ProjectionKind = ProjectionKind.ARC,
) -> Scene:
    """Generate a noise-free scene from the default harness settings."""
    scenario = ScenarioConfig.from_config(
        SceneMode(mode),
        point_count,
        projection=ProjectionModel(projection),
    )
    return generate_scene(scenario, trial_rng(seed, 0, 0))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def fov() -> FovSpec:
    return FovSpec.from_config()


@pytest.fixture
def general_scene() -> Scene:
    return make_scene()


@pytest.fixture
def orthographic_scene() -> Scene:
    return make_scene(projection=ProjectionKind.ORTHOGRAPHIC)


@pytest.fixture
def coplanar_scene() -> Scene:
    return make_scene("coplanar")


@pytest.fixture
def orthographic_coplanar_scene() -> Scene:
    return make_scene("coplanar", projection=ProjectionKind.ORTHOGRAPHIC)
