"""Holds certain application metadata."""

from importlib.metadata import PackageNotFoundError, metadata

import platformdirs

try:
    package_metadata = metadata(__package__)
except PackageNotFoundError:
    # Running from a source checkout that was never installed.
    __version__ = "0.0.0"
    __app_name__ = __package__
else:
    __version__ = package_metadata["version"]
    __app_name__ = package_metadata["name"]

APPLICATION_PATHS = platformdirs.PlatformDirs(__app_name__, appauthor=False)

WORKERS_ENV_VAR = "SONARPNP_WORKERS"
