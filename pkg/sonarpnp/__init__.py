"""Loads the layered config, the environment and the global console."""

import dotenv
from rich.console import Console

from sonarpnp.config import load_config_data
from sonarpnp.meta import __app_name__, __version__

load_config_data()
dotenv.load_dotenv()

console = Console()
