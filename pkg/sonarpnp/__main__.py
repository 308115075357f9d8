"""Run the CLI."""
from sonarpnp.cli import app

app()
