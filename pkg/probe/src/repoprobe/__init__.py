"""Dynamic test probe: injectable pytest plugin plus a standalone runner."""

from pathlib import Path

__version__ = "0.1.0"


def plugin_path() -> str:
    """Path of the injectable single-file plugin."""
    return str(Path(__file__).with_name("plugin.py"))
