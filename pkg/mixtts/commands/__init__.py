"""Command-line surface."""
from mixtts.commands.main import cli  # noqa: F401
