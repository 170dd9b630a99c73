"""
Command-line surface: one subcommand per laboratory operation.
"""

from src.cli.dispatch import dispatch

__all__ = ["dispatch"]
