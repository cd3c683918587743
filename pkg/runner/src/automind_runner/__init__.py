"""Persistent Python execution session over a stdio line protocol."""

from .shim import PROTOCOL_VERSION, Session, check_syntax, handle_line, run_script, serve

__all__ = [
    "PROTOCOL_VERSION",
    "Session",
    "check_syntax",
    "handle_line",
    "run_script",
    "serve",
]
