"""Worst-case latency and backlog bounds for TSN networks with credit based
shapers and interleaved regulators, plus a packet-level simulator to check
them."""

from pathlib import Path

from .network import NetworkSpec, load_spec

__version__ = "0.1.0"

DATA_DIR = Path(__file__).parent / "data"


def builtin_spec(name: str) -> NetworkSpec:
    """Load one of the shipped case-study specs (``"cs1"`` or ``"cs2"``)."""
    return load_spec(DATA_DIR / f"{name}.json")
