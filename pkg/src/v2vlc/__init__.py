"""Lossy-communication-aware V2V cooperative perception on synthetic BEV scenes."""

__version__ = "0.1.0"
