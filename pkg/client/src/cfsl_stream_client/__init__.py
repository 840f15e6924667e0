"""Streaming client for episode servers: arrays in, predictions out."""

from .client import (
    PROTOCOL_VERSION,
    ClientSession,
    ProtocolError,
    ScoreRecord,
    connect,
    finish,
    iter_supports,
)

__version__ = "0.1.0"
