"""Sender Keys group messaging: protocol, variants, security game and scenario runner."""

from .core import ControlMsg, Frame, RecvError, SenderKey, SenderKeysError, UserState
from .game import Game, Outcome, Predicate, judge_cleanness
from .variants import Variant, make_protocol

__all__ = [
    "ControlMsg",
    "Frame",
    "Game",
    "Outcome",
    "Predicate",
    "RecvError",
    "SenderKey",
    "SenderKeysError",
    "UserState",
    "Variant",
    "judge_cleanness",
    "make_protocol",
]

__version__ = "0.1.0"
