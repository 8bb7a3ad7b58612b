"""Bounded checker of contextual equivalence for a higher-order language
with local state."""
from .engine import (
    Equivalent, Inconclusive, Inequivalent, Options, Trace, check_equiv,
    explore_stats, replay,
)
from .parser import ParseError, parse_program_pair

__all__ = [
    "Equivalent", "Inconclusive", "Inequivalent", "Options", "ParseError", "Trace",
    "check_equiv", "explore_stats", "parse_program_pair", "replay",
]
