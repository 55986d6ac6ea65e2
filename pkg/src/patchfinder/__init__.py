"""Locate the library image a sub-image was cut from, using a random-weight CNN encoder."""

from .imaging import SliceGrid
from .index import EncodingIndex, build_index, load_index, save_index
from .matcher import MatchConfig, Matcher, MatchResult, best_match, frobenius_distance
from .nn import Network, NetworkSpec

__all__ = [
    "EncodingIndex",
    "MatchConfig",
    "MatchResult",
    "Matcher",
    "Network",
    "NetworkSpec",
    "SliceGrid",
    "best_match",
    "build_index",
    "frobenius_distance",
    "load_index",
    "save_index",
]
