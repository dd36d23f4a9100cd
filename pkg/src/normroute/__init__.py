"""Norm-mediated question routing with diversity-aware responder selection."""

from normroute.errors import (
    ContractError,
    LookupFailure,
    NormSyntaxError,
    RecordParseError,
    ReloadRejected,
    ValidationError,
)
from normroute.profiles import Community, GeneratorConfig, Profile, generate_synthetic, load_community, save_community
from normroute.metrics import Dimension, MetricParams
from normroute.matching import LexicographicMode, MatchQuery, MatchScore, Polarity, WeightedMode, select_responders

__version__ = "0.1.0"

__all__ = [
    "Community",
    "ContractError",
    "Dimension",
    "GeneratorConfig",
    "LexicographicMode",
    "LookupFailure",
    "MatchQuery",
    "MatchScore",
    "MetricParams",
    "NormSyntaxError",
    "Polarity",
    "Profile",
    "RecordParseError",
    "ReloadRejected",
    "ValidationError",
    "WeightedMode",
    "generate_synthetic",
    "load_community",
    "save_community",
    "select_responders",
]
