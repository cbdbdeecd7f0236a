"""Readers and writers for observation, navigation, truth and canonical epoch files."""

from .canonical import (
    COLUMNS,
    CanonicalFormatError,
    StateStats,
    attach_states,
    read_canonical_csv,
    write_canonical_csv,
)
from .common import ParseStats, RinexParseError, calendar_to_gps, parse_float
from .rinex_nav import parse_nav_iono, parse_rinex_nav
from .rinex_obs import parse_rinex_obs
from .rinex_write import gps_to_calendar, write_rinex_nav, write_rinex_obs
from .truth import (
    Alignment,
    GroundTruthPoint,
    TruthFormat,
    TruthParseError,
    align_truth,
    parse_ground_truth,
    write_ground_truth,
)

__all__ = [
    "Alignment",
    "COLUMNS",
    "CanonicalFormatError",
    "GroundTruthPoint",
    "ParseStats",
    "RinexParseError",
    "StateStats",
    "TruthFormat",
    "TruthParseError",
    "align_truth",
    "attach_states",
    "calendar_to_gps",
    "gps_to_calendar",
    "parse_float",
    "parse_nav_iono",
    "parse_ground_truth",
    "parse_rinex_nav",
    "parse_rinex_obs",
    "read_canonical_csv",
    "write_canonical_csv",
    "write_ground_truth",
    "write_rinex_nav",
    "write_rinex_obs",
]
