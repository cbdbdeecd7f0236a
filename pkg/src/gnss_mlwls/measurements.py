"""Core observation and measurement containers shared by every stage."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SPEED_OF_LIGHT = 299792458.0

GPS_L1_HZ = 1575.42e6
BDS_B1I_HZ = 1561.098e6

# Plausible pseudorange range for MEO/IGSO/GEO satellites.
PSEUDORANGE_MIN = 1e6
PSEUDORANGE_MAX = 1e8


class Constellation(str, enum.Enum):
    GPS = "GPS"
    BEIDOU = "BeiDou"

    @property
    def carrier_hz(self) -> float:
        return GPS_L1_HZ if self is Constellation.GPS else BDS_B1I_HZ

    @classmethod
    def parse(cls, text: str) -> "Constellation":
        t = text.strip()
        for c in cls:
            if t.lower() == c.value.lower():
                return c
        aliases = {"G": cls.GPS, "C": cls.BEIDOU, "BDS": cls.BEIDOU, "BD": cls.BEIDOU}
        if t.upper() in aliases:
            return aliases[t.upper()]
        raise ValueError(f"unknown constellation {text!r}")


# Fixed column ordering for clock states.
CONSTELLATION_ORDER = (Constellation.GPS, Constellation.BEIDOU)


@dataclass(frozen=True)
class SignalObservation:
    constellation: Constellation
    svid: int
    pseudorange: float
    doppler: Optional[float] = None
    cn0: Optional[float] = None
    carrier_hz: float = 0.0

    def __post_init__(self):
        if self.svid < 1:
            raise ValueError(f"svid must be >= 1, got {self.svid}")
        if not self.carrier_hz:
            object.__setattr__(self, "carrier_hz", self.constellation.carrier_hz)
        if self.carrier_hz <= 0:
            raise ValueError("carrier frequency must be positive")

    @property
    def key(self) -> tuple[str, int]:
        return (self.constellation.value, self.svid)


@dataclass
class ObservationEpoch:
    time: float  # continuous GPS seconds
    signals: list[SignalObservation] = field(default_factory=list)


@dataclass(frozen=True)
class SatelliteState:
    position: np.ndarray  # ECEF at transmit time, in the reception-time frame
    clock_correction: float  # meters, added to the pseudorange


@dataclass(frozen=True)
class Measurement:
    signal: SignalObservation
    state: SatelliteState

    @property
    def key(self) -> tuple[str, int]:
        return self.signal.key


class MeasurementSet:
    """Signals of one epoch paired with their satellite states.

    Array views (``sat_pos``, ``pseudorange`` ...) are built once so the
    solvers can stay vectorised.
    """

    def __init__(self, measurements: Sequence[Measurement], time: float = 0.0):
        self.measurements = list(measurements)
        self.time = float(time)
        keys = [m.key for m in self.measurements]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (constellation, svid) in measurement set")
        n = len(self.measurements)
        self.sat_pos = np.array([m.state.position for m in self.measurements], dtype=float).reshape(n, 3)
        self.sat_clock = np.array([m.state.clock_correction for m in self.measurements], dtype=float)
        self.pseudorange = np.array([m.signal.pseudorange for m in self.measurements], dtype=float)
        self.constellations = tuple(m.signal.constellation for m in self.measurements)
        self.svids = tuple(m.signal.svid for m in self.measurements)

    def __len__(self) -> int:
        return len(self.measurements)

    def __iter__(self):
        return iter(self.measurements)

    @property
    def keys(self) -> list[tuple[str, int]]:
        return [m.key for m in self.measurements]

    def present_constellations(self, mask=None) -> tuple[Constellation, ...]:
        if mask is None:
            present = set(self.constellations)
        else:
            present = {c for c, keep in zip(self.constellations, mask) if keep}
        return tuple(c for c in CONSTELLATION_ORDER if c in present)

    def subset(self, idx) -> "MeasurementSet":
        return MeasurementSet([self.measurements[i] for i in idx], self.time)

    def select(self, constellations) -> "MeasurementSet":
        wanted = set(constellations)
        return MeasurementSet([m for m in self.measurements if m.signal.constellation in wanted], self.time)
