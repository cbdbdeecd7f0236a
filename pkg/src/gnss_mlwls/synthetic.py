"""Forward simulation of GNSS epochs with known truth.

Two generators:

* :func:`random_scene` - a single epoch with satellites scattered above the
  horizon, exact pseudoranges plus optional noise and per-signal biases.
* :class:`UrbanSimulator` - a time series from circular-orbit constellations
  seen by a moving receiver, with NLOS biases, C/N0 and Doppler.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geodesy import GeodeticPosition, enu_rotation, geodetic_to_ecef
from .measurements import (
    SPEED_OF_LIGHT,
    Constellation,
    Measurement,
    MeasurementSet,
    ObservationEpoch,
    SatelliteState,
    SignalObservation,
)

GPS_RADIUS = 26_559_700.0
BDS_MEO_RADIUS = 27_906_100.0
GEO_RADIUS = 42_164_200.0
MU = 3.986004418e14
OMEGA_E = 7.2921151467e-5

HONG_KONG = GeodeticPosition(22.3, 114.2, 50.0)
GPS_EPOCH_T0 = 2200 * 604800.0 + 100_000.0


def _point_on_sphere(receiver: np.ndarray, direction: np.ndarray, radius: float) -> np.ndarray:
    """Point at ``radius`` from the geocenter along ``receiver + d*direction``."""
    ru = receiver @ direction
    d = -ru + np.sqrt(ru * ru - receiver @ receiver + radius * radius)
    return receiver + d * direction


def sky_directions(rng: np.random.Generator, receiver: np.ndarray, n: int,
                   min_el: float = 15.0, max_el: float = 90.0) -> np.ndarray:
    """ECEF unit vectors with elevation uniform in sin between the limits."""
    R = enu_rotation(receiver)
    s = rng.uniform(np.sin(np.radians(min_el)), np.sin(np.radians(max_el)), n)
    el = np.arcsin(s)
    az = rng.uniform(0.0, 2 * np.pi, n)
    enu = np.column_stack([np.cos(el) * np.sin(az), np.cos(el) * np.cos(az), np.sin(el)])
    return enu @ R


def random_scene(rng: np.random.Generator, n_gps: int = 8, n_bds: int = 0,
                 receiver=None, clock_gps: float = 1e5, clock_bds: float = 7e4,
                 noise_std: float = 0.0, biases=None, min_el: float = 15.0,
                 time: float = GPS_EPOCH_T0):
    """One epoch of forward-simulated pseudoranges.

    Returns the measurement set and the true receiver ECEF position.
    ``biases`` (meters, one per signal) are added to the pseudoranges.
    """
    if receiver is None:
        receiver = geodetic_to_ecef(HONG_KONG)
    receiver = np.asarray(receiver, dtype=float)
    n = n_gps + n_bds
    dirs = sky_directions(rng, receiver, n, min_el=min_el)
    sats = np.array([_point_on_sphere(receiver, d, GPS_RADIUS if k < n_gps else BDS_MEO_RADIUS)
                     for k, d in enumerate(dirs)])
    consts = [Constellation.GPS] * n_gps + [Constellation.BEIDOU] * n_bds
    svids = list(range(1, n_gps + 1)) + list(range(6, 6 + n_bds))
    sat_clock = rng.uniform(-1e-4, 1e-4, n) * SPEED_OF_LIGHT
    if biases is None:
        biases = np.zeros(n)
    noise = rng.normal(0.0, noise_std, n) if noise_std > 0 else np.zeros(n)
    meas = []
    for k in range(n):
        clk = clock_gps if consts[k] is Constellation.GPS else clock_bds
        rho = np.linalg.norm(sats[k] - receiver) + clk - sat_clock[k] + biases[k] + noise[k]
        sig = SignalObservation(consts[k], svids[k], float(rho))
        meas.append(Measurement(sig, SatelliteState(sats[k], float(sat_clock[k]))))
    return MeasurementSet(meas, time), receiver


@dataclass(frozen=True)
class CircularOrbit:
    constellation: Constellation
    svid: int
    radius: float
    inclination: float  # rad
    raan: float  # rad
    phase: float  # rad at t = 0
    geostationary: bool = False

    def position(self, t: float) -> np.ndarray:
        """ECEF position at ``t`` seconds after the simulation start."""
        if self.geostationary:
            lon = self.raan
            return self.radius * np.array([np.cos(lon), np.sin(lon), 0.0])
        n = np.sqrt(MU / self.radius**3)
        u = self.phase + n * t
        ci, si = np.cos(self.inclination), np.sin(self.inclination)
        Om = self.raan - OMEGA_E * t
        xp, yp = self.radius * np.cos(u), self.radius * np.sin(u)
        return np.array(
            [
                xp * np.cos(Om) - yp * ci * np.sin(Om),
                xp * np.sin(Om) + yp * ci * np.cos(Om),
                yp * si,
            ]
        )


def default_constellations(rng: np.random.Generator) -> list[CircularOrbit]:
    orbits = []
    for k in range(24):
        plane, slot = divmod(k, 4)
        orbits.append(CircularOrbit(Constellation.GPS, k + 1, GPS_RADIUS, np.radians(55.0),
                                    np.radians(60.0 * plane), np.radians(90.0 * slot + 15.0 * plane)
                                    + rng.normal(0, 0.05)))
    for k, lon in enumerate((80.0, 110.5, 140.0, 160.0, 58.75)):
        orbits.append(CircularOrbit(Constellation.BEIDOU, k + 1, GEO_RADIUS, 0.0, np.radians(lon), 0.0,
                                    geostationary=True))
    for k in range(3):
        orbits.append(CircularOrbit(Constellation.BEIDOU, k + 6, GEO_RADIUS, np.radians(55.0),
                                    np.radians(118.0 + 120.0 * k), np.radians(120.0 * k)))
    for k in range(24):
        plane, slot = divmod(k, 8)
        orbits.append(CircularOrbit(Constellation.BEIDOU, k + 19, BDS_MEO_RADIUS, np.radians(55.0),
                                    np.radians(120.0 * plane), np.radians(45.0 * slot + 15.0 * plane)
                                    + rng.normal(0, 0.05)))
    return orbits


@dataclass
class UrbanScenario:
    """Knobs of the urban-canyon simulation."""

    n_epochs: int = 500
    start_offset_s: float = 0.0
    origin: GeodeticPosition = HONG_KONG
    speed_mps: float = 8.0
    loop_radius_m: float = 300.0
    visible_min_el: float = 10.0
    blockage_prob: float = 0.6  # scales the chance a low satellite is blocked outright
    nlos_per_epoch: tuple = (2, 3)
    nlos_bias_m: tuple = (20.0, 300.0)
    los_sigma_m: float = 1.5
    nlos_cn0_drop_db: tuple = (4.0, 12.0)
    doppler_sigma_mps: float = 0.05
    clock_gps_m: float = 1e5
    clock_bds_m: float = 7e4
    clock_drift_mps: float = 0.3
    constellations: tuple = (Constellation.GPS, Constellation.BEIDOU)


@dataclass
class SimulatedEpoch:
    epoch: ObservationEpoch
    states: list[SatelliteState]
    truth: np.ndarray
    nlos: set = field(default_factory=set)

    def measurement_set(self) -> MeasurementSet:
        return MeasurementSet([Measurement(s, st) for s, st in zip(self.epoch.signals, self.states)],
                              self.epoch.time)


class UrbanSimulator:
    """Urban-canyon epoch stream with NLOS reception.

    Each epoch 2-3 visible signals (lower elevations favoured) carry a
    positive pseudorange bias and attenuated C/N0. Doppler follows the RINEX
    sign convention (positive for approaching satellites).
    """

    def __init__(self, scenario: UrbanScenario, seed: int = 0):
        self.scenario = scenario
        self.rng = np.random.default_rng(seed)
        self.orbits = [o for o in default_constellations(np.random.default_rng(12345))
                       if o.constellation in scenario.constellations]
        self.origin = geodetic_to_ecef(scenario.origin)
        self._enu = enu_rotation(self.origin)
        self._blocked = {}

    def receiver(self, t: float) -> np.ndarray:
        sc = self.scenario
        ang = sc.speed_mps * t / sc.loop_radius_m
        e, n = sc.loop_radius_m * np.sin(ang), sc.loop_radius_m * (1 - np.cos(ang))
        return self.origin + self._enu.T @ np.array([e, n, 0.0])

    def _range_rate(self, orbit: CircularOrbit, t: float) -> float:
        h = 0.5
        r1 = np.linalg.norm(orbit.position(t + h) - self.receiver(t + h))
        r0 = np.linalg.norm(orbit.position(t - h) - self.receiver(t - h))
        return (r1 - r0) / (2 * h)

    def epochs(self):
        sc = self.scenario
        rng = self.rng
        sat_clock = {(o.constellation, o.svid): rng.uniform(-2e-4, 2e-4) * SPEED_OF_LIGHT for o in self.orbits}
        for k in range(sc.n_epochs):
            t = sc.start_offset_s + k
            rx = self.receiver(t)
            up = self._enu[2]
            visible = []
            for o in self.orbits:
                p = o.position(t)
                los = p - rx
                el = np.degrees(np.arcsin(los @ up / np.linalg.norm(los)))
                if el < sc.visible_min_el:
                    continue
                key = (o.constellation, o.svid, int(t // 60))
                if key not in self._blocked:
                    p_block = sc.blockage_prob * (1.0 - el / 90.0) ** 2 * 2
                    self._blocked[key] = rng.random() < p_block
                if self._blocked[key]:
                    continue
                visible.append((o, p, el))

            n_nlos = int(rng.integers(sc.nlos_per_epoch[0], sc.nlos_per_epoch[1] + 1))
            n_nlos = min(n_nlos, max(len(visible) - 5, 0))
            if n_nlos and visible:
                els = np.array([v[2] for v in visible])
                prob = 1.0 / np.sin(np.radians(els)) ** 2
                prob /= prob.sum()
                nlos_idx = set(rng.choice(len(visible), size=n_nlos, replace=False, p=prob).tolist())
            else:
                nlos_idx = set()

            signals, states, nlos = [], [], set()
            drift = sc.clock_drift_mps * t
            for j, (o, p, el) in enumerate(visible):
                clk = (sc.clock_gps_m if o.constellation is Constellation.GPS else sc.clock_bds_m) + drift
                sclk = sat_clock[(o.constellation, o.svid)]
                sin_el = np.sin(np.radians(el))
                rho = np.linalg.norm(p - rx) + clk - sclk + rng.normal(0.0, sc.los_sigma_m / sin_el)
                cn0 = 28.0 + 18.0 * sin_el + rng.normal(0.0, 2.0)
                rate = self._range_rate(o, t) + sc.clock_drift_mps + rng.normal(0.0, sc.doppler_sigma_mps)
                if j in nlos_idx:
                    rho += rng.uniform(*sc.nlos_bias_m)
                    cn0 -= rng.uniform(*sc.nlos_cn0_drop_db)
                    rate += rng.normal(0.0, 0.5)
                    nlos.add((o.constellation.value, o.svid))
                carrier = o.constellation.carrier_hz
                signals.append(SignalObservation(o.constellation, o.svid, float(rho),
                                                 doppler=float(-rate * carrier / SPEED_OF_LIGHT),
                                                 cn0=float(cn0), carrier_hz=carrier))
                states.append(SatelliteState(p, float(sclk)))
            yield SimulatedEpoch(ObservationEpoch(GPS_EPOCH_T0 + t, signals), states, rx, nlos)


def write_dataset(directory, scenario: UrbanScenario, seed: int = 0, prefix: str = "") -> tuple:
    """Write a simulated split as canonical epoch CSV plus ECEF truth CSV.

    Returns the two paths. Truth points carry the exact epoch times.
    """
    from pathlib import Path

    from .ingest.canonical import write_canonical_csv
    from .ingest.truth import GroundTruthPoint, TruthFormat, write_ground_truth

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    sims = list(UrbanSimulator(scenario, seed).epochs())
    epochs_file = d / f"{prefix}epochs.csv"
    truth_file = d / f"{prefix}truth.csv"
    epochs_file.write_text(write_canonical_csv([s.measurement_set() for s in sims]), encoding="utf-8")
    truth_file.write_text(write_ground_truth([GroundTruthPoint(s.epoch.time, s.truth) for s in sims],
                                             TruthFormat.CSV_ECEF), encoding="utf-8")
    return epochs_file, truth_file


def make_ephemerides(t0: float, rng: np.random.Generator, n_gps: int = 24, n_bds: int = 0) -> list:
    """Plausible broadcast records with reference epoch ``t0`` (continuous GPS seconds).

    GPS satellites sit in six planes at 55 deg; BeiDou ones are MEO. The
    harmonic terms and clock polynomial take typical magnitudes.
    """
    from .ephemeris import BDS_GPS_OFFSET_S, BroadcastEphemeris

    week = int(t0 // 604800.0)
    toe = t0 - week * 604800.0
    out = []
    specs = [(Constellation.GPS, k + 1, 5153.7, k) for k in range(n_gps)]
    specs += [(Constellation.BEIDOU, k + 19, 5282.6, k) for k in range(n_bds)]
    for const, svid, sqrt_a, k in specs:
        plane, slot = divmod(k, max(1, (n_gps if const is Constellation.GPS else n_bds) // 6 or 1))
        out.append(BroadcastEphemeris(
            constellation=const, svid=svid, toe=toe, sqrtA=sqrt_a + rng.normal(0, 0.05),
            e=float(rng.uniform(0.001, 0.02)), i0=float(np.radians(55.0) + rng.normal(0, 0.01)),
            Omega0=float(np.radians(60.0 * plane) + rng.normal(0, 0.01)),
            omega=float(rng.uniform(-np.pi, np.pi)), M0=float(np.radians(90.0 * slot + 15.0 * plane) - np.pi),
            Delta_n=4.5e-9, idot=1e-10, Omega_dot=-8e-9,
            Cuc=float(rng.normal(0, 3e-6)), Cus=float(rng.normal(0, 3e-6)),
            Crc=float(rng.normal(0, 150.0)), Crs=float(rng.normal(0, 50.0)),
            Cic=float(rng.normal(0, 1e-7)), Cis=float(rng.normal(0, 1e-7)),
            af0=float(rng.uniform(-3e-4, 3e-4)), af1=float(rng.normal(0, 1e-11)), af2=0.0,
            toc=toe, tgd=float(rng.normal(0, 5e-9)), week=week,
            system_offset=BDS_GPS_OFFSET_S if const is Constellation.BEIDOU else 0.0,
        ))
    return out


def simulate_observations(ephemerides, receiver: np.ndarray, t: float, clock_m: dict,
                          rng: np.random.Generator | None = None, noise_m: float = 0.0,
                          min_elevation: float = 10.0) -> ObservationEpoch:
    """Pseudoranges consistent with the broadcast orbits for a receiver at ``receiver``.

    ``clock_m`` maps a constellation to its receiver clock offset in meters;
    ``t`` is the receiver timestamp, so the true reception time is
    ``t - clock / c``. Flight time and earth rotation are solved to
    sub-nanosecond level.
    """
    from .ephemeris import clock_bias_seconds, satellite_state
    from .geodesy import elevation_azimuth

    signals = []
    for eph in ephemerides:
        if eph.constellation not in clock_m:
            continue
        t_true = t - clock_m[eph.constellation] / SPEED_OF_LIGHT
        tau = 0.075
        for _ in range(10):
            st = satellite_state(eph, t_true - tau, tau, relativistic=True, group_delay=False)
            new = np.linalg.norm(st.position - receiver) / SPEED_OF_LIGHT
            if abs(new - tau) < 1e-13:
                break
            tau = new
        el, _ = elevation_azimuth(receiver, st.position)
        if el < min_elevation:
            continue
        dt_sv = clock_bias_seconds(eph, t_true - tau, None, True, True)
        rho = tau * SPEED_OF_LIGHT + clock_m[eph.constellation] - SPEED_OF_LIGHT * dt_sv
        if rng is not None and noise_m:
            rho += rng.normal(0.0, noise_m)
        sin_el = np.sin(np.radians(el))
        signals.append(SignalObservation(eph.constellation, eph.svid, float(rho), doppler=0.0,
                                         cn0=float(30.0 + 15.0 * sin_el)))
    signals.sort(key=lambda s: (s.constellation.value, s.svid))
    return ObservationEpoch(t, signals)
