"""Write a synthetic split for the pipeline.

``canonical`` writes the urban-canyon simulation (NLOS-biased signals, moving
receiver) as canonical epoch CSV plus ECEF truth. ``rinex`` writes a static
open-sky receiver as RINEX 3 observation and navigation files plus truth, to
exercise the ingest path.
"""

import argparse
from pathlib import Path

import numpy as np

from gnss_mlwls.geodesy import geodetic_to_ecef
from gnss_mlwls.ingest import GroundTruthPoint, write_ground_truth, write_rinex_nav, write_rinex_obs
from gnss_mlwls.measurements import Constellation
from gnss_mlwls.synthetic import HONG_KONG, UrbanScenario, make_ephemerides, simulate_observations, write_dataset

RINEX_T0 = 2105 * 604800.0 + 5 * 86400 + 6623.0


def write_rinex_split(out: Path, n_epochs: int, seed: int, prefix: str, noise_m: float) -> list:
    rng = np.random.default_rng(seed)
    ephs = make_ephemerides(RINEX_T0, rng, n_gps=32, n_bds=12)
    rx = geodetic_to_ecef(HONG_KONG)
    clocks = {Constellation.GPS: 1e5, Constellation.BEIDOU: 7e4}
    epochs = [simulate_observations(ephs, rx, RINEX_T0 + k, clocks, rng, noise_m=noise_m) for k in range(n_epochs)]
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{prefix}obs.rnx", out / f"{prefix}nav.rnx", out / f"{prefix}truth.csv"]
    paths[0].write_text(write_rinex_obs(epochs))
    paths[1].write_text(write_rinex_nav(ephs))
    paths[2].write_text(write_ground_truth([GroundTruthPoint(e.time, rx) for e in epochs]))
    return paths


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--format", choices=["canonical", "rinex"], default="canonical")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prefix", default="", help="file name prefix, e.g. train_")
    p.add_argument("--start-offset", type=float, default=0.0, help="seconds after the scenario origin time")
    p.add_argument("--blockage", type=float, default=0.6, help="urban blockage probability scale")
    p.add_argument("--noise", type=float, default=0.3, help="RINEX pseudorange noise sigma (m)")
    args = p.parse_args(argv)

    if args.format == "rinex":
        paths = write_rinex_split(args.out, args.epochs, args.seed, args.prefix, args.noise)
    else:
        scen = UrbanScenario(n_epochs=args.epochs, blockage_prob=args.blockage, start_offset_s=args.start_offset)
        paths = write_dataset(args.out, scen, seed=args.seed, prefix=args.prefix)
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
