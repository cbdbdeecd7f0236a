"""Closed-loop synthetic experiment: simulate, train, sweep, and compare activations.

Trains on a 1000-epoch urban scene, tests on a disjoint 500-epoch scene, and
prints the activation comparison with the sigmoid at the swept b*.
"""

import argparse
import json
import time
from pathlib import Path

import yaml

from gnss_mlwls import cli
from gnss_mlwls.synthetic import UrbanScenario, write_dataset


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--workdir", type=Path, default=Path("experiment"))
    p.add_argument("--train-epochs", type=int, default=1000)
    p.add_argument("--test-epochs", type=int, default=500)
    p.add_argument("--blockage", type=float, default=0.6)
    p.add_argument("--model", choices=["adaboost", "random_forest", "gradient_boosting"], default="adaboost")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)

    t0 = time.perf_counter()
    root = args.workdir
    data = root / "data"
    write_dataset(data, UrbanScenario(n_epochs=args.train_epochs, blockage_prob=args.blockage), seed=1, prefix="train_")
    write_dataset(data, UrbanScenario(n_epochs=args.test_epochs, blockage_prob=args.blockage, start_offset_s=30000),
                  seed=2, prefix="test_")
    cfg = root / "experiment.yaml"
    cfg.write_text(yaml.safe_dump({
        "output_dir": "out",
        "seed": args.seed,
        "threads": args.threads,
        "model": {"kind": args.model},
        "train": {"canonical": "data/train_epochs.csv", "truth": "data/train_truth.csv", "truth_format": "csv_ecef"},
        "test": {"canonical": "data/test_epochs.csv", "truth": "data/test_truth.csv", "truth_format": "csv_ecef"},
    }))
    code = cli.main(["run", "--config", str(cfg)])
    if code != 0:
        return code

    out = root / "out"
    sweep = json.loads((out / "sweep_result.json").read_text())
    methods = json.loads((out / "position_summary.json").read_text())["methods"]
    base = methods["constant"]["rmse_3d_m"]
    print()
    print(f"{'method':<16}{'rmse_3d_m':>12}{'vs constant':>14}")
    for name, m in sorted(methods.items(), key=lambda kv: kv[1]["rmse_3d_m"]):
        print(f"{name:<16}{m['rmse_3d_m']:>12.3f}{m['rmse_3d_m'] / base:>14.3f}")
    print(f"\nb* = {sweep['b_star']:g}, elapsed {time.perf_counter() - t0:.0f} s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
