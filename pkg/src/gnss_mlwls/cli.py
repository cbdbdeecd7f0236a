"""``gnss-mlwls`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from . import pipeline as P
from .activation import Activation, ActivationSpec
from .config import ConfigError, ExperimentConfig, config_from_dict, dump_config, load_config
from .evaluation import EvalReport, improvement_fraction
from .ingest import RinexParseError
from .solver import SolverError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("gnss_mlwls")


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.threads is not None:
        cfg.threads = args.threads
    if args.seed_override is not None:
        cfg.seed = args.seed_override
    if args.constellations:
        cfg.constellations = [c.strip() for c in args.constellations.split(",") if c.strip()]
    if args.activation:
        cfg.activation.kind = args.activation
    if args.b is not None:
        cfg.activation.b = args.b
    return cfg.validate()


def _splits_present(cfg: ExperimentConfig) -> list[str]:
    return [s for s in P.SPLITS if getattr(cfg, s).truth]


def cmd_ingest(cfg: ExperimentConfig) -> dict:
    """Parse inputs, align truth and write canonical epoch CSVs."""
    splits = _splits_present(cfg)
    if not splits:
        raise ConfigError("no split has a truth path configured")
    report = {}
    for split in splits:
        r = P.ingest_split(cfg, split)
        report[split] = r.__dict__
        log.info("%s: %d epochs, %d signals, %d unaligned epochs dropped", split, r.epochs, r.signals,
                 r.dropped_unaligned)
    P._write(cfg.out / "ingest_report.json", P._json(report))
    return report


def _label_split(cfg: ExperimentConfig, split: str) -> dict:
    sets, truths = P.load_split(cfg, split)
    processed = P.process_epochs(sets, truths, cfg)
    labels = P.label_epochs(processed, cfg, cfg.threads)
    small = [e for e in labels if e.n_signals < cfg.labeling.min_epoch_signals]
    P._write(cfg.out / f"{split}_labels.csv", P.labels_csv(
        [e for e in labels if e.n_signals >= cfg.labeling.min_epoch_signals]))
    P._write(cfg.out / f"{split}_bestset.csv", P.bestset_csv(labels))
    return {
        "epochs": len(processed),
        "solved_epochs": sum(p.solved for p in processed),
        "labeled_epochs": sum(e.best.labeled for e in labels),
        "approx_epochs": sum(e.best.approx for e in labels),
        "small_epochs_excluded": len(small),
        "samples": sum(len(e.samples) for e in labels if e.n_signals >= cfg.labeling.min_epoch_signals),
    }


def cmd_label(cfg: ExperimentConfig) -> dict:
    """Best-subset labels and features for both splits."""
    report = {}
    for split in P.SPLITS:
        if P.epochs_path(cfg, split).exists():
            report[split] = _label_split(cfg, split)
    if not report:
        raise P.DataError("no ingested split found (run ingest first)")
    P._write(cfg.out / "label_report.json", P._json(report))
    return report


def cmd_train(cfg: ExperimentConfig) -> dict:
    """Fit one model per constellation from the training labels."""
    path = P._need_file(cfg.out / "train_labels.csv", "training labels (run label first)")
    table = P.read_labels(path)
    models, report = P.train_models(table, cfg, cfg.threads)
    for c, m in models.items():
        P._write(P.model_path(cfg, c), m.to_json() + "\n")
    test_path = cfg.out / "test_labels.csv"
    if test_path.exists():
        for c, acc in P.score_table(P.read_labels(test_path), models, cfg.labeling.min_epoch_signals).items():
            report[c]["test_accuracy"] = acc
    out = {"kind": cfg.model.kind, "seed": cfg.seed, "sweep_mode": cfg.sweep.mode, "constellations": report}
    P._write(cfg.out / "train_report.json", P._json(out))
    return out


def _scored(cfg: ExperimentConfig, split: str):
    sets, truths = P.load_split(cfg, split)
    processed = P.process_epochs(sets, truths, cfg)
    models = P.load_models(cfg)
    return processed, P.score_processed(processed, models)


def cmd_predict(cfg: ExperimentConfig) -> dict:
    """Score every test signal with the trained models."""
    processed, scores = _scored(cfg, "test")
    P._write(cfg.out / "test_scores.csv", P.scores_csv(processed, scores))
    return {"epochs": len(processed), "scored_epochs": sum(s is not None for s in scores)}


def cmd_position(cfg: ExperimentConfig) -> dict:
    """Weighted fixes for each activation and the baselines."""
    processed, scores = _scored(cfg, "test")
    best_path = cfg.out / "test_bestset.csv"
    best = P.read_bestset(best_path) if best_path.exists() else None
    specs = [cfg.activation.spec()] + cfg.activation.compare_specs()
    sweep_file = cfg.out / "sweep_result.json"
    if sweep_file.exists():
        b_star = json.loads(sweep_file.read_text(encoding="utf-8"))["b_star"]
        specs.append(ActivationSpec(Activation.SIGMOID, float(b_star), cfg.activation.a))
    names, unique = set(), []
    for s in specs:
        if P.method_name(s) not in names:
            names.add(P.method_name(s))
            unique.append(s)
    rep, weights = P.position(processed, scores, unique, cfg, best)
    rep.write(cfg.out / "position_rows.csv", cfg.out / "position_summary.json")
    P._write(cfg.out / "weight_histogram.csv", P.weight_histogram_csv(weights))
    print(rep.comparison_table())
    return rep.summary_dict()


def _sweep_epochs(cfg: ExperimentConfig):
    if cfg.sweep.mode == "test":
        return _scored(cfg, "test")
    sets, truths = P.load_split(cfg, "train")
    cut = P.validation_cut(np.array([s.time for s in sets]), cfg.sweep.validation_fraction)
    keep = [k for k, s in enumerate(sets) if s.time >= cut]
    processed = P.process_epochs([sets[k] for k in keep], [truths[k] for k in keep], cfg)
    return processed, P.score_processed(processed, P.load_models(cfg))


def cmd_sweep(cfg: ExperimentConfig) -> dict:
    """Sweep the sigmoid steepness b and keep the best."""
    processed, scores = _sweep_epochs(cfg)
    res = P.run_sweep(processed, scores, cfg, mode=cfg.sweep.mode)
    P._write(cfg.out / "sweep_curve.csv", res.to_csv())
    out = {"b_star": res.b_star, "rmse_3d_m": res.best.rmse_3d_m, "mode": res.mode, "grid_size": len(res.curve),
           "model": cfg.model.kind}
    P._write(cfg.out / "sweep_result.json", P._json(out))
    print(f"b* = {res.b_star:g}  rmse = {res.best.rmse_3d_m:.3f} m  ({res.mode} split)")
    return out


def cmd_report(cfg: ExperimentConfig) -> dict:
    """Summarise position rows and training accuracy."""
    rows = P._need_file(cfg.out / "position_rows.csv", "position rows (run position first)")
    rep = EvalReport.read_rows(rows)
    lines = ["Positioning summary", "", rep.comparison_table(), ""]
    extra = {}
    sweep_file = cfg.out / "sweep_result.json"
    if sweep_file.exists():
        sw = json.loads(sweep_file.read_text(encoding="utf-8"))
        extra["sweep"] = sw
        lines.append(f"sigmoid sweep ({sw['mode']} split): b* = {sw['b_star']:g}, RMSE {sw['rmse_3d_m']:.3f} m")
        if "constant" in rep.summaries and "best_set" in rep.summaries:
            try:
                imp = improvement_fraction(rep.rmse("constant"), sw["rmse_3d_m"], rep.rmse("best_set"))
                lines.append(f"  closes {imp:.2f}% of the baseline-to-best-set gap ({100 - imp:.2f}% remaining)")
                extra["sweep_improvement_percent"] = imp
            except ValueError:
                pass
    train_file = cfg.out / "train_report.json"
    if train_file.exists():
        tr = json.loads(train_file.read_text(encoding="utf-8"))
        extra["train"] = tr
        for c, r in tr["constellations"].items():
            test = f", test accuracy {r['test_accuracy']:.4f}" if "test_accuracy" in r else ""
            lines.append(f"{tr['kind']} {c}: train accuracy {r['train_accuracy']:.4f}{test}")
    text = "\n".join(lines) + "\n"
    P._write(cfg.out / "report.txt", text)
    print(text, end="")
    out = {"summary": rep.summary_dict(), **extra}
    P._write(cfg.out / "report.json", P._json(out))
    return out


def cmd_run(cfg: ExperimentConfig) -> dict:
    """Every stage in order."""
    out = {}
    for name, fn in (("ingest", cmd_ingest), ("label", cmd_label), ("train", cmd_train), ("predict", cmd_predict),
                     ("sweep", cmd_sweep), ("position", cmd_position), ("report", cmd_report)):
        log.info("stage %s", name)
        out[name] = fn(cfg)
    return out


COMMANDS = {
    "ingest": cmd_ingest,
    "label": cmd_label,
    "train": cmd_train,
    "predict": cmd_predict,
    "position": cmd_position,
    "sweep": cmd_sweep,
    "report": cmd_report,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnss-mlwls", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0])
        p.add_argument("--config", required=True, help="YAML experiment configuration")
        p.add_argument("--threads", type=int, help="worker cap for labeling and forest training")
        p.add_argument("--seed-override", type=int, help="replace the configured seed")
        p.add_argument("--constellations", help="comma-separated subset, e.g. GPS or GPS,BeiDou")
        p.add_argument("--activation", choices=[a.value for a in Activation])
        p.add_argument("--b", type=float, help="sigmoid steepness")
        p.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("show-config", help="print the default configuration").add_argument("--config")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "show-config":
            cfg = load_config(args.config) if args.config else config_from_dict({})
            print(dump_config(cfg), end="")
            return EXIT_OK
        cfg = _apply_overrides(load_config(args.config), args)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (P.DataError, RinexParseError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
