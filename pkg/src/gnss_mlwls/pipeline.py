"""Experiment stages: ingest, features, labels, training, scoring, positioning, sweep.

Each stage reads files written by earlier stages in the output directory
and writes its own, so the CLI commands can run independently. All floats
are written with ``repr`` and JSON with sorted keys, making reruns
byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .activation import (
    ActivationSpec,
    SweepResult,
    sweep_sigmoid_b,
    weighted_fix,
)
from .atmosphere import correct_measurements
from .config import ConfigError, ExperimentConfig
from .ensemble import EnsembleModel, accuracy, fit_model
from .evaluation import EvalReport, EvalRow, errors_3d
from .features import FEATURE_NAMES, DopplerSign, EpochFeatures, FeatureRecord, Grouping, extract_epoch
from .ingest import (
    CanonicalFormatError,
    ParseStats,
    RinexParseError,
    StateStats,
    TruthFormat,
    TruthParseError,
    align_truth,
    attach_states,
    parse_ground_truth,
    parse_nav_iono,
    parse_rinex_nav,
    parse_rinex_obs,
    read_canonical_csv,
    write_canonical_csv,
)
from .labeling import BestSetResult, assign_labels, label_epoch, sort_key
from .measurements import MeasurementSet
from .solver import SolverError, solve_ols

SPLITS = ("train", "test")


class DataError(Exception):
    """Missing or malformed input data (CLI exit code 3)."""


# ---------------------------------------------------------------- file helpers


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    return path


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n"


def _need_file(path: Optional[Path], what: str) -> Path:
    if path is None:
        raise ConfigError(f"no path configured for {what}")
    if not path.exists():
        raise DataError(f"{what} not found: {path}")
    return path


def epochs_path(cfg: ExperimentConfig, split: str) -> Path:
    return cfg.out / f"{split}_epochs.csv"


def truth_path(cfg: ExperimentConfig, split: str) -> Path:
    return cfg.out / f"{split}_truth.csv"


def model_path(cfg: ExperimentConfig, constellation: str) -> Path:
    return cfg.out / "models" / f"{cfg.model.kind}_{constellation}.json"


# ---------------------------------------------------------------- ingest


@dataclass
class IngestResult:
    split: str
    epochs: int
    signals: int
    dropped_unaligned: int
    parse_warnings: int
    states: dict


def ingest_split(cfg: ExperimentConfig, split: str) -> IngestResult:
    """RINEX (or canonical CSV) plus truth to the split's canonical CSV and truth CSV."""
    paths = getattr(cfg, split)
    consts = cfg.constellation_enums()
    truth_file = _need_file(cfg.path(paths.truth), f"{split} truth")
    try:
        truth = parse_ground_truth(truth_file, TruthFormat(paths.truth_format))
    except ValueError as exc:
        raise DataError(f"{truth_file}: {exc}") from exc

    pstats = ParseStats()
    sstats = StateStats()
    try:
        if paths.canonical:
            sets = read_canonical_csv(_need_file(cfg.path(paths.canonical), f"{split} canonical CSV"), consts)
            aligned = align_truth(sets, truth, cfg.max_gap_s)
            pairs = aligned.pairs
        else:
            obs_file = _need_file(cfg.path(paths.obs), f"{split} observation file")
            nav_file = _need_file(cfg.path(paths.nav), f"{split} navigation file")
            epochs = parse_rinex_obs(obs_file, pstats)
            if not epochs:
                raise DataError(f"{obs_file}: no GPS or BeiDou observations")
            ephs = parse_rinex_nav(nav_file, pstats)
            iono = parse_nav_iono(nav_file) if cfg.solver.atmosphere else None
            for ep in epochs:
                ep.signals = [s for s in ep.signals if s.constellation in consts]
            aligned = align_truth([e for e in epochs if e.signals], truth, cfg.max_gap_s)
            pairs = []
            for ep, pos in aligned.pairs:
                ms = attach_states([ep], ephs, stats=sstats)
                if ms and cfg.solver.atmosphere:
                    ms = [_atmosphere_corrected(ms[0], iono)]
                if ms:
                    pairs.append((ms[0], pos))
    except (RinexParseError, CanonicalFormatError) as exc:
        raise DataError(str(exc)) from exc
    if not pairs:
        raise DataError(f"{split}: no epochs left after aligning with ground truth")

    sets = [ms for ms, _ in pairs]
    _write(epochs_path(cfg, split), write_canonical_csv(sets))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "x_m", "y_m", "z_m"])
    for ms, pos in pairs:
        w.writerow([repr(float(ms.time))] + [repr(float(v)) for v in pos])
    _write(truth_path(cfg, split), buf.getvalue())
    res = IngestResult(split, len(sets), sum(len(s) for s in sets), aligned.dropped, pstats.warning_count,
                       {"kept": sstats.kept, "no_ephemeris": sstats.no_ephemeris, "stale": sstats.stale,
                        "failed": sstats.failed})
    return res


def _atmosphere_corrected(ms: MeasurementSet, iono) -> MeasurementSet:
    try:
        fix = solve_ols(ms)
    except SolverError:
        return ms
    return correct_measurements(ms, fix.position, iono) if fix.converged else ms


def load_split(cfg: ExperimentConfig, split: str) -> tuple[list[MeasurementSet], list[np.ndarray]]:
    """Canonical epochs of a split with their truth positions, constellation-filtered."""
    ep_file = _need_file(epochs_path(cfg, split), f"{split} epochs (run ingest first)")
    tr_file = _need_file(truth_path(cfg, split), f"{split} truth (run ingest first)")
    try:
        sets = read_canonical_csv(ep_file, cfg.constellation_enums())
        truth = {p.time: p.ecef for p in parse_ground_truth(tr_file, TruthFormat.CSV_ECEF)}
    except (CanonicalFormatError, TruthParseError) as exc:
        raise DataError(str(exc)) from exc
    missing = [ms.time for ms in sets if ms.time not in truth]
    if missing:
        raise DataError(f"{split}: epoch {missing[0]!r} has no truth row")
    return sets, [truth[ms.time] for ms in sets]


# ---------------------------------------------------------------- features


@dataclass
class ProcessedEpoch:
    time: float
    raw: MeasurementSet
    truth: np.ndarray
    features: Optional[EpochFeatures]  # None when the epoch cannot be solved

    @property
    def solved(self) -> bool:
        return self.features is not None


WARM_START_GAP_S = 30.0  # older solutions are not used as a starting point


def process_epochs(sets: Sequence[MeasurementSet], truths: Sequence, cfg: ExperimentConfig) -> list[ProcessedEpoch]:
    """Baseline solve, elevation mask and features for every epoch."""
    fs = cfg.features
    out = []
    prev = None
    warm = None  # (time, state) of the last solved epoch
    for ms, truth in zip(sets, truths):
        previous = prev if prev is not None and 0.0 < ms.time - prev.time <= fs.max_rate_dt_s else None
        initial = warm[1] if warm is not None and 0.0 < ms.time - warm[0] <= WARM_START_GAP_S else None
        try:
            feats = extract_epoch(ms, previous, fs.elevation_mask_deg, Grouping(fs.clock_grouping),
                                  DopplerSign(fs.doppler_sign), initial, cfg.solver.tol, cfg.solver.max_iter)
            if not feats.solution.converged:
                feats = None
        except SolverError:
            feats = None
        out.append(ProcessedEpoch(ms.time, ms, np.asarray(truth, dtype=float), feats))
        if feats is not None:
            warm = (ms.time, feats.solution.state)
        prev = ms
    return out


# ---------------------------------------------------------------- labels


@dataclass
class EpochLabels:
    time: float
    n_signals: int
    best: BestSetResult
    samples: list  # LabeledSample


def _label_one(args) -> BestSetResult:
    ms, truth, initial, cap, beam, tol, max_iter = args
    return label_epoch(ms, truth, cap, beam, initial, tol, max_iter)


def label_epochs(processed: Sequence[ProcessedEpoch], cfg: ExperimentConfig, threads: int = 1) -> list[EpochLabels]:
    """Best-subset labels for every solved epoch (beam search above the enumeration cap)."""
    solved = [p for p in processed if p.solved]
    jobs = [(p.features.measurements, p.truth, p.features.solution.state, cfg.labeling.enumeration_cap,
             cfg.labeling.beam_width, cfg.solver.tol, cfg.solver.max_iter) for p in solved]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            bests = list(pool.map(_label_one, jobs, chunksize=8))
    else:
        bests = [_label_one(j) for j in jobs]
    out = []
    for p, best in zip(solved, bests):
        out.append(EpochLabels(p.time, len(p.features.records), best, assign_labels(best, p.features.records)))
    return out


LABEL_EXTRA = ("label", "best_set_error_3d_m", "approx", "epoch_signals")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def labels_csv(labels: Sequence[EpochLabels]) -> str:
    cols = FeatureRecord.columns()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols + list(LABEL_EXTRA))
    for e in labels:
        for s in e.samples:
            w.writerow([_fmt(getattr(s.record, c)) for c in cols]
                       + [s.label, repr(float(s.best_set_error_3d)), int(s.approx), e.n_signals])
    return buf.getvalue()


def bestset_csv(labels: Sequence[EpochLabels]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "error_3d_m", "n_signals", "subset_size", "subsets_evaluated", "approx", "subset"])
    for e in labels:
        b = e.best
        subset = ";".join(f"{c}:{s}" for c, s in b.subset)
        w.writerow([repr(float(e.time)), repr(float(b.error_3d)) if b.labeled else "", e.n_signals,
                    len(b.subset), b.subsets_evaluated, int(b.approx), subset])
    return buf.getvalue()


@dataclass
class LabelTable:
    X: np.ndarray
    y: np.ndarray
    constellation: np.ndarray
    time: np.ndarray
    epoch_signals: np.ndarray
    trainable: np.ndarray

    def select(self, mask) -> "LabelTable":
        return LabelTable(self.X[mask], self.y[mask], self.constellation[mask], self.time[mask],
                          self.epoch_signals[mask], self.trainable[mask])


def read_labels(path: Path) -> LabelTable:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        cols = reader.fieldnames or []
        for needed in list(FEATURE_NAMES) + ["label", "constellation", "epoch_time", "epoch_signals", "ml_usable",
                                             "rate_present"]:
            if needed not in cols:
                raise DataError(f"{path}: missing column {needed!r}")
        X, y, c, t, n, tr = [], [], [], [], [], []
        for row in reader:
            try:
                X.append([float(row[k]) for k in FEATURE_NAMES])
                y.append(int(row["label"]))
                t.append(float(row["epoch_time"]))
                n.append(int(row["epoch_signals"]))
                tr.append(row["ml_usable"] == "1" and row["rate_present"] == "1")
            except ValueError as exc:
                raise DataError(f"{path}: {exc}") from exc
            c.append(row["constellation"])
    return LabelTable(np.array(X).reshape(len(X), len(FEATURE_NAMES)), np.array(y), np.array(c), np.array(t),
                      np.array(n), np.array(tr, dtype=bool))


# ---------------------------------------------------------------- training


def validation_cut(times: np.ndarray, fraction: float) -> float:
    """Epoch time from which the last ``fraction`` of epochs is held out."""
    uniq = np.unique(times)
    k = int(round(len(uniq) * (1.0 - fraction)))
    k = min(max(k, 1), len(uniq) - 1) if len(uniq) > 1 else len(uniq)
    return float(uniq[k]) if k < len(uniq) else math.inf


def model_params(cfg: ExperimentConfig, constellation: str) -> dict:
    params = cfg.model.params(constellation)
    if "rng_seed" not in cfg.model.per_constellation.get(constellation, {}):
        params["rng_seed"] = cfg.seed
    return params


def train_models(table: LabelTable, cfg: ExperimentConfig, threads: int = 1) -> tuple[dict, dict]:
    """One model per configured constellation from trainable samples of large-enough epochs."""
    keep = table.trainable & (table.epoch_signals >= cfg.labeling.min_epoch_signals)
    if cfg.sweep.mode == "validation":
        keep &= table.time < validation_cut(table.time, cfg.sweep.validation_fraction)
    models, report = {}, {}
    for const in cfg.constellation_enums():
        m = keep & (table.constellation == const.value)
        X, y = table.X[m], table.y[m]
        if len(y) == 0 or len(np.unique(y)) < 2:
            raise DataError(f"{const.value}: training labels need both classes ({len(y)} samples)")
        model = fit_model(cfg.model.kind, X, y, model_params(cfg, const.value), threads, FEATURE_NAMES, const.value)
        acc = accuracy(model.predict_score(X), y, table.epoch_signals[m], cfg.labeling.min_epoch_signals)
        models[const.value] = model
        report[const.value] = {"samples": int(len(y)), "positive_fraction": float(y.mean()),
                               "train_accuracy": acc, "learners": len(model.learners)}
    return models, report


def load_models(cfg: ExperimentConfig) -> dict:
    models = {}
    for const in cfg.constellation_enums():
        p = _need_file(model_path(cfg, const.value), f"{const.value} model (run train first)")
        try:
            models[const.value] = EnsembleModel.from_json(p.read_text(encoding="utf-8"))
        except (ValueError, KeyError) as exc:
            raise DataError(f"{p}: {exc}") from exc
    return models


def score_table(table: LabelTable, models: dict, min_epoch_signals: int) -> dict:
    """Accuracy per constellation on a labeled table (ML-usable samples only)."""
    out = {}
    for c, model in models.items():
        m = (table.constellation == c) & table.trainable
        if not m.any() or not (table.epoch_signals[m] >= min_epoch_signals).any():
            continue
        out[c] = accuracy(model.predict_score(table.X[m]), table.y[m], table.epoch_signals[m], min_epoch_signals)
    return out


# ---------------------------------------------------------------- scoring and positioning


def score_epoch(features: EpochFeatures, models: dict) -> np.ndarray:
    """Model scores for the masked signals; unscorable signals get the epoch's mean score."""
    recs = features.records
    s = np.full(len(recs), np.nan)
    for c, model in models.items():
        idx = [i for i, r in enumerate(recs) if r.constellation == c and r.ml_usable]
        if idx:
            s[idx] = model.predict_score(np.array([recs[i].vector() for i in idx]))
    if np.isnan(s).all():
        return np.ones(len(recs))
    s[np.isnan(s)] = float(np.nanmean(s))
    return s


def scores_csv(processed: Sequence[ProcessedEpoch], scores: Sequence) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "constellation", "svid", "score", "ml_usable"])
    for p, s in zip(processed, scores):
        if s is None:
            continue
        for r, v in zip(p.features.records, s):
            w.writerow([repr(float(p.time)), r.constellation, r.svid, repr(float(v)), int(r.ml_usable)])
    return buf.getvalue()


def method_name(spec: ActivationSpec) -> str:
    if spec.kind.value == "sigmoid":
        return f"sigmoid_b{spec.b:g}"
    return spec.kind.value


def position(processed: Sequence[ProcessedEpoch], scores: Sequence, specs: Sequence[ActivationSpec],
             cfg: ExperimentConfig, best: Optional[dict] = None) -> tuple[EvalReport, dict]:
    """Per-epoch errors for the constant baseline, each activation and the best-set oracle.

    Returns the report and the per-method weight arrays (for histograms).
    """
    rep = EvalReport(meta={"elevation_mask_deg": cfg.features.elevation_mask_deg,
                           "constellations": list(cfg.constellations), "model": cfg.model.kind})
    weights = {}
    all_specs = [ActivationSpec("constant")] + [s for s in specs if s.kind.value != "constant"]
    for spec in all_specs:
        name = "constant" if spec.kind.value == "constant" else method_name(spec)
        ws = []
        for p, s in zip(processed, scores):
            if not p.solved:
                rep.add(EvalRow(p.time, name, math.nan, len(p.raw), False))
                continue
            fix = weighted_fix(p.features.measurements, s, spec, p.features.solution.state,
                               cfg.solver.tol, cfg.solver.max_iter)
            ws.append(fix.weights)
            if fix.solved:
                err = float(errors_3d(fix.solution.position, p.truth)[0])
                rep.add(EvalRow(p.time, name, err, len(p.features.records), True, fix.fallback))
            else:
                rep.add(EvalRow(p.time, name, math.nan, len(p.features.records), False, True))
        weights[name] = np.concatenate(ws) if ws else np.zeros(0)
    if best is not None:
        for p in processed:
            b = best.get(p.time)
            ok = b is not None and b.labeled
            rep.add(EvalRow(p.time, "best_set", float(b.error_3d) if ok else math.nan,
                            len(p.features.records) if p.solved else len(p.raw), ok))
    return rep.finalize(), weights


def weight_histogram_csv(weights: dict, bins: int = 20) -> str:
    edges = np.linspace(0.0, 1.0, bins + 1)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "bin_lo", "bin_hi", "count"])
    for name, ws in weights.items():
        counts, _ = np.histogram(np.clip(ws, 0.0, 1.0), bins=edges)
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([name, repr(float(lo)), repr(float(hi)), int(c)])
    return buf.getvalue()


def run_sweep(processed: Sequence[ProcessedEpoch], scores: Sequence, cfg: ExperimentConfig,
              grid: Optional[Sequence[float]] = None, mode: str = "test") -> SweepResult:
    use = [(p, s) for p, s in zip(processed, scores) if p.solved]
    if not use:
        raise DataError("no solvable epochs to sweep over")
    return sweep_sigmoid_b([s for _, s in use], [p.features.measurements for p, _ in use],
                           [p.truth for p, _ in use], grid if grid is not None else cfg.sweep.grid(),
                           [p.features.solution.state for p, _ in use], cfg.solver.tol, cfg.solver.max_iter,
                           mode=mode)


def score_processed(processed: Sequence[ProcessedEpoch], models: dict) -> list:
    return [score_epoch(p.features, models) if p.solved else None for p in processed]


def read_bestset(path: Path) -> dict:
    """time -> :class:`BestSetResult` from a best-set CSV."""
    out = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            try:
                subset = tuple(
                    (c, int(s)) for c, s in (item.split(":") for item in row["subset"].split(";") if item)
                )
                err = float(row["error_3d_m"]) if row["error_3d_m"] else math.inf
                out[float(row["time"])] = BestSetResult(tuple(sorted(subset, key=sort_key)), err,
                                                        int(row["subsets_evaluated"]), row["approx"] == "1")
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}: {exc}") from exc
    return out
