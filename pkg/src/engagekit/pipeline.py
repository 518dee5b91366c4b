"""Batch orchestration: parallel feature extraction, splits, evaluation,
ablation and the sequential-vs-parallel benchmark.

Feature extraction fans out per-video tasks to a worker pool and reassembles
results in manifest order, so the output is bit-identical to a sequential
run for every worker count. Per-video failures become error rows in the
feature store instead of aborting the batch.
"""

from __future__ import annotations

import csv
import io
import json
import multiprocessing
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import ensemble, physio, visual
from .config import PipelineConfig
from .datamodel import (
    DataError,
    EngagementLabel,
    VideoRecord,
    parse_manifest,
    parse_video_record,
)
from .ensemble import FusedModel
from .geometry import CameraModel
from .physio import PhysioVideoFeatures
from .visual import VisualVideoFeatures


@dataclass(frozen=True)
class VideoFeatureRow:
    """Extraction outcome for one video: features, or an error record."""

    video_id: str
    visual: Optional[VisualVideoFeatures]
    physio: Optional[PhysioVideoFeatures]
    label: Optional[EngagementLabel]
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class FeatureStore:
    """Per-video features keyed by video_id, in manifest order."""

    rows: tuple[VideoFeatureRow, ...]
    config: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        ids = [r.video_id for r in self.rows]
        if len(set(ids)) != len(ids):
            dupes = sorted({v for v in ids if ids.count(v) > 1})
            raise DataError(f"duplicate video ids in store: {dupes}")

    def __len__(self) -> int:
        return len(self.rows)

    def ok_rows(self) -> list[VideoFeatureRow]:
        return [r for r in self.rows if r.ok]

    def labeled_rows(self) -> list[VideoFeatureRow]:
        return [r for r in self.rows if r.ok and r.label is not None]

    def by_id(self) -> dict[str, VideoFeatureRow]:
        return {r.video_id: r for r in self.rows}


STORE_COLUMNS = ("video_id", *visual.FEATURE_NAMES, *physio.FEATURE_NAMES, "label", "status")


def save_store_csv(store: FeatureStore, path: "Path | str") -> None:
    """One CSV row per video; the effective config is echoed in a comment line."""
    buf = io.StringIO()
    if store.config is not None:
        buf.write("# config: " + json.dumps(store.config, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(STORE_COLUMNS)
    for r in store.rows:
        feats: list = [""] * (len(visual.FEATURE_NAMES) + len(physio.FEATURE_NAMES))
        if r.ok:
            # repr of a Python float round-trips exactly; the store must reload bit-identical
            feats = [repr(float(v)) for v in r.visual.vector()] + [repr(float(v)) for v in r.physio.vector()]
        label = "" if r.label is None else str(r.label.level)
        writer.writerow([r.video_id, *feats, label, r.status])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_store_csv(path: "Path | str") -> FeatureStore:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read feature store {path}: {e}") from e
    config = None
    lines = text.splitlines()
    data_lines = []
    for line in lines:
        if line.startswith("# config: "):
            config = json.loads(line[len("# config: "):])
        elif line.strip():
            data_lines.append(line)
    reader = csv.reader(data_lines)
    header = next(reader, None)
    if header is None or tuple(header) != STORE_COLUMNS:
        raise DataError(f"feature store header mismatch in {path}")
    nv, npz = len(visual.FEATURE_NAMES), len(physio.FEATURE_NAMES)
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if len(row) != len(STORE_COLUMNS):
            raise DataError(f"feature store line {line_no}: expected {len(STORE_COLUMNS)} columns")
        vid = row[0]
        status = row[-1]
        label = EngagementLabel(int(row[-2])) if row[-2] != "" else None
        if status == "ok":
            values = [float(v) for v in row[1 : 1 + nv + npz]]
            vis = VisualVideoFeatures(
                gaze_props=tuple(values[0:5]),
                head_props=tuple(values[5:12]),
                eye_props=tuple(values[12:15]),
            )
            phy = PhysioVideoFeatures(*values[nv : nv + npz])
            rows.append(VideoFeatureRow(vid, vis, phy, label, status))
        else:
            rows.append(VideoFeatureRow(vid, None, None, label, status))
    return FeatureStore(rows=tuple(rows), config=config)


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------


def _camera_for(cfg: PipelineConfig, record: VideoRecord) -> Optional[CameraModel]:
    if cfg.focal_length_px is None:
        return None
    w, h = record.image_size
    return CameraModel(cfg.focal_length_px, (w / 2.0, h / 2.0))


def extract_record_features(
    record: VideoRecord, cfg: PipelineConfig, label: Optional[EngagementLabel] = None
) -> VideoFeatureRow:
    """Both modality feature sets for an in-memory record."""
    cam = _camera_for(cfg, record)
    vis = visual.extract_video_features(record, cfg.visual, cam)
    phy = physio.extract_physio_features(record.trace, cfg.physio)
    if not phy.is_valid:
        raise DataError(
            f"heart-rate estimate {phy.hr_trend_bpm:.1f} bpm outside plausible range"
        )
    return VideoFeatureRow(
        video_id=record.video_id,
        visual=vis,
        physio=phy,
        label=label if label is not None else record.label,
        status="ok",
    )


def _extract_task(task: tuple[str, str, Optional[int], PipelineConfig]) -> VideoFeatureRow:
    video_id, path, level, cfg = task
    label = EngagementLabel(level) if level is not None else None
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        return VideoFeatureRow(video_id, None, None, label, f"error: unreadable file: {e}")
    try:
        record = parse_video_record(text)
        return extract_record_features(record, cfg, label)
    except DataError as e:
        return VideoFeatureRow(video_id, None, None, label, f"error: {e}")
    except Exception as e:  # defensive: a bad video must not abort the batch
        return VideoFeatureRow(video_id, None, None, label, f"error: {type(e).__name__}: {e}")


def _pool_context():
    try:
        return multiprocessing.get_context("fork")
    except ValueError:  # platforms without fork
        return multiprocessing.get_context()


def _extract_from_entries(
    entries: Sequence[tuple[str, str, Optional[int]]], base_dir: Path, cfg: PipelineConfig
) -> FeatureStore:
    tasks = []
    for vid, rel_path, level in entries:
        p = Path(rel_path)
        if not p.is_absolute():
            p = base_dir / p
        tasks.append((vid, str(p), level, cfg))
    if cfg.worker_count == 1 or len(tasks) <= 1:
        rows = [_extract_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(
            max_workers=min(cfg.worker_count, len(tasks)), mp_context=_pool_context()
        ) as pool:
            rows = list(pool.map(_extract_task, tasks))
    return FeatureStore(rows=tuple(rows), config=cfg.to_dict())


def extract_features(manifest_path: "Path | str", cfg: PipelineConfig) -> FeatureStore:
    """Extract visual + physiological features for every manifest entry.

    Work is distributed over cfg.worker_count processes; results are
    reassembled in manifest order, making the store independent of the worker
    count. Raises :class:`DataError` if the manifest is unreadable or every
    single video failed.
    """
    manifest_path = Path(manifest_path)
    try:
        text = manifest_path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read manifest {manifest_path}: {e}") from e
    parsed = parse_manifest(text)
    if not parsed:
        warnings.warn(f"manifest {manifest_path} lists no videos", stacklevel=2)
        return FeatureStore(rows=(), config=cfg.to_dict())
    entries = [(vid, path, label.level) for vid, path, label in parsed]
    store = _extract_from_entries(entries, manifest_path.parent, cfg)
    if store.rows and not store.ok_rows():
        first = store.rows[0].status
        raise DataError(f"all {len(store)} videos failed extraction; first failure: {first}")
    return store


# ---------------------------------------------------------------------------
# Splits, evaluation, training
# ---------------------------------------------------------------------------


def split_train_eval(
    store: FeatureStore, ratio: float = 0.8, seed: int = 0
) -> tuple[list[str], list[str]]:
    """Stratified train/test id split over the labeled, successfully extracted rows."""
    if not 0 < ratio < 1:
        raise DataError(f"split ratio must lie in (0, 1), got {ratio}")
    rows = store.labeled_rows()
    if not rows:
        raise DataError("store has no labeled rows to split")
    rng = np.random.default_rng(seed)
    train: list[str] = []
    test: list[str] = []
    by_label: dict[int, list[str]] = {}
    for r in sorted(rows, key=lambda r: r.video_id):
        by_label.setdefault(r.label.level, []).append(r.video_id)
    for level in sorted(by_label):
        ids = np.array(by_label[level])
        if len(ids) < 2:
            warnings.warn(
                f"class {level} has {len(ids)} sample(s); stratification degraded", stacklevel=2
            )
            train.extend(ids.tolist())
            continue
        rng.shuffle(ids)
        n_train = int(round(ratio * len(ids)))
        n_train = min(max(n_train, 1), len(ids) - 1)
        train.extend(ids[:n_train].tolist())
        test.extend(ids[n_train:].tolist())
    return train, test


def training_matrices(
    store: FeatureStore, ids: Sequence[str]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(visual X, physio X, y) for the given ids, in the given order."""
    index = store.by_id()
    vx, px, y = [], [], []
    for vid in ids:
        row = index.get(vid)
        if row is None or not row.ok or row.label is None:
            raise DataError(f"video {vid!r} is not a labeled, successfully extracted row")
        vx.append(row.visual.vector())
        px.append(row.physio.vector())
        y.append(row.label.level)
    return np.array(vx), np.array(px), np.array(y, dtype=int)


@dataclass(frozen=True)
class EvalReport:
    """Accuracy, 4x4 confusion (rows = true class), and per-class precision/recall."""

    accuracy: float
    confusion: tuple[tuple[int, ...], ...]
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    fold_accuracies: Optional[tuple[float, ...]] = None

    def format(self) -> str:
        lines = [f"accuracy: {self.accuracy:.4f}"]
        if self.fold_accuracies is not None:
            mean = sum(self.fold_accuracies) / len(self.fold_accuracies)
            folds = ", ".join(f"{a:.3f}" for a in self.fold_accuracies)
            lines.append(f"fold accuracies (mean {mean:.4f}): {folds}")
        lines.append("confusion (rows = true, cols = predicted):")
        for level, row in enumerate(self.confusion):
            lines.append(f"  {level}: " + " ".join(f"{c:5d}" for c in row))
        lines.append(
            "precision: " + " ".join(f"{p:.3f}" for p in self.precision)
            + " | recall: " + " ".join(f"{r:.3f}" for r in self.recall)
        )
        return "\n".join(lines)


def evaluate(predictions: Sequence[int], labels: Sequence[int]) -> EvalReport:
    """Accuracy plus confusion-derived per-class precision and recall."""
    preds = [p.level if isinstance(p, EngagementLabel) else int(p) for p in predictions]
    truth = [t.level if isinstance(t, EngagementLabel) else int(t) for t in labels]
    if len(preds) != len(truth):
        raise DataError(f"prediction/label length mismatch: {len(preds)} vs {len(truth)}")
    if not preds:
        raise DataError("cannot evaluate an empty prediction set")
    confusion = np.zeros((4, 4), dtype=int)
    for p, t in zip(preds, truth):
        confusion[t, p] += 1
    correct = int(np.trace(confusion))
    col = confusion.sum(axis=0)
    row = confusion.sum(axis=1)
    precision = tuple(confusion[k, k] / col[k] if col[k] else 0.0 for k in range(4))
    recall = tuple(confusion[k, k] / row[k] if row[k] else 0.0 for k in range(4))
    return EvalReport(
        accuracy=correct / len(preds),
        confusion=tuple(tuple(int(c) for c in r) for r in confusion),
        precision=precision,
        recall=recall,
    )


def train_full(store: FeatureStore, cfg: PipelineConfig, ids: Optional[Sequence[str]] = None) -> FusedModel:
    """Stacked fusion model over the given ids (default: all labeled rows)."""
    if ids is None:
        ids = [r.video_id for r in store.labeled_rows()]
    vx, px, y = training_matrices(store, ids)
    return ensemble.train_stacked(
        vx, px, y, cfg.ensemble, seed=cfg.seed, config_snapshot=cfg.to_dict()
    )


def cross_validate(store: FeatureStore, k: int = 10, cfg: Optional[PipelineConfig] = None) -> EvalReport:
    """Stratified k-fold cross-validation of the full stacked model.

    The headline accuracy is pooled over folds (trace / total); per-fold
    accuracies are reported alongside.
    """
    cfg = cfg or PipelineConfig()
    rows = sorted(store.labeled_rows(), key=lambda r: r.video_id)
    ids = [r.video_id for r in rows]
    if len(ids) < k:
        raise DataError(f"cross-validation needs at least {k} labeled rows, got {len(ids)}")
    vx, px, y = training_matrices(store, ids)
    folds = ensemble.stratified_fold_assignments(y, k, cfg.seed)
    all_preds = np.empty_like(y)
    fold_accs = []
    for f in range(k):
        test = folds == f
        model = ensemble.train_stacked(
            vx[~test], px[~test], y[~test], cfg.ensemble, seed=cfg.seed * 100 + f + 1
        )
        preds = ensemble.predict_engagement_batch(model, vx[test], px[test])
        all_preds[test] = preds
        fold_accs.append(float((preds == y[test]).mean()))
    report = evaluate(all_preds.tolist(), y.tolist())
    return replace(report, fold_accuracies=tuple(fold_accs))


ABLATION_ROWS = ("visual_only", "physio_only", "early_fusion", "late_fusion")


def ablate(store: FeatureStore, cfg: Optional[PipelineConfig] = None) -> list[tuple[str, float]]:
    """Accuracy of each fusion strategy on one shared stratified 80-20 split."""
    cfg = cfg or PipelineConfig()
    train_ids, test_ids = split_train_eval(store, 0.8, cfg.seed)
    if not test_ids:
        raise DataError("ablation split produced an empty test set")
    vx_tr, px_tr, y_tr = training_matrices(store, train_ids)
    vx_te, px_te, y_te = training_matrices(store, test_ids)
    p = cfg.ensemble

    visual_model = ensemble.train_adaboost(vx_tr, y_tr, p.adaboost_rounds, cfg.seed)
    acc_visual = float((visual_model.predict(vx_te) == y_te).mean())

    physio_model = ensemble.train_random_forest(px_tr, y_tr, p.rf_trees, cfg.seed, p.rf_min_leaf)
    acc_physio = float((physio_model.predict(px_te) == y_te).mean())

    early = ensemble.train_early_fusion(np.hstack([vx_tr, px_tr]), y_tr, p, cfg.seed)
    acc_early = float((early.predict(np.hstack([vx_te, px_te])) == y_te).mean())

    late = ensemble.train_stacked(vx_tr, px_tr, y_tr, p, seed=cfg.seed)
    acc_late = float((ensemble.predict_engagement_batch(late, vx_te, px_te) == y_te).mean())

    return list(zip(ABLATION_ROWS, (acc_visual, acc_physio, acc_early, acc_late)))


def format_ablation(rows: Sequence[tuple[str, float]]) -> str:
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {acc * 100:6.2f}%" for name, acc in rows)


# ---------------------------------------------------------------------------
# Sequential vs parallel benchmark
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchEntry:
    batch_size: int
    sequential_s: float
    parallel_s: float

    @property
    def speedup(self) -> float:
        return self.sequential_s / self.parallel_s


@dataclass(frozen=True)
class BenchReport:
    entries: tuple[BenchEntry, ...]
    workers: int
    cpu_count: int

    def format(self) -> str:
        lines = [
            f"workers: {self.workers} (machine has {self.cpu_count} cpus)",
            f"{'batch':>6} {'sequential_s':>13} {'parallel_s':>11} {'speedup':>8}",
        ]
        for e in self.entries:
            lines.append(
                f"{e.batch_size:>6} {e.sequential_s:>13.2f} {e.parallel_s:>11.2f} {e.speedup:>7.2f}x"
            )
        return "\n".join(lines)


DEFAULT_BENCH_BATCHES = (1, 2, 4, 8, 16, 32, 64)


def bench_parallel(
    manifest_path: "Path | str",
    batch_sizes: Sequence[int] = DEFAULT_BENCH_BATCHES,
    workers: int = 0,
    cfg: Optional[PipelineConfig] = None,
) -> BenchReport:
    """Time sequential vs pooled extraction at each batch size.

    Output equivalence is verified before any timing is reported; a mismatch
    aborts the benchmark, since correctness precedes speed.
    """
    cfg = cfg or PipelineConfig()
    workers = workers or cfg.worker_count
    manifest_path = Path(manifest_path)
    try:
        text = manifest_path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read manifest {manifest_path}: {e}") from e
    parsed = parse_manifest(text)
    entries = [(vid, path, label.level) for vid, path, label in parsed]
    if len(entries) < max(batch_sizes):
        raise DataError(
            f"corpus has {len(entries)} videos but the largest batch is {max(batch_sizes)}"
        )
    base = manifest_path.parent
    seq_cfg = replace(cfg, worker_count=1)
    par_cfg = replace(cfg, worker_count=workers)
    results = []
    for b in batch_sizes:
        subset = entries[:b]
        t0 = time.perf_counter()
        seq_store = _extract_from_entries(subset, base, seq_cfg)
        t1 = time.perf_counter()
        par_store = _extract_from_entries(subset, base, par_cfg)
        t2 = time.perf_counter()
        if seq_store.rows != par_store.rows:
            raise DataError(
                f"parallel extraction diverged from sequential at batch {b}; benchmark aborted"
            )
        results.append(BenchEntry(batch_size=b, sequential_s=t1 - t0, parallel_s=t2 - t1))
    return BenchReport(entries=tuple(results), workers=workers, cpu_count=os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# Per-video report
# ---------------------------------------------------------------------------


def report_video(
    record: VideoRecord, cfg: Optional[PipelineConfig] = None, model: Optional[FusedModel] = None
) -> str:
    """Human-readable per-video summary: categoricals, pulse features, prediction.

    Categorical lines (marked *) show the modal class and its frame
    proportion. Pulse fields are marked unavailable when the trace carries
    too few detectable beats.
    """
    cfg = cfg or PipelineConfig()
    cam = _camera_for(cfg, record)
    cats = visual.categorize_record(record, cfg.visual, cam)
    agg = visual.aggregate_video(cats)

    def modal(props: tuple[float, ...], order) -> str:
        i = int(np.argmax(props))
        return f"{order[i].value} ({props[i]:.2f})"

    lines = [
        f"video {record.video_id}: {len(record.frames)} frames @ {record.fps:g} fps "
        f"({record.duration_s:.1f} s)",
        f"  EC* {modal(agg.eye_props, visual.EYE_ORDER)}",
        f"  HP* {modal(agg.head_props, visual.HEAD_ORDER)}",
        f"  GD* {modal(agg.gaze_props, visual.GAZE_ORDER)}",
    ]
    phy: Optional[PhysioVideoFeatures] = None
    try:
        phy = physio.extract_physio_features(record.trace, cfg.physio)
    except DataError as e:
        lines.append(f"  HR  unavailable ({e})")
    if phy is not None:
        lines.append(f"  HR  {phy.hr_trend_bpm:.1f} bpm")
        lines.append(f"  PPI {phy.ppi_avg_s:.3f} s")
        lines.append(f"  SPS {phy.cs_sys:.2f}")
        lines.append(f"  DPS {phy.cs_dia:.2f}")
    if model is not None:
        if phy is not None and phy.is_valid:
            label, probs = ensemble.predict_engagement(model, agg.vector(), phy.vector())
            p = ", ".join(f"{v:.3f}" for v in probs.p)
            lines.append(f"  engagement {label.level} (p = [{p}])")
        else:
            lines.append("  engagement unavailable (needs valid pulse features)")
    return "\n".join(lines)
