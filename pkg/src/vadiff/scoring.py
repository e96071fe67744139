"""Per-batch anomaly decisions from reconstruction error.

Each batch of segments is partially noised, reconstructed through the
reverse process, and scored by per-instance MSE.  The decision threshold
is data-driven and batch-local: l_th = mu_p + k * sigma_p over the
batch's own losses, with strictly-greater comparison for the abnormal
flag.  Raw MSE doubles as the continuous score for ROC evaluation; k
moves only the flags.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import DataError, FeatureSet, make_batches
from .network import DenoiserParams, Preconditioner, as_denoiser
from .rng import Rng
from .sampling import partial_reconstruct


@dataclass(frozen=True)
class ScoringConfig:
    start_index: int = 9  # schedule index of the corruption level
    k: float = 1.0
    batch_size: int = 8192
    order: int = 4

    def __post_init__(self):
        if self.start_index < 0:
            raise ValueError(f"start_index must be >= 0, got {self.start_index}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if not np.isfinite(self.k):
            raise ValueError(f"k must be finite, got {self.k}")
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")


@dataclass
class BatchDecision:
    losses: np.ndarray  # per-instance MSE
    mu_p: float
    sigma_p: float
    l_th: float
    flags: np.ndarray  # per-instance bool, True = abnormal


def mse_per_instance(fea: np.ndarray, fea_hat: np.ndarray) -> np.ndarray:
    """Mean squared error per row, reduced in float64."""
    fea = np.asarray(fea)
    fea_hat = np.asarray(fea_hat)
    if fea.shape != fea_hat.shape:
        raise ValueError(f"shape mismatch: {fea.shape} vs {fea_hat.shape}")
    diff = fea.astype(np.float64) - fea_hat.astype(np.float64)
    return np.mean(diff * diff, axis=1)


def batch_threshold(losses: np.ndarray, k: float) -> tuple[float, float, float]:
    """(mu_p, sigma_p, l_th) with population (divide-by-N) deviation."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.ndim != 1 or losses.size < 2:
        raise ValueError(f"need at least 2 losses, got shape {losses.shape}")
    mu = float(np.mean(losses))
    sigma = float(np.sqrt(np.mean((losses - mu) ** 2)))
    return mu, sigma, mu + k * sigma


def score_batch(params: DenoiserParams, p: Preconditioner, sigmas: np.ndarray,
                cfg: ScoringConfig, batch: np.ndarray, rng: Rng) -> BatchDecision:
    """Noise, reconstruct, and threshold one batch of feature rows."""
    batch = np.asarray(batch)
    if batch.ndim != 2 or batch.shape[0] < 2:
        raise ValueError(f"batch must be 2-D with >= 2 rows, got shape {batch.shape}")
    if cfg.start_index >= len(sigmas) - 1:
        raise ValueError(
            f"start_index {cfg.start_index} outside the schedule's {len(sigmas) - 1} steps"
        )
    recon = partial_reconstruct(as_denoiser(params, p), batch, sigmas,
                                cfg.start_index, rng, order=cfg.order)
    losses = mse_per_instance(batch, recon)
    if not np.isfinite(losses).all():
        raise FloatingPointError("non-finite reconstruction loss")
    mu, sigma, l_th = batch_threshold(losses, cfg.k)
    return BatchDecision(losses, mu, sigma, l_th, losses > l_th)


@dataclass
class DatasetScores:
    mse: np.ndarray        # (n_segments,) continuous scores
    flags: np.ndarray      # (n_segments,) bool
    batch_ids: np.ndarray  # (n_segments,) int
    l_th: np.ndarray       # (n_segments,) threshold of the segment's batch
    decisions: list[BatchDecision]


def score_dataset(params: DenoiserParams, p: Preconditioner, sigmas: np.ndarray,
                  cfg: ScoringConfig, fs: FeatureSet, rng: Rng,
                  center: np.ndarray | None = None) -> DatasetScores:
    """Score every segment, batching in manifest order (never shuffled).

    A final short batch still gets its own mu_p / sigma_p.  Each batch
    draws its noise from an independent stream split off `rng`, so batch
    results do not depend on scoring order.
    """
    x = fs.features
    if center is not None:
        x = x - center.astype(x.dtype)
    n = x.shape[0]
    batches = make_batches(n, cfg.batch_size, shuffle=False)
    mse = np.empty(n, dtype=np.float64)
    flags = np.empty(n, dtype=bool)
    batch_ids = np.empty(n, dtype=np.int64)
    l_th = np.empty(n, dtype=np.float64)
    decisions = []
    for b, idx in enumerate(batches):
        decision = score_batch(params, p, sigmas, cfg, x[idx], rng.split(f"batch{b}"))
        mse[idx] = decision.losses
        flags[idx] = decision.flags
        batch_ids[idx] = b
        l_th[idx] = decision.l_th
        decisions.append(decision)
    return DatasetScores(mse, flags, batch_ids, l_th, decisions)


_CSV_HEADER = ["video_id", "segment_index", "mse", "flagged", "batch_id", "l_th"]


def write_scores_csv(path, fs: FeatureSet, scores: DatasetScores) -> None:
    """One row per segment: video_id, index within the video, score, decision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for rec in fs.manifest:
            for local in range(rec.segment_count):
                g = rec.segment_offset + local
                writer.writerow([
                    rec.video_id,
                    local,
                    repr(float(scores.mse[g])),
                    int(scores.flags[g]),
                    int(scores.batch_ids[g]),
                    repr(float(scores.l_th[g])),
                ])


def read_scores_csv(path) -> dict[str, np.ndarray]:
    """Per-video arrays of segment scores, ordered by segment_index."""
    rows: dict[str, list[tuple[int, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _CSV_HEADER:
            raise DataError(f"unexpected score CSV header {header!r}")
        for row in reader:
            if len(row) != len(_CSV_HEADER):
                raise DataError(f"malformed score CSV row {row!r}")
            rows.setdefault(row[0], []).append((int(row[1]), float(row[2])))
    out = {}
    for vid, pairs in rows.items():
        pairs.sort()
        indices = [i for i, _ in pairs]
        if indices != list(range(len(indices))):
            raise DataError(f"video {vid!r}: segment indices are not contiguous from 0")
        out[vid] = np.array([s for _, s in pairs], dtype=np.float64)
    return out
