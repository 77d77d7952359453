"""Data augmentation and the training loop.

Training samples are the ground-truth moving points of a scan with their
true classes.  Augmentation appends the mistakes the backbone will make at
inference time: with probability p_instance per instance one static-target
point lands next to it, and with probability p_scan the scan gains a small
static-target clutter group at a random spot.  Originals always stay an
untouched prefix of the sample.

The optimized objective per scan is cross-entropy + Lovász + the soft
consistency surrogate; history rows report the hard count-based
consistency value instead, and their total is the sum of the reported
parts.  Per-scan RNG streams derive from (seed, epoch, scan id), so any
execution order reproduces the same numbers.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, NumericsError, ValidationError
from .losses import consistency_hard, total_loss
from .metrics import mean_iou, panoptic_quality
from .neighborhood import ball_query
from .network import RadFinerNet
from .optim import AdamW
from .pipeline import evaluate_split
from .scans import MovingPrediction, RadarScan

CLUTTER_SOURCES = ("sampled", "synthetic")


@dataclass(frozen=True)
class AugmentConfig:
    p_instance: float = 0.4
    p_scan: float = 0.4
    boundary_sigma: float = 0.8      # meters; radial spread of injected boundary points
    clutter_size: tuple[int, int] = (1, 5)
    clutter_sigma: float = 1.5       # meters; spread of the injected clutter group
    clutter_source: str = "sampled"  # copy real static features, or synthesize them
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.p_instance <= 1.0 and 0.0 <= self.p_scan <= 1.0):
            raise ConfigError("augmentation probabilities must be in [0, 1]")
        if not (1 <= self.clutter_size[0] <= self.clutter_size[1] <= 5):
            raise ConfigError(f"clutter_size must sit within [1, 5], got {self.clutter_size}")
        if self.boundary_sigma <= 0 or self.clutter_sigma <= 0:
            raise ConfigError("sigma values must be positive")
        if self.clutter_source not in CLUTTER_SOURCES:
            raise ConfigError(f"clutter_source must be one of {CLUTTER_SOURCES}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 80
    batch_size: int = 64
    lr: float = 0.001
    lr_drop_epoch: int = 60
    lr_drop_factor: float = 10.0
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.lr_drop_epoch < 1:
            # a drop epoch at or past the end of the run simply never fires
            raise ConfigError(
                f"lr_drop_epoch must be >= 1, got {self.lr_drop_epoch}")
        if self.lr <= 0 or self.lr_drop_factor < 1 or self.weight_decay < 0:
            raise ConfigError("bad optimizer hyperparameters")


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    lovasz: float
    consistency: float
    total: float

    @classmethod
    def from_parts(cls, ce: float, lovasz: float, consistency: float) -> "LossBreakdown":
        return cls(ce, lovasz, consistency, ce + lovasz + consistency)


@dataclass
class AugmentedSample:
    """Moving-head training sample; rows past n_original were injected."""

    coords: np.ndarray       # (M, 2)
    features: np.ndarray     # (M, 5)
    targets: np.ndarray      # (M,) class codes
    instance_ids: np.ndarray  # (M,) ground-truth grouping; injected rows carry 0
    n_original: int

    def __len__(self) -> int:
        return len(self.targets)


def scan_rng(seed: int, epoch: int, scan_id: str) -> np.random.Generator:
    """Stream for one (seed, epoch, scan) triple, stable across processes."""
    digest = hashlib.sha256(scan_id.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(epoch), key)))


def augment_scan(scan: RadarScan, cfg: AugmentConfig,
                 rng: np.random.Generator) -> AugmentedSample:
    moving = scan.moving_mask()
    feats = scan.features()
    coords = [scan.xy[moving]]
    features = [feats[moving]]
    targets = [scan.sem[moving]]
    ids = [scan.instance[moving]]
    n_original = int(np.sum(moving))
    static_idx = np.flatnonzero(~moving)

    def append(pos, rcs, dop):
        row = np.array([pos[0], pos[1], 0.0, rcs, dop])
        coords.append(np.asarray(pos, dtype=np.float64).reshape(1, 2))
        features.append(row.reshape(1, 5))
        targets.append(np.zeros(1, dtype=np.int64))
        ids.append(np.zeros(1, dtype=np.int64))

    # boundary mimics: one static-target point next to a triggered instance.
    # The offset radius is |N(0, sigma)| with a uniform direction.
    for iid in np.unique(scan.instance[moving]):
        if rng.random() >= cfg.p_instance:
            continue
        members = np.flatnonzero(scan.instance == iid)
        src = members[rng.integers(members.size)]
        angle = rng.uniform(0.0, 2.0 * np.pi)
        radius = rng.normal(0.0, cfg.boundary_sigma)
        pos = scan.xy[src] + radius * np.array([np.cos(angle), np.sin(angle)])
        if static_idx.size:
            donor = static_idx[rng.integers(static_idx.size)]
            append(pos, scan.rcs[donor], scan.doppler[donor])
        else:
            append(pos, float(np.median(scan.rcs[members])), 0.0)

    # clutter mimic: a small static-target group somewhere in the scan
    if rng.random() < cfg.p_scan:
        k = int(rng.integers(cfg.clutter_size[0], cfg.clutter_size[1] + 1))
        lo = scan.xy.min(axis=0)
        hi = scan.xy.max(axis=0)
        center = rng.uniform(lo, hi)
        for _ in range(k):
            pos = center + rng.normal(0.0, cfg.clutter_sigma, 2)
            if cfg.clutter_source == "sampled" and static_idx.size:
                donor = static_idx[rng.integers(static_idx.size)]
                append(pos, scan.rcs[donor], scan.doppler[donor])
            else:
                base = float(np.median(scan.rcs[static_idx])) if static_idx.size else 0.0
                append(pos, rng.normal(base, 1.0), rng.normal(0.0, 0.05))

    return AugmentedSample(np.concatenate(coords, axis=0),
                           np.concatenate(features, axis=0),
                           np.concatenate(targets),
                           np.concatenate(ids),
                           n_original)


# -- training loop ------------------------------------------------------------


def _epoch_lr(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr / cfg.lr_drop_factor if epoch > cfg.lr_drop_epoch else cfg.lr


HISTORY_COLUMNS = ("epoch", "ce", "lovasz", "consistency", "total",
                   "val_PQ", "val_mIoU", "lr")


def _history_line(row: dict) -> str:
    cells = [str(row["epoch"])]
    cells += [repr(float(row[c])) for c in HISTORY_COLUMNS[1:]]
    return ",".join(cells)


def train(train_scans: list[RadarScan], net: RadFinerNet, tcfg: TrainConfig,
          acfg: AugmentConfig, out_dir=None,
          val_scans: list[RadarScan] | None = None,
          val_preds: list[MovingPrediction] | None = None,
          refine_mode: str = "split", log=None):
    """Runs the schedule and returns (net, history rows).

    history rows carry the reported (hard-consistency) loss breakdown,
    validation PQ/mIoU of the refined pipeline on the val split when one
    is given, and the learning rate in force.  With out_dir set, each
    epoch appends to history.csv and writes a ckpt_epochNN checkpoint.
    """
    if not train_scans:
        raise ValidationError("training needs at least one scan")
    if (val_scans is None) != (val_preds is None):
        raise ValidationError("validation needs both scans and predictions")
    opt = AdamW(net.params(), lr=tcfg.lr, weight_decay=tcfg.weight_decay)
    history: list[dict] = []
    hist_fh = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        hist_fh = open(out_dir / "history.csv", "w")
        hist_fh.write(",".join(HISTORY_COLUMNS) + "\n")

    try:
        for epoch in range(1, tcfg.epochs + 1):
            t0 = time.perf_counter()
            opt.lr = _epoch_lr(tcfg, epoch)
            order = np.random.default_rng(
                np.random.SeedSequence((tcfg.seed, epoch))).permutation(len(train_scans))
            sums = {"ce": 0.0, "lovasz": 0.0, "consistency": 0.0}
            n_used = 0
            for b0 in range(0, len(order), tcfg.batch_size):
                batch = order[b0:b0 + tcfg.batch_size]
                for idx in batch:
                    scan = train_scans[int(idx)]
                    sample = augment_scan(scan, acfg, scan_rng(tcfg.seed, epoch, scan.scan_id))
                    if len(sample) == 0:
                        continue
                    nb = ball_query(sample.coords, net.config.radius, net.config.n_max)
                    logits = net.forward(sample.coords, sample.features,
                                         training=True, nb=nb)
                    try:
                        total, parts = total_loss(logits, sample.targets,
                                                  sample.instance_ids)
                    except NumericsError as exc:
                        raise NumericsError(
                            f"{exc} (epoch {epoch}, batch {b0 // tcfg.batch_size})")
                    ad.backward(total * (1.0 / len(batch)))
                    hard = consistency_hard(np.argmax(logits.data, axis=1),
                                            sample.instance_ids)
                    sums["ce"] += parts["ce"]
                    sums["lovasz"] += parts["lovasz"]
                    sums["consistency"] += hard
                    n_used += 1
                opt.step()
            denom = max(n_used, 1)
            breakdown = LossBreakdown.from_parts(sums["ce"] / denom,
                                                 sums["lovasz"] / denom,
                                                 sums["consistency"] / denom)
            val_pq, val_miou = float("nan"), float("nan")
            if val_scans is not None:
                stats = evaluate_split(val_scans, val_preds, net,
                                       refine=True, refine_mode=refine_mode)
                _, val_pq = panoptic_quality(stats)
                _, val_miou = mean_iou(stats)
            row = {"epoch": epoch, "ce": breakdown.ce, "lovasz": breakdown.lovasz,
                   "consistency": breakdown.consistency, "total": breakdown.total,
                   "val_PQ": val_pq, "val_mIoU": val_miou, "lr": opt.lr}
            history.append(row)
            if hist_fh is not None:
                hist_fh.write(_history_line(row) + "\n")
                hist_fh.flush()
                net.save(out_dir / f"ckpt_epoch{epoch:02d}")
            if log is not None:
                log(f"epoch {epoch:3d}  total {breakdown.total:.4f}  "
                    f"val_PQ {val_pq:.4f}  lr {opt.lr:g}  "
                    f"({time.perf_counter() - t0:.1f}s)")
    finally:
        if hist_fh is not None:
            hist_fh.close()
    return net, history
