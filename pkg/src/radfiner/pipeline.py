"""End-to-end glue: run the classifier over backbone-selected points,
refine, assemble panoptic output, and score whole splits.

Three scoring modes cover the evaluation story:
  - majority-true baseline: each backbone instance takes the majority
    ground-truth class of its points (instances whose majority is static
    dissolve).  This is the best a voting rule could do without the
    classifier and is what refined results are compared against.
  - unrefined classifier: per-instance majority vote over predicted
    classes, grouping untouched.
  - refined classifier: split mode, static-classified points dropped and
    mixed instances separated.

Per-scan work is independent; with workers > 1 scans are scored in a
fork pool and the per-scan stats are merged in corpus order, so results
are identical for any worker count.
"""

from __future__ import annotations

import time
from multiprocessing import get_context

import numpy as np

from .errors import ValidationError
from .metrics import PanopticStats, scan_stats
from .network import RadFinerNet
from .refinement import assemble_panoptic, refine_instances
from .scans import MovingPrediction, PanopticPrediction, RadarScan, select_moving


def pair_predictions(scans: list[RadarScan], preds: list[MovingPrediction]):
    """Align predictions to scans by scan_id, preserving scan order."""
    by_id: dict[str, MovingPrediction] = {}
    for p in preds:
        if p.scan_id in by_id:
            raise ValidationError(f"duplicate prediction for scan {p.scan_id}")
        by_id[p.scan_id] = p
    pairs = []
    for s in scans:
        if s.scan_id not in by_id:
            raise ValidationError(f"no prediction for scan {s.scan_id}")
        pairs.append((s, by_id[s.scan_id]))
    return pairs


def classify_selected(net: RadFinerNet, scan: RadarScan, pred: MovingPrediction):
    """(predicted class codes, backbone ids, index_map) for the moving subset."""
    coords, feats, index_map = select_moving(scan, pred)
    if index_map.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), index_map
    classes = net.predict(coords, feats)
    return classes, pred.instance[index_map], index_map


def predict_panoptic(net: RadFinerNet, scan: RadarScan, pred: MovingPrediction,
                     refine: bool = True, refine_mode: str = "split") -> PanopticPrediction:
    classes, ids, index_map = classify_selected(net, scan, pred)
    mode = refine_mode if refine else "majority"
    r_classes, r_ids = refine_instances(ids, classes, mode)
    return assemble_panoptic(scan, pred, r_ids, r_classes, index_map)


def majority_true_panoptic(scan: RadarScan, pred: MovingPrediction) -> PanopticPrediction:
    """Score ceiling for the raw backbone output: ground-truth classes,
    one majority vote per instance, static-majority instances dissolved."""
    _, _, index_map = select_moving(scan, pred)
    true_classes = scan.sem[index_map]
    r_classes, r_ids = refine_instances(pred.instance[index_map], true_classes, "majority")
    return assemble_panoptic(scan, pred, r_ids, r_classes, index_map)


def score_scan(scan: RadarScan, panoptic: PanopticPrediction) -> PanopticStats:
    if panoptic.scan_id != scan.scan_id:
        raise ValidationError(
            f"scan {scan.scan_id} scored against {panoptic.scan_id}")
    return scan_stats(scan.sem, scan.instance, panoptic.sem, panoptic.instance)


# -- split-level evaluation -------------------------------------------------

_EVAL_CTX: dict = {}


def _eval_one(i: int) -> PanopticStats:
    ctx = _EVAL_CTX
    scan, pred = ctx["pairs"][i]
    if ctx["net"] is None:
        pan = majority_true_panoptic(scan, pred)
    else:
        pan = predict_panoptic(ctx["net"], scan, pred,
                               refine=ctx["refine"], refine_mode=ctx["refine_mode"])
    return score_scan(scan, pan)


def evaluate_split(scans: list[RadarScan], preds: list[MovingPrediction],
                   net: RadFinerNet | None = None, refine: bool = True,
                   refine_mode: str = "split", workers: int = 1) -> PanopticStats:
    """Accumulated stats over the split.  net=None scores the
    majority-true baseline."""
    if workers < 1:
        raise ValidationError(f"workers must be >= 1, got {workers}")
    pairs = pair_predictions(scans, preds)
    _EVAL_CTX.update(pairs=pairs, net=net, refine=refine, refine_mode=refine_mode)
    try:
        if workers > 1 and len(pairs) > 1:
            with get_context("fork").Pool(workers) as pool:
                results = pool.map(_eval_one, range(len(pairs)))
        else:
            results = [_eval_one(i) for i in range(len(pairs))]
    finally:
        _EVAL_CTX.clear()
    stats = PanopticStats()
    for r in results:
        stats.merge(r)
    return stats


# -- latency ------------------------------------------------------------------


def bench_pipeline(net: RadFinerNet, scans: list[RadarScan],
                   preds: list[MovingPrediction], repetitions: int = 1,
                   refine_mode: str = "split") -> np.ndarray:
    """Per-scan select+forward+refine wall times in seconds.

    One untimed warmup pass runs first; samples are ordered scan-major,
    repetitions within scan.
    """
    if repetitions < 1:
        raise ValidationError(f"repetitions must be >= 1, got {repetitions}")
    pairs = pair_predictions(scans, preds)

    def run(scan, pred):
        coords, feats, index_map = select_moving(scan, pred)
        if index_map.size:
            classes = net.predict(coords, feats)
            r_classes, r_ids = refine_instances(pred.instance[index_map], classes,
                                                refine_mode)
            assemble_panoptic(scan, pred, r_ids, r_classes, index_map)

    for scan, pred in pairs[:min(len(pairs), 8)]:
        run(scan, pred)

    times = np.zeros(len(pairs) * repetitions)
    k = 0
    for scan, pred in pairs:
        for _ in range(repetitions):
            t0 = time.perf_counter()
            run(scan, pred)
            times[k] = time.perf_counter() - t0
            k += 1
    return times
