"""Inference scoring, EER computation, and CSV exports.

Score polarity everywhere: higher score means more likely bona fide.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import BONAFIDE, QualityPolicy, UtteranceRecord, quality_label
from .errors import EmptyClass, MissingQuality
from .model import BinaryHead, CentroidBank, Encoder

STRATEGIES = ("labeled", "max", "ensemble")


def score(embedding, bank: CentroidBank, strategy: str,
          quality: Optional[int] = None) -> float:
    """CM score of one unit embedding against the centroid bank."""
    sims = bank.similarities(np.asarray(embedding, dtype=np.float64))[0]
    if strategy == "labeled":
        if quality is None:
            raise MissingQuality("labeled strategy needs a quality level")
        return float(sims[quality])
    if strategy == "max":
        return float(np.max(sims))
    if strategy == "ensemble":
        return float(np.mean(sims))
    raise ValueError(f"unknown strategy {strategy!r}")


def head_score(embedding, head: BinaryHead) -> float:
    """CM score from the binary head: negated spoof logit."""
    return float(-head.logits(np.asarray(embedding, dtype=np.float64))[0])


def _rates_at(thresholds, bona_sorted, spoof_sorted):
    """FAR = fraction of spoof scores >= t, FRR = fraction of bona scores < t."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    far = (len(spoof_sorted) - np.searchsorted(spoof_sorted, thresholds, side="left")) \
        / len(spoof_sorted)
    frr = np.searchsorted(bona_sorted, thresholds, side="left") / len(bona_sorted)
    return far, frr


def compute_eer(bona_scores, spoof_scores):
    """EER and threshold at the FAR/FRR crossing.

    FAR and FRR are step functions of the threshold; they are evaluated at
    the midpoints between consecutive distinct scores (plus sentinels below
    and above the support) and the crossing is linearly interpolated between
    the two adjacent operating points.
    """
    bona = np.sort(np.asarray(bona_scores, dtype=np.float64))
    spoof = np.sort(np.asarray(spoof_scores, dtype=np.float64))
    if bona.size == 0 or spoof.size == 0:
        raise EmptyClass("EER needs scores from both classes")
    uniq = np.unique(np.concatenate([bona, spoof]))
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    thr = np.concatenate([[uniq[0] - 1.0], mids, [uniq[-1] + 1.0]])
    far, frr = _rates_at(thr, bona, spoof)
    diff = far - frr  # non-increasing in the threshold
    i = int(np.argmax(diff <= 0.0))  # first operating point at or past the crossing
    if diff[i] == 0.0:
        return float(far[i]), float(thr[i])
    j = i - 1  # diff[0] = 1 > 0, so j >= 0
    t = diff[j] / (diff[j] - diff[i])
    eer = far[j] + t * (far[i] - far[j])
    threshold = thr[j] + t * (thr[i] - thr[j])
    return float(eer), float(threshold)


@dataclass
class ScoreReport:
    strategy: str
    ids: list
    scores: list
    labels: list  # per-record label or None
    eer: Optional[float] = None
    threshold: Optional[float] = None
    class_stats: dict = field(default_factory=dict)
    polarity: str = "higher score = bona fide"

    def to_dict(self):
        return {
            "strategy": self.strategy,
            "eer": self.eer,
            "threshold": self.threshold,
            "class_stats": self.class_stats,
            "polarity": self.polarity,
            "num_scored": len(self.scores),
        }


def score_dataset(records: Sequence[UtteranceRecord], encoder: Encoder,
                  bank: CentroidBank, strategy: str,
                  policy: QualityPolicy = QualityPolicy()) -> ScoreReport:
    """Encode and score every record; EER is filled in when both classes are
    present."""
    ids, scores, labels = [], [], []
    for r in records:
        emb = encoder.encode(r.features)
        if strategy == "labeled":
            # inference-time quality comes from the MOS field, for either class
            if r.quality is not None:
                q = r.quality
            elif r.mos is not None:
                q = quality_label(r.mos, policy)
            else:
                raise MissingQuality(
                    f"record {r.id}: labeled strategy needs mos or quality"
                )
            s = score(emb, bank, "labeled", quality=q)
        else:
            s = score(emb, bank, strategy)
        ids.append(r.id)
        scores.append(s)
        labels.append(r.label)
    report = ScoreReport(strategy=strategy, ids=ids, scores=scores, labels=labels)
    arr = np.asarray(scores)
    lab = np.asarray(labels)
    bona = arr[lab == BONAFIDE]
    spoof = arr[lab != BONAFIDE]
    if bona.size and spoof.size:
        report.eer, report.threshold = compute_eer(bona, spoof)
    for name, part in (("bonafide", bona), ("spoof", spoof)):
        if part.size:
            report.class_stats[name] = {
                "mean": float(np.mean(part)),
                "std": float(np.std(part)),
                "count": int(part.size),
            }
    return report


def write_scores_csv(report: ScoreReport, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "score", "label", "strategy"])
        for i, s, lab in zip(report.ids, report.scores, report.labels):
            name = "" if lab is None else ("bonafide" if lab == BONAFIDE else "spoof")
            w.writerow([i, repr(float(s)), name, report.strategy])


def read_scores_csv(path):
    """Returns (ids, scores, labels) with labels None where absent."""
    ids, scores, labels = [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            ids.append(row["id"])
            scores.append(float(row["score"]))
            lab = row.get("label", "")
            labels.append(None if not lab else (BONAFIDE if lab == "bonafide" else 1))
    return ids, scores, labels


def export_distributions(report: ScoreReport, path, bins: int = 30):
    """Histogram CSV over [min, max] of all scores: bin_low, bin_high,
    bona_count, spoof_count. Counts sum to the number of scored records."""
    arr = np.asarray(report.scores, dtype=np.float64)
    lab = np.asarray(report.labels)
    lo, hi = float(np.min(arr)), float(np.max(arr))
    if lo == hi:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    bona_counts, _ = np.histogram(arr[lab == BONAFIDE], bins=edges)
    spoof_counts, _ = np.histogram(arr[lab != BONAFIDE], bins=edges)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "bona_count", "spoof_count"])
        for k in range(bins):
            w.writerow([repr(float(edges[k])), repr(float(edges[k + 1])),
                        int(bona_counts[k]), int(spoof_counts[k])])


def export_embeddings(records: Sequence[UtteranceRecord], encoder: Encoder, path):
    """Embedding CSV for external projection tools: id, label, quality, then
    one column per embedding dimension."""
    dim = encoder.embed_dim
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", "quality"] + [f"e{k}" for k in range(dim)])
        for r in records:
            emb = encoder.encode(r.features)
            name = "bonafide" if r.label == BONAFIDE else "spoof"
            q = "" if r.quality is None else r.quality
            w.writerow([r.id, name, q] + [repr(float(v)) for v in emb])
