"""Dataset records, JSONL ingestion, MOS thresholding, synthetic generation, augmentation.

Detection labels: 0 = bonafide, 1 = spoof. Quality levels exist only for bona
fide records; spoof records carry ``quality=None`` throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (
    MissingField,
    MosOutOfRange,
    NonFiniteFeature,
    ParseError,
)
from .numerics import make_rng

BONAFIDE = 0
SPOOF = 1

_LABEL_NAMES = {BONAFIDE: "bonafide", SPOOF: "spoof"}
_LABEL_CODES = {v: k for k, v in _LABEL_NAMES.items()}


@dataclass(frozen=True)
class QualityPolicy:
    """MOS bucketing: level = number of cut points <= mos (boundary goes up)."""

    tau: float = 2.5
    num_levels: int = 2
    thresholds: tuple = ()

    def __post_init__(self):
        if self.num_levels < 1:
            raise ValueError("num_levels must be >= 1")
        cuts = tuple(float(t) for t in self.thresholds)
        if not cuts and self.num_levels == 2:
            cuts = (float(self.tau),)
        if not cuts and self.num_levels > 2:
            raise ValueError("num_levels > 2 requires explicit thresholds")
        if len(cuts) != self.num_levels - 1:
            raise ValueError(
                f"need {self.num_levels - 1} thresholds, got {len(cuts)}"
            )
        if any(not (1.0 < t < 5.0) for t in cuts):
            raise ValueError("thresholds must lie strictly inside (1, 5)")
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError("thresholds must be strictly ascending")
        object.__setattr__(self, "thresholds", cuts)

    def to_dict(self):
        return {
            "tau": self.tau,
            "num_levels": self.num_levels,
            "thresholds": list(self.thresholds),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tau=d.get("tau", 2.5),
            num_levels=d.get("num_levels", 2),
            thresholds=tuple(d.get("thresholds", ())),
        )


def quality_label(mos: float, policy: QualityPolicy) -> int:
    """Bucket index for a MOS value; a value exactly on a cut goes to the upper bucket."""
    mos = float(mos)
    if not (1.0 <= mos <= 5.0) or not np.isfinite(mos):
        raise MosOutOfRange(f"mos={mos!r} outside [1, 5]")
    return int(np.searchsorted(policy.thresholds, mos, side="right"))


@dataclass(eq=False)
class UtteranceRecord:
    id: str
    features: np.ndarray
    label: int
    mos: Optional[float] = None
    quality: Optional[int] = None
    augmented: bool = False

    def __eq__(self, other):
        if not isinstance(other, UtteranceRecord):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.features, other.features)
            and self.label == other.label
            and self.mos == other.mos
            and self.quality == other.quality
            and self.augmented == other.augmented
        )


def _derive_quality(label, mos, augmented, policy):
    if label != BONAFIDE:
        return None
    if augmented:
        return 0
    if mos is None:
        return None
    return quality_label(mos, policy)


def make_record(id, features, label, mos=None, augmented=False,
                policy: QualityPolicy = QualityPolicy()) -> UtteranceRecord:
    feats = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(feats)):
        raise NonFiniteFeature(f"record {id!r} has non-finite features")
    return UtteranceRecord(
        id=str(id),
        features=feats,
        label=int(label),
        mos=None if mos is None else float(mos),
        quality=_derive_quality(int(label), mos, augmented, policy),
        augmented=bool(augmented),
    )


def load_jsonl(path, policy: QualityPolicy = QualityPolicy()):
    """Parse one record per line. Quality is always recomputed, never read."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON: {exc}") from exc
            for key in ("id", "features", "label"):
                if key not in obj:
                    raise MissingField(f"line {line_no}: missing {key!r}")
            if obj["label"] not in _LABEL_CODES:
                raise ParseError(line_no, f"unknown label {obj['label']!r}")
            try:
                records.append(
                    make_record(
                        obj["id"],
                        obj["features"],
                        _LABEL_CODES[obj["label"]],
                        mos=obj.get("mos"),
                        augmented=obj.get("augmented", False),
                        policy=policy,
                    )
                )
            except NonFiniteFeature:
                raise NonFiniteFeature(f"line {line_no}: non-finite feature value")
    return records


def save_jsonl(records: Sequence[UtteranceRecord], path):
    """Inverse of load_jsonl. Quality is derived state and is not serialized."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            obj = {
                "id": r.id,
                "features": [float(x) for x in r.features],
                "label": _LABEL_NAMES[r.label],
            }
            if r.mos is not None:
                obj["mos"] = float(r.mos)
            if r.augmented:
                obj["augmented"] = True
            fh.write(json.dumps(obj) + "\n")


@dataclass(frozen=True)
class ClusterSpec:
    """One Gaussian blob. quality_band: 'low' | 'high' for bona fide, None for spoof."""

    count: int
    mean: tuple
    spread: float
    label: int = BONAFIDE
    quality_band: Optional[str] = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.spread <= 0:
            raise ValueError("spread must be > 0")
        if self.label == BONAFIDE and self.quality_band not in ("low", "high"):
            raise ValueError("bonafide cluster needs quality_band 'low' or 'high'")


@dataclass(frozen=True)
class SyntheticSpec:
    dim: int
    clusters: tuple
    seed: int = 0

    def to_dict(self):
        return {
            "dim": self.dim,
            "seed": self.seed,
            "clusters": [
                {
                    "count": c.count,
                    "mean": list(c.mean),
                    "spread": c.spread,
                    "label": _LABEL_NAMES[c.label],
                    "quality_band": c.quality_band,
                }
                for c in self.clusters
            ],
        }

    @classmethod
    def from_dict(cls, d):
        clusters = tuple(
            ClusterSpec(
                count=c["count"],
                mean=tuple(c["mean"]),
                spread=c["spread"],
                label=_LABEL_CODES[c.get("label", "bonafide")],
                quality_band=c.get("quality_band"),
            )
            for c in d["clusters"]
        )
        return cls(dim=d["dim"], clusters=clusters, seed=d.get("seed", 0))


def _mos_band(band: str, policy: QualityPolicy):
    lo, hi = 1.0, 5.0
    tau = policy.thresholds[0] if policy.thresholds else 2.5
    return (lo, tau) if band == "low" else (tau, hi)


def generate_synthetic(spec: SyntheticSpec,
                       policy: QualityPolicy = QualityPolicy()):
    """Sample the configured Gaussian clusters with a seeded generator.

    Bona fide records get a synthetic MOS drawn uniformly inside their
    cluster's quality band, so only the bucket is meaningful.
    """
    rng = make_rng(spec.seed)
    records = []
    for ci, c in enumerate(spec.clusters):
        mean = np.asarray(c.mean, dtype=np.float64)
        if mean.shape != (spec.dim,):
            raise ValueError(f"cluster {ci}: mean dim {mean.shape} != {spec.dim}")
        feats = rng.normal(0.0, c.spread, size=(c.count, spec.dim)) + mean
        if c.label == BONAFIDE:
            lo, hi = _mos_band(c.quality_band, policy)
            # keep a margin off the cut so the band assignment is unambiguous
            width = hi - lo
            mos = rng.uniform(lo + 0.02 * width, hi - 0.02 * width, size=c.count)
        else:
            mos = [None] * c.count
        tag = f"{_LABEL_NAMES[c.label]}{ci}"
        for i in range(c.count):
            records.append(
                make_record(
                    f"{tag}_{i:04d}",
                    feats[i],
                    c.label,
                    mos=mos[i],
                    policy=policy,
                )
            )
    return records


def augment(record: UtteranceRecord, noise_scale: float,
            rng: np.random.Generator) -> UtteranceRecord:
    """Additive Gaussian feature noise. Bona fide quality drops to level 0
    unconditionally, even at noise_scale=0."""
    noise = rng.normal(0.0, 1.0, size=record.features.shape) * float(noise_scale)
    new_quality = 0 if record.label == BONAFIDE else None
    return replace(
        record,
        features=record.features + noise,
        quality=new_quality,
        augmented=True,
    )


def balance_augmentation(records, fraction: float, noise_scale: float,
                         rng: np.random.Generator):
    """Augment a seeded random subset of exactly round(fraction * N) records.

    Meant for training splits only; never call this on validation data.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    n = len(records)
    k = int(round(fraction * n))
    chosen = set(rng.permutation(n)[:k].tolist())
    return [
        augment(r, noise_scale, rng) if i in chosen else r
        for i, r in enumerate(records)
    ]


def benchmark_spec(seed: int, train: bool = True) -> SyntheticSpec:
    """Fixed desk-scale benchmark: two overlapping bona fide quality clusters
    plus two well-separated spoof clusters in 8 dimensions.

    The low/high bona fide clusters deliberately overlap in feature space;
    quality is mostly carried by MOS, mirroring the regime where multiple
    centroids can drift together without quality supervision.
    """
    d = 8
    base = np.zeros(d)
    base[0] = 1.0
    delta = np.zeros(d)
    delta[1] = 0.2
    spoof1 = np.zeros(d)
    spoof1[0] = -2.0
    spoof2 = np.zeros(d)
    spoof2[0] = 1.0
    spoof2[2] = 2.5
    n = 150 if train else 50
    clusters = (
        ClusterSpec(n, tuple(base - delta), 0.35, BONAFIDE, "low"),
        ClusterSpec(n, tuple(base + delta), 0.35, BONAFIDE, "high"),
        ClusterSpec(n, tuple(spoof1), 0.35, SPOOF),
        ClusterSpec(n, tuple(spoof2), 0.35, SPOOF),
    )
    return SyntheticSpec(dim=d, clusters=clusters, seed=seed if train else seed + 1000)
