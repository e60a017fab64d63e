"""Mini-batch training loop: batching, SGD-momentum/Adam, unit-sphere
projection of centroids after every step, validation EER tracking, and the
four loss arms (multi_centroid, single_centroid, wce, wce_quality).

Everything is driven by one seeded generator in a fixed call order, so a
config plus seed pins the produced checkpoint byte for byte.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import (
    BONAFIDE,
    QualityPolicy,
    balance_augmentation,
)
from .errors import ConfigError, DivergenceDetected
from .losses import (
    Batch,
    LossHyper,
    QUALITY_ABSENT,
    combined_loss,
    oc_softmax_loss,
    quality_loss,
    wce_loss,
)
from .model import (
    Checkpoint,
    init_centroids,
    init_encoder,
    init_head,
)
from .numerics import make_rng
from .scoring import compute_eer, head_score, score

LOSS_KINDS = ("multi_centroid", "single_centroid", "wce", "wce_quality")
DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"  # adam | sgd-momentum
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    momentum: float = 0.9

    def to_dict(self):
        return {"kind": self.kind, "lr": self.lr, "betas": list(self.betas),
                "eps": self.eps, "momentum": self.momentum}


@dataclass(frozen=True)
class EncoderConfig:
    hidden: tuple = (32, 32)
    embed_dim: int = 16
    activation: str = "relu"

    def to_dict(self):
        return {"hidden": list(self.hidden), "embed_dim": self.embed_dim,
                "activation": self.activation}


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "multi_centroid"
    hyper: LossHyper = field(default_factory=LossHyper)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    policy: QualityPolicy = field(default_factory=QualityPolicy)
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    augment_fraction: float = 0.4
    noise_scale: float = 0.3
    val_fraction: float = 0.2
    centroid_init: str = "orthogonal"
    class_weights: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.optimizer.lr <= 0:
            raise ConfigError("learning rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in [0, 1)")

    def to_dict(self):
        return {
            "loss": self.loss,
            "hyper": self.hyper.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "encoder": self.encoder.to_dict(),
            "policy": self.policy.to_dict(),
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "augment_fraction": self.augment_fraction,
            "noise_scale": self.noise_scale,
            "val_fraction": self.val_fraction,
            "centroid_init": self.centroid_init,
            "class_weights": list(self.class_weights),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {
            "loss", "hyper", "optimizer", "encoder", "policy", "batch_size",
            "epochs", "seed", "augment_fraction", "noise_scale",
            "val_fraction", "centroid_init", "class_weights",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        try:
            if "hyper" in d:
                kwargs["hyper"] = LossHyper.from_dict(d.pop("hyper"))
            if "optimizer" in d:
                od = d.pop("optimizer")
                if "betas" in od:
                    od["betas"] = tuple(od["betas"])
                kwargs["optimizer"] = OptimizerConfig(**od)
            if "encoder" in d:
                ed = d.pop("encoder")
                if "hidden" in ed:
                    ed["hidden"] = tuple(ed["hidden"])
                kwargs["encoder"] = EncoderConfig(**ed)
            if "policy" in d:
                kwargs["policy"] = QualityPolicy.from_dict(d.pop("policy"))
            if "class_weights" in d:
                d["class_weights"] = tuple(d.pop("class_weights"))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**kwargs, **d)


def benchmark_train_config(seed: int, lam: float = 0.1,
                           loss: str = "multi_centroid") -> TrainConfig:
    """Training setup paired with data.benchmark_spec: 50 epochs of Adam at
    lr 0.01 on the desk-scale synthetic benchmark."""
    return TrainConfig(
        loss=loss,
        seed=seed,
        epochs=50,
        hyper=LossHyper(lam=lam),
        optimizer=OptimizerConfig(lr=0.01),
    )


def make_batches(records, batch_size, rng):
    """Seeded shuffle, then contiguous chunks; the last partial batch stays."""
    order = rng.permutation(len(records))
    return [
        [records[i] for i in order[k:k + batch_size]]
        for k in range(0, len(records), batch_size)
    ]


class _Optimizer:
    """Per-array SGD-momentum or Adam state. Updates are in place."""

    def __init__(self, params, config: OptimizerConfig):
        if config.kind not in ("adam", "sgd-momentum"):
            raise ConfigError(f"unknown optimizer {config.kind!r}")
        self.config = config
        self.params = params
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        c = self.config
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g is None:
                continue
            if c.kind == "sgd-momentum":
                m *= c.momentum
                m += g
                p -= c.lr * m
            else:
                b1, b2 = c.betas
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                mh = m / (1 - b1 ** self.t)
                vh = v / (1 - b2 ** self.t)
                p -= c.lr * mh / (np.sqrt(vh) + c.eps)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    loss_one_class: float
    loss_quality: float
    val_eer_ensemble: Optional[float]
    val_eer_max: Optional[float]
    val_eer_head: Optional[float]
    centroid_cosine: Optional[float]


@dataclass
class TrainReport:
    config: dict
    epochs: list = field(default_factory=list)  # EpochMetrics
    final_checkpoint: Optional[str] = None

    def to_dict(self):
        return {
            "config": self.config,
            "epochs": [vars(e) for e in self.epochs],
            "final_checkpoint": self.final_checkpoint,
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    def write_csv(self, path):
        cols = ["epoch", "train_loss", "loss_one_class", "loss_quality",
                "val_eer_ensemble", "val_eer_max", "val_eer_head",
                "centroid_cosine"]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for e in self.epochs:
                row = []
                for cname in cols:
                    val = getattr(e, cname)
                    if val is None:
                        row.append("")
                    elif cname == "epoch":
                        row.append(val)
                    else:
                        row.append(repr(float(val)))
                w.writerow(row)


def _records_to_arrays(records):
    X = np.stack([r.features for r in records])
    y = np.array([r.label for r in records], dtype=np.int64)
    q = np.array(
        [QUALITY_ABSENT if r.quality is None else r.quality for r in records],
        dtype=np.int64,
    )
    return X, y, q


def _val_eers(encoder, bank, head, X_val, y_val):
    if X_val.shape[0] == 0:
        return None, None, None
    bona = y_val == BONAFIDE
    if not np.any(bona) or np.all(bona):
        return None, None, None
    emb, _ = encoder.forward(X_val)
    out = []
    for strat in ("ensemble", "max"):
        if bank is not None:
            sc = np.array([score(e, bank, strat) for e in emb])
            out.append(compute_eer(sc[bona], sc[~bona])[0])
        else:
            out.append(None)
    if head is not None:
        sc = np.array([head_score(e, head) for e in emb])
        out.append(compute_eer(sc[bona], sc[~bona])[0])
    else:
        out.append(None)
    return tuple(out)


def train(records, config: TrainConfig):
    """Run the configured arm end to end. Returns (report, checkpoint)."""
    if not records:
        raise ConfigError("empty training set")
    rng = make_rng(config.seed)

    # split, then augment the training part only
    perm = rng.permutation(len(records))
    n_val = int(round(config.val_fraction * len(records)))
    val_recs = [records[i] for i in perm[:n_val]]
    train_recs = [records[i] for i in perm[n_val:]]
    train_recs = balance_augmentation(
        train_recs, config.augment_fraction, config.noise_scale, rng
    )

    input_dim = len(records[0].features)
    encoder = init_encoder(
        input_dim, config.encoder.hidden, config.encoder.embed_dim, rng,
        config.encoder.activation,
    )
    uses_bank = config.loss in ("multi_centroid", "single_centroid", "wce_quality")
    num_centroids = 1 if config.loss == "single_centroid" else config.policy.num_levels
    bank = None
    if uses_bank:
        bank = init_centroids(
            num_centroids, config.encoder.embed_dim, config.centroid_init, rng
        )
    head = None
    if config.loss in ("wce", "wce_quality"):
        head = init_head(config.encoder.embed_dim, rng)

    params = encoder.parameters()
    if bank is not None:
        params.append(bank.weights)
    if head is not None:
        params.append(head.weight)
        head_bias = np.array([head.bias])
        params.append(head_bias)
    opt = _Optimizer(params, config.optimizer)

    X_val, y_val, _ = (
        _records_to_arrays(val_recs) if val_recs else
        (np.zeros((0, input_dim)), np.zeros(0, dtype=np.int64), None)
    )

    report = TrainReport(config=config.to_dict())
    for epoch in range(1, config.epochs + 1):
        batches = make_batches(train_recs, config.batch_size, rng)
        total, total_oc, total_ql, seen = 0.0, 0.0, 0.0, 0
        for brecs in batches:
            Xb, yb, qb = _records_to_arrays(brecs)
            emb, cache = encoder.forward(Xb)
            if config.loss == "single_centroid":
                qb = np.zeros_like(qb)
            batch = Batch(embeddings=emb, labels=yb, quality=qb)

            if config.loss in ("multi_centroid", "single_centroid"):
                if config.loss == "single_centroid":
                    out = oc_softmax_loss(batch, bank, config.hyper)
                else:
                    out = combined_loss(batch, bank, config.hyper)
                grads_extra = [out.grad_centroids]
            elif config.loss == "wce":
                out = wce_loss(batch, head, config.class_weights)
                grads_extra = [out.grad_head_weight,
                               np.array([out.grad_head_bias])]
            else:  # wce_quality
                out = wce_loss(batch, head, config.class_weights)
                ql = quality_loss(batch, bank, config.hyper)
                lam = config.hyper.lam
                out.value = out.value + lam * ql.value
                out.grad_embeddings = out.grad_embeddings + lam * ql.grad_embeddings
                out.diagnostics["quality"] = ql.value
                grads_extra = [lam * ql.grad_centroids,
                               out.grad_head_weight,
                               np.array([out.grad_head_bias])]

            if not np.isfinite(out.value) or abs(out.value) > DIVERGENCE_LIMIT:
                raise DivergenceDetected(
                    f"epoch {epoch}: loss {out.value!r} out of bounds"
                )
            param_grads, _ = encoder.backward(cache, out.grad_embeddings)
            flat = []
            for gw, gb in param_grads:
                flat.extend([gw, gb])
            flat.extend(grads_extra)
            opt.step(flat)
            if bank is not None:
                bank.renormalize()
            if head is not None:
                head.bias = float(head_bias[0])

            nb = len(brecs)
            total += out.value * nb
            total_oc += out.diagnostics.get("one_class",
                                            out.diagnostics.get("wce", 0.0)) * nb
            total_ql += out.diagnostics.get("quality", 0.0) * nb
            seen += nb

        eer_ens, eer_max, eer_head = _val_eers(encoder, bank, head, X_val, y_val)
        cosines = bank.pairwise_cosines() if bank is not None else np.array([])
        report.epochs.append(EpochMetrics(
            epoch=epoch,
            train_loss=total / seen,
            loss_one_class=total_oc / seen,
            loss_quality=total_ql / seen,
            val_eer_ensemble=eer_ens,
            val_eer_max=eer_max,
            val_eer_head=eer_head,
            centroid_cosine=float(np.mean(cosines)) if cosines.size else None,
        ))

    ckpt = Checkpoint(
        encoder=encoder,
        bank=bank,
        head=head,
        policy=config.policy,
        hyper=config.hyper.to_dict(),
        metadata={
            "seed": config.seed,
            "epochs": config.epochs,
            "loss": config.loss,
            "final_train_loss": report.epochs[-1].train_loss,
        },
    )
    return report, ckpt
