"""Command-line front door: gen, train, score, eval, ablate, export.

Config-file-first: each command reads a JSON config/spec where applicable and
accepts repeated ``--set key=value`` overrides with dotted paths. Every run
writes a manifest.json with the resolved inputs, so it can be re-run
bit-identically.

Exit codes: 0 ok, 2 config error, 3 I/O error, 4 training divergence,
1 anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .data import (
    QualityPolicy,
    SyntheticSpec,
    generate_synthetic,
    load_jsonl,
    save_jsonl,
)
from .errors import ConfigError, DivergenceDetected, IoError, McocError
from .model import load_checkpoint, save_checkpoint
from .scoring import (
    compute_eer,
    export_distributions,
    export_embeddings,
    head_score,
    read_scores_csv,
    score_dataset,
    write_scores_csv,
)
from .training import TrainConfig, train

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4

ABLATION_ARMS = (
    # (arm name, config patch, scoring mode)
    ("wce", {"loss": "wce"}, "head"),
    ("wce_quality", {"loss": "wce_quality"}, "head"),
    ("multi_centroid", {"loss": "multi_centroid"}, "ensemble"),
    ("multi_centroid_no_quality",
     {"loss": "multi_centroid", "hyper.lam": 0.0}, "ensemble"),
    ("multi_centroid_max_score", {"loss": "multi_centroid"}, "max"),
)


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def _apply_overrides(config: dict, pairs):
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot descend into {key!r}")
        node[parts[-1]] = value
    return config


def _outdir(args, default_name):
    out = args.out
    if out is None:
        root = os.environ.get("MCOC_OUT", ".")
        out = os.path.join(root, default_name)
    os.makedirs(out, exist_ok=True)
    return out


def _write_manifest(outdir, command, resolved, seed=None):
    manifest = {
        "command": command,
        "resolved": resolved,
        "seed": seed,
        "package_version": __version__,
        "polarity": "higher score = bona fide",
    }
    with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _cmd_gen(args):
    spec_dict = _apply_overrides(_load_json(args.spec), args.set)
    if args.seed is not None:
        spec_dict["seed"] = args.seed
    spec = SyntheticSpec.from_dict(spec_dict)
    policy = QualityPolicy.from_dict(spec_dict.get("policy", {})) \
        if "policy" in spec_dict else QualityPolicy()
    records = generate_synthetic(spec, policy)
    outdir = _outdir(args, "gen")
    save_jsonl(records, os.path.join(outdir, "data.jsonl"))
    _write_manifest(outdir, "gen", spec.to_dict(), seed=spec.seed)
    print(f"wrote {len(records)} records to {outdir}/data.jsonl")
    return 0


def _train_config(args):
    cfg_dict = _apply_overrides(_load_json(args.config), args.set)
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    return TrainConfig.from_dict(cfg_dict)


def _cmd_train(args):
    config = _train_config(args)
    records = load_jsonl(args.data, config.policy)
    report, ckpt = train(records, config)
    outdir = _outdir(args, "train")
    ckpt_path = os.path.join(outdir, "checkpoint.json")
    save_checkpoint(ckpt, ckpt_path)
    report.final_checkpoint = ckpt_path
    report.write_json(os.path.join(outdir, "report.json"))
    report.write_csv(os.path.join(outdir, "metrics.csv"))
    _write_manifest(outdir, "train", config.to_dict(), seed=config.seed)
    last = report.epochs[-1]
    eer = last.val_eer_ensemble if last.val_eer_ensemble is not None \
        else last.val_eer_head
    print(f"trained {config.loss} for {config.epochs} epochs; "
          f"final val EER: {eer}")
    return 0


def _score_records(records, ckpt, strategy):
    if strategy == "head":
        if ckpt.head is None:
            raise ConfigError("checkpoint has no binary head")
        from .scoring import ScoreReport
        ids, scores, labels = [], [], []
        for r in records:
            ids.append(r.id)
            scores.append(head_score(ckpt.encoder.encode(r.features), ckpt.head))
            labels.append(r.label)
        report = ScoreReport(strategy="head", ids=ids, scores=scores,
                             labels=labels)
        arr = np.asarray(scores)
        lab = np.asarray(labels)
        bona, spoof = arr[lab == 0], arr[lab != 0]
        if bona.size and spoof.size:
            report.eer, report.threshold = compute_eer(bona, spoof)
        return report
    if ckpt.bank is None:
        raise ConfigError("checkpoint has no centroid bank")
    return score_dataset(records, ckpt.encoder, ckpt.bank, strategy, ckpt.policy)


def _cmd_score(args):
    ckpt = load_checkpoint(args.checkpoint)
    records = load_jsonl(args.data, ckpt.policy)
    report = _score_records(records, ckpt, args.strategy)
    outdir = _outdir(args, "score")
    write_scores_csv(report, os.path.join(outdir, "scores.csv"))
    with open(os.path.join(outdir, "report.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    _write_manifest(outdir, "score",
                    {"checkpoint": args.checkpoint, "data": args.data,
                     "strategy": args.strategy})
    print(f"scored {len(report.scores)} records (strategy={args.strategy}, "
          f"higher score = bona fide); EER: {report.eer}")
    return 0


def _cmd_eval(args):
    _, scores, labels = read_scores_csv(args.scores)
    scores = np.asarray(scores)
    labels = np.asarray([-1 if l is None else l for l in labels])
    bona = scores[labels == 0]
    spoof = scores[labels == 1]
    eer, threshold = compute_eer(bona, spoof)
    summary = {
        "eer": eer,
        "threshold": threshold,
        "num_bonafide": int(bona.size),
        "num_spoof": int(spoof.size),
        "polarity": "higher score = bona fide",
    }
    outdir = _outdir(args, "eval")
    with open(os.path.join(outdir, "summary.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")
    _write_manifest(outdir, "eval", {"scores": args.scores})
    print(f"EER {eer:.4f} at threshold {threshold:.4f}")
    return 0


def _cmd_ablate(args):
    base = _apply_overrides(_load_json(args.config), args.set)
    if args.seed is not None:
        base["seed"] = args.seed
    train_records_path = args.data
    test_path = args.test
    outdir = _outdir(args, "ablate")
    rows = []
    for arm, patch, strategy in ABLATION_ARMS:
        cfg_dict = json.loads(json.dumps(base))
        _apply_overrides(cfg_dict, [f"{k}={json.dumps(v)}"
                                    for k, v in patch.items()])
        config = TrainConfig.from_dict(cfg_dict)
        records = load_jsonl(train_records_path, config.policy)
        arm_dir = os.path.join(outdir, arm)
        os.makedirs(arm_dir, exist_ok=True)
        report, ckpt = train(records, config)
        ckpt_path = os.path.join(arm_dir, "checkpoint.json")
        save_checkpoint(ckpt, ckpt_path)
        report.final_checkpoint = ckpt_path
        report.write_json(os.path.join(arm_dir, "report.json"))
        report.write_csv(os.path.join(arm_dir, "metrics.csv"))
        test_records = load_jsonl(test_path, config.policy)
        sreport = _score_records(test_records, ckpt, strategy)
        write_scores_csv(sreport, os.path.join(arm_dir, "scores.csv"))
        rows.append((arm, config.loss, strategy, sreport.eer))
        print(f"{arm:28s} loss={config.loss:14s} strategy={strategy:8s} "
              f"EER={sreport.eer}")
    with open(os.path.join(outdir, "ablation.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("arm,loss,strategy,eer\n")
        for arm, loss, strategy, eer in rows:
            fh.write(f"{arm},{loss},{strategy},{eer!r}\n")
    _write_manifest(outdir, "ablate",
                    {"config": base, "data": train_records_path,
                     "test": test_path}, seed=base.get("seed"))
    return 0


def _cmd_export(args):
    ckpt = load_checkpoint(args.checkpoint)
    records = load_jsonl(args.data, ckpt.policy)
    report = _score_records(records, ckpt, args.strategy)
    outdir = _outdir(args, "export")
    export_distributions(report, os.path.join(outdir, "histogram.csv"),
                         bins=args.bins)
    export_embeddings(records, ckpt.encoder, os.path.join(outdir,
                                                          "embeddings.csv"))
    _write_manifest(outdir, "export",
                    {"checkpoint": args.checkpoint, "data": args.data,
                     "strategy": args.strategy, "bins": args.bins})
    print(f"exported histogram and embeddings for {len(records)} records")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mcoc",
        description="Quality-aware multi-centroid one-class learning "
                    "(higher CM score = bona fide)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None, help="output directory "
                       "(default: $MCOC_OUT/<command>)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (dotted path)")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("gen", help="generate a synthetic JSONL dataset")
    p.add_argument("--spec", required=True)
    common(p)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train one arm and write a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("score", help="score a dataset with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--strategy", default="ensemble",
                   choices=["labeled", "max", "ensemble", "head"])
    common(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("eval", help="compute EER from a scores.csv")
    p.add_argument("--scores", required=True)
    common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="run the 5-arm loss/scoring matrix")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="training JSONL")
    p.add_argument("--test", required=True, help="test JSONL")
    common(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("export", help="export histogram and embedding CSVs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--strategy", default="ensemble",
                   choices=["labeled", "max", "ensemble", "head"])
    p.add_argument("--bins", type=int, default=30)
    common(p)
    p.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IoError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergenceDetected as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except McocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
