"""Command-line interface.

Subcommands cover the whole pipeline on files: ``synth`` emits toy corpora,
``featurize`` turns structure files into a binary graph cache, ``train`` fits
a model from cache pools, ``evaluate``/``predict``/``poses`` score caches with
a checkpoint. Every command echoes its fully resolved configuration into the
output directory, writes files atomically (write-then-rename), and is
bit-reproducible for a fixed ``--seed``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import io
import os
import sys

import numpy as np

from . import chem, graphs, metrics, synthetic
from .errors import CheckpointError, DataError, MolgatError, NumericError, ParseError
from .model import ModelConfig, load_params, score
from .training import (
    SCREEN_CATEGORIES,
    TRAIN_CATEGORIES,
    TrainConfig,
    split_by_protein,
    train,
)

HISTOGRAM_BINS = 50


class _Parser(argparse.ArgumentParser):
    # Usage errors exit 1 (argparse defaults to 2, which we reserve for data errors).
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) for c in row))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def _load_config_file(path) -> dict:
    cfg = configparser.ConfigParser()
    read = cfg.read(path)
    if not read:
        raise DataError(f"config file not found: {path}")
    return {section: dict(cfg.items(section)) for section in cfg.sections()}


def _resolve(args, file_cfg: dict, section: str, key: str, default, cast):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if section in file_cfg and key in file_cfg[section]:
        return cast(file_cfg[section][key])
    return default


def _parse_dims(text) -> tuple[int, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(int(d) for d in text)
    return tuple(int(d) for d in str(text).split(","))


def _resolved_model_config(args, file_cfg) -> ModelConfig:
    return ModelConfig(
        num_gat_layers=int(_resolve(args, file_cfg, "model", "num_gat_layers", 4, int)),
        gat_dim=int(_resolve(args, file_cfg, "model", "gat_dim", 140, int)),
        fc_dims=_parse_dims(_resolve(args, file_cfg, "model", "fc_dims", (128, 128, 1), _parse_dims)),
        dropout_rate=float(_resolve(args, file_cfg, "model", "dropout_rate", 0.3, float)),
    )


def _resolved_train_config(args, file_cfg, n_categories: int) -> TrainConfig:
    return TrainConfig(
        batch_size=int(_resolve(args, file_cfg, "train", "batch_size", 32, int)),
        iterations=int(_resolve(args, file_cfg, "train", "iterations", 150_000, int)),
        learning_rate=float(_resolve(args, file_cfg, "train", "learning_rate", 1e-4, float)),
        seed=int(_resolve(args, file_cfg, "train", "seed", 0, int)),
        ratio=(1,) * n_categories,
        checkpoint_every=int(_resolve(args, file_cfg, "train", "checkpoint_every", 100, int)),
    )


def _echo_config(out_dir, sections: dict) -> None:
    cfg = configparser.ConfigParser()
    for name, mapping in sections.items():
        cfg[name] = {k: str(v) for k, v in mapping.items()}
    buf = io.StringIO()
    cfg.write(buf)
    _atomic_write_text(os.path.join(out_dir, "config.resolved.ini"), buf.getvalue())


def _ensure_out_dir(path) -> None:
    os.makedirs(path, exist_ok=True)


def _load_samples(paths) -> list:
    samples = []
    for path in paths:
        samples.extend(graphs.read_cache(path))
    return samples


def _is_cache_file(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(len(graphs.CACHE_MAGIC)) == graphs.CACHE_MAGIC


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_featurize(args) -> int:
    _ensure_out_dir(os.path.dirname(os.path.abspath(args.out)) or ".")
    stats = {"dropped_atoms": 0, "clamped_annotations": 0}
    samples = []
    failures = []
    category_counts: dict[str, int] = {}

    def ingest_record(rec):
        pruned = graphs.prune_protein(rec, cutoff=args.cutoff)
        sample = graphs.build_sample(pruned, stats)
        samples.append(sample)
        category_counts[sample.category] = category_counts.get(sample.category, 0) + 1

    for spec in args.inputs:
        try:
            if args.format == "jsonl":
                with open(spec, "r", encoding="utf-8") as fh:
                    for lineno, line in enumerate(fh, start=1):
                        if not line.strip():
                            continue
                        try:
                            rec = chem.record_from_json_line(line, path=spec, lineno=lineno)
                            ingest_record(rec)
                        except (DataError, ParseError) as exc:
                            failures.append(f"{spec}:{lineno}: {exc}")
            else:
                if ":" not in spec:
                    raise DataError(
                        f"sdf+pdb input must look like LIGAND.sdf:PROTEIN.pdb, got {spec!r}"
                    )
                lig_path, prot_path = spec.split(":", 1)
                rec = chem.parse_complex(
                    lig_path,
                    fmt="sdf+pdb",
                    protein_path=prot_path,
                    category=args.category,
                    stats=stats,
                )
                ingest_record(rec)
        except (DataError, ParseError, OSError) as exc:
            failures.append(f"{spec}: {exc}")

    print(f"parsed {len(samples)} sample(s); {len(failures)} rejected")
    for name in sorted(category_counts):
        print(f"  {name}: {category_counts[name]}")
    print(f"  dropped atoms: {stats['dropped_atoms']}")
    print(f"  clamped annotations: {stats['clamped_annotations']}")
    for line in failures:
        print(f"  rejected: {line}")
    if not samples:
        print("error: no samples survived featurization", file=sys.stderr)
        return 2
    graphs.write_cache(samples, args.out)
    run_cfg = configparser.ConfigParser()
    run_cfg["run"] = {
        "inputs": ",".join(args.inputs),
        "format": args.format,
        "cutoff": str(args.cutoff),
        "category": args.category,
    }
    buf = io.StringIO()
    run_cfg.write(buf)
    _atomic_write_text(f"{args.out}.config.ini", buf.getvalue())
    print(f"wrote {args.out}")
    return 0


def cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    categories = SCREEN_CATEGORIES if args.screening_only else TRAIN_CATEGORIES
    model_cfg = _resolved_model_config(args, file_cfg)
    train_cfg = _resolved_train_config(args, file_cfg, len(categories))

    samples = [s for s in _load_samples(args.cache) if s.label is not None]
    if not samples:
        raise DataError("no labeled samples in the given cache(s)")
    train_samples, val_samples = split_by_protein(samples, args.val_fraction, train_cfg.seed)
    pools = {name: [] for name in categories}
    for s in train_samples:
        if s.category in pools:
            pools[s.category].append(s)
    for name, pool in pools.items():
        if not pool:
            raise DataError(
                f"category pool '{name}' is empty; provide samples or use --screening-only"
            )

    _ensure_out_dir(args.out)
    _echo_config(
        args.out,
        {
            "model": vars(model_cfg) | {"fc_dims": ",".join(map(str, model_cfg.fc_dims))},
            "train": {
                "batch_size": train_cfg.batch_size,
                "iterations": train_cfg.iterations,
                "learning_rate": train_cfg.learning_rate,
                "seed": train_cfg.seed,
                "checkpoint_every": train_cfg.checkpoint_every,
            },
            "run": {
                "cache": ",".join(args.cache),
                "val_fraction": args.val_fraction,
                "screening_only": args.screening_only,
            },
        },
    )
    result = train(pools, val_samples, model_cfg, train_cfg, args.out)
    print(f"final loss {result.final_loss:.6f}; log at {result.log_path}")
    print(f"latest checkpoint: {result.latest_path}")
    if result.best_path:
        print(f"best checkpoint (val auroc {result.best_val_auroc:.4f}): {result.best_path}")
    return 0


def _scored_items(samples, params, config) -> list[metrics.ScoredItem]:
    return [
        metrics.ScoredItem(
            score=score(s, params, config),
            label=-1 if s.label is None else s.label,
            protein_id=s.protein_id,
            complex_id=s.complex_id,
            rmsd=s.rmsd,
        )
        for s in samples
    ]


def cmd_evaluate(args) -> int:
    params, config, _ = load_params(args.checkpoint)
    samples = _load_samples(args.cache)
    labeled = [s for s in samples if s.label is not None]
    if not labeled:
        raise DataError("no labeled samples to evaluate")
    _ensure_out_dir(args.out)
    items = _scored_items(labeled, params, config)
    report = metrics.evaluate_scored(items)
    if args.metrics:
        wanted = set(args.metrics.split(","))
        keep = {"n_proteins", "n_skipped", "protein_id", "n_samples", "n_positive", "n_negative"}

        def trim(row):
            return {
                k: v
                for k, v in row.items()
                if k in keep or any(k == m or k.startswith(f"{m}_") for m in wanted)
            }

        report = metrics.EvalReport(
            per_protein=[trim(r) for r in report.per_protein],
            aggregate=trim(report.aggregate),
            skipped_proteins=report.skipped_proteins,
        )
    _atomic_write_text(os.path.join(args.out, "report.json"), report.to_json() + "\n")
    report.write_csv(os.path.join(args.out, "report.csv"))
    scores = [i.score for i in items]
    labels = [i.label for i in items]
    metrics.write_curve_csv(os.path.join(args.out, "roc_curve.csv"), scores, labels, "roc")
    metrics.write_curve_csv(os.path.join(args.out, "pr_curve.csv"), scores, labels, "pr")
    _echo_config(
        args.out,
        {"run": {"checkpoint": args.checkpoint, "cache": ",".join(args.cache)}},
    )
    for key, value in sorted(report.aggregate.items()):
        print(f"{key}: {value}")
    print(f"wrote report to {args.out}")
    return 0


def cmd_predict(args) -> int:
    params, config, _ = load_params(args.checkpoint)
    if _is_cache_file(args.input):
        samples = graphs.read_cache(args.input)
    else:
        samples = []
        for rec in chem.read_jsonl(args.input):
            samples.append(graphs.build_sample(graphs.prune_protein(rec)))
    if not samples:
        raise DataError("no samples to score")
    _ensure_out_dir(args.out)
    rows = [
        (s.complex_id, s.protein_id, repr(score(s, params, config))) for s in samples
    ]
    _write_csv(os.path.join(args.out, "scores.csv"), ("complex_id", "protein_id", "probability"), rows)
    values = np.array([float(r[2]) for r in rows])
    counts, edges = np.histogram(values, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    _write_csv(
        os.path.join(args.out, "score_histogram.csv"),
        ("bin_low", "bin_high", "count"),
        [(repr(float(edges[i])), repr(float(edges[i + 1])), int(counts[i])) for i in range(HISTOGRAM_BINS)],
    )
    _echo_config(args.out, {"run": {"checkpoint": args.checkpoint, "input": args.input}})
    print(f"scored {len(rows)} complex(es); outputs in {args.out}")
    return 0


def cmd_poses(args) -> int:
    params, config, _ = load_params(args.checkpoint)
    samples = _load_samples(args.cache)
    if any(s.rmsd is None for s in samples):
        raise DataError("pose evaluation requires rmsd annotations on every sample")
    _ensure_out_dir(args.out)
    items = _scored_items(samples, params, config)
    n_values = [int(n) for n in args.top.split(",")]
    rows = []
    for n in n_values:
        success = metrics.topn_success(items, n)
        rows.append((n, repr(100.0 * success)))
        print(f"top-{n}: {100.0 * success:.2f}% of complexes have a <2 A pose")
    _write_csv(os.path.join(args.out, "topn_success.csv"), ("n", "success_pct"), rows)
    _echo_config(
        args.out,
        {"run": {"checkpoint": args.checkpoint, "cache": ",".join(args.cache), "top": args.top}},
    )
    return 0


def cmd_synth(args) -> int:
    _ensure_out_dir(args.out)
    train_records = synthetic.generate_corpus(args.train, seed=args.seed, id_prefix="train")
    test_records = synthetic.generate_corpus(args.test, seed=args.seed + 1, id_prefix="test")
    chem.write_jsonl(train_records, os.path.join(args.out, "train.jsonl"))
    chem.write_jsonl(test_records, os.path.join(args.out, "test.jsonl"))
    written = ["train.jsonl", "test.jsonl"]
    if args.pose_complexes:
        poses = synthetic.generate_pose_set(
            args.pose_complexes, args.poses_per_complex, seed=args.seed + 2
        )
        chem.write_jsonl(poses, os.path.join(args.out, "poses.jsonl"))
        written.append("poses.jsonl")
    _echo_config(
        args.out,
        {
            "run": {
                "train": args.train,
                "test": args.test,
                "pose_complexes": args.pose_complexes,
                "poses_per_complex": args.poses_per_complex,
                "seed": args.seed,
            }
        },
    )
    print(f"wrote {', '.join(written)} to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="molgat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("featurize", help="parse structures, prune, and write a graph cache")
    p.add_argument("inputs", nargs="+", help="jsonl files, or LIGAND.sdf:PROTEIN.pdb pairs")
    p.add_argument("--format", choices=("jsonl", "sdf+pdb"), default="jsonl")
    p.add_argument("--out", required=True, help="output cache file")
    p.add_argument("--cutoff", type=float, default=graphs.PRUNE_CUTOFF, help="protein prune distance (A)")
    p.add_argument("--category", choices=chem.CATEGORIES, default="unlabeled",
                   help="category for sdf+pdb inputs")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train a model from cache pools")
    p.add_argument("--cache", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="INI config file; flags override its values")
    p.add_argument("--screening-only", action="store_true",
                   help="train on the two screening categories only")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--num-gat-layers", dest="num_gat_layers", type=int)
    p.add_argument("--gat-dim", dest="gat_dim", type=int)
    p.add_argument("--fc-dims", dest="fc_dims", help="comma-separated, last must be 1")
    p.add_argument("--dropout-rate", dest="dropout_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a cache and compute screening metrics")
    p.add_argument("--cache", nargs="+", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", help="comma list among auroc,adjusted_logauc,prauc,re")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="write per-complex scores and a histogram")
    p.add_argument("--input", required=True, help="graph cache or canonical jsonl")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("poses", help="top-N pose success from an rmsd-annotated cache")
    p.add_argument("--cache", nargs="+", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top", default="1,2,3,5,10", help="comma list of N values")
    p.set_defaults(func=cmd_poses)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--train", type=int, default=2000)
    p.add_argument("--test", type=int, default=500)
    p.add_argument("--pose-complexes", dest="pose_complexes", type=int, default=0)
    p.add_argument("--poses-per-complex", dest="poses_per_complex", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ParseError, DataError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MolgatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
