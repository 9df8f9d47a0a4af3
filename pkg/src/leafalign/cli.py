"""Command-line entry point.

Subcommands: gen-data, train, eval, ablate, report. Every run directory gets
a manifest tying the metrics back to the resolved config hash. Exit codes:
0 success, 2 config error, 3 data error, 4 numerical failure.
"""

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import (
    config_hash,
    config_lines,
    parse_config,
    with_overrides,
)
from .data import SynthSpec, generate_dataset, load_manifest, save_manifest, split_dataset
from .encoder import forward_image, forward_text, load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, LeafAlignError, NumericalError
from .evaluate import (
    linear_probe,
    read_metrics,
    recall_at_k,
    same_crop_in_top_k,
    silhouette,
    write_metrics,
    zero_shot_classify,
)
from .train import class_token_matrix, train

#: Table-8-style ablation grid in row order: (context_mode, soft_targets).
ABLATION_GRID = (
    ("short", False),
    ("short", True),
    ("long", False),
    ("long", True),
)


@dataclass
class RunManifest:
    """Provenance for one run: config hash plus file paths and timestamps."""

    config_hash: str
    seed: int
    data_path: str
    checkpoint_path: str
    metrics_path: str
    started_at: float
    finished_at: float

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _config_overrides(args):
    keys = ("epochs", "batch_size", "peak_lr", "weight_decay", "tau", "alpha",
            "beta", "soft_targets", "context_mode", "prompt", "seed", "d")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _write_run_config(config, out_dir):
    path = Path(out_dir) / "config.txt"
    path.write_text("\n".join(config_lines(config)) + "\n", encoding="utf-8")
    return path


# --- gen-data ----------------------------------------------------------------

def cmd_gen_data(args):
    rng = np.random.default_rng(args.seed)
    grid = [(c, d) for c in range(args.n_crops) for d in range(args.n_conditions)]
    n_classes = args.n_classes or len(grid)
    if n_classes > len(grid):
        raise ConfigError(
            f"gen-data: {n_classes} classes exceed the "
            f"{args.n_crops}x{args.n_conditions} grid"
        )
    chosen = sorted(rng.choice(len(grid), size=n_classes, replace=False))
    spec = SynthSpec(
        n_crops=args.n_crops,
        n_conditions=args.n_conditions,
        classes=tuple(grid[i] for i in chosen),
        samples_per_class=args.samples_per_class,
        feature_dim=args.feature_dim,
        crop_signal=args.crop_signal,
        disease_signal=args.disease_signal,
        class_signal=args.class_signal,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    ratios = tuple(float(r) for r in args.split.split(","))
    dataset = split_dataset(generate_dataset(spec), ratios, seed=args.seed)
    save_manifest(dataset, args.out)
    print(f"wrote {len(dataset.samples)} samples over "
          f"{dataset.vocabulary.K} classes to {args.out}")
    return 0


# --- train --------------------------------------------------------------------

def _train_run(config, dataset, data_path, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    params, log = train(config, dataset)
    checkpoint_path = out_dir / "checkpoint.bin"
    save_checkpoint(params, checkpoint_path)
    log.write_jsonl(out_dir / "trainlog.jsonl")
    _write_run_config(config, out_dir)
    manifest = RunManifest(
        config_hash=config_hash(config),
        seed=config.seed,
        data_path=str(data_path),
        checkpoint_path=str(checkpoint_path),
        metrics_path="",
        started_at=started,
        finished_at=time.time(),
    )
    manifest.write(out_dir / "run.json")
    return params, log, manifest


def cmd_train(args):
    config = parse_config(args.config, _config_overrides(args))
    dataset = load_manifest(args.data)
    _, log, manifest = _train_run(config, dataset, args.data, args.out)
    last = log.steps[-1]
    print(f"trained {len(log.steps)} steps; final loss {last.loss_total:.4f}; "
          f"config {manifest.config_hash}")
    return 0


# --- eval ----------------------------------------------------------------------

def _resolve_run(args):
    if args.run:
        run_dir = Path(args.run)
        config = parse_config(run_dir / "config.txt")
        checkpoint = run_dir / "checkpoint.bin"
    else:
        if not (args.checkpoint and args.config):
            raise ConfigError("eval: pass --run DIR or both --checkpoint and --config")
        config = parse_config(args.config)
        checkpoint = args.checkpoint
    return config, load_checkpoint(checkpoint)


def evaluate_split(params, config, dataset, split="test", ks=(1, 5, 10),
                   top_k=5):
    """All standard metrics for one split, as metric records."""
    features = dataset.features(split)
    labels = dataset.labels(split)
    if features.shape[0] == 0:
        raise DataError(f"eval: split {split!r} is empty")
    image_emb, _ = forward_image(params, features)
    class_emb, _ = forward_text(params, class_token_matrix(dataset.vocabulary,
                                                           config))
    text_emb = class_emb[labels]

    records = []
    retrieval = recall_at_k(image_emb, text_emb, ks=ks, labels=labels)
    for direction in ("i2t", "t2i"):
        for k, value in retrieval[direction].items():
            records.append((f"r_at_{k}", direction, value))
    records.append(("zero_shot_accuracy", split,
                    zero_shot_classify(image_emb, class_emb, labels)))

    concepts = dataset.vocabulary.concepts
    crop_codes = factorize([concepts[i].crop for i in labels])
    condition_codes = factorize([concepts[i].condition for i in labels])
    for name, codes in (("class", labels), ("crop", crop_codes),
                        ("condition", condition_codes)):
        if len(np.unique(codes)) >= 2:
            records.append(("silhouette", name,
                            silhouette(image_emb, codes, name).silhouette))

    query_crops = [concepts[i].crop for i in labels]
    counts = same_crop_in_top_k(query_crops, image_emb @ class_emb.T,
                                concepts, top_k=top_k)
    records.append((f"same_crop_in_top{top_k}_mean", "i2t",
                    float(counts.mean())))
    return records


def factorize(values):
    """Map arbitrary hashable values to dense integer codes."""
    _, codes = np.unique(np.asarray(values, dtype=object), return_inverse=True)
    return codes.astype(np.int64)


def cmd_eval(args):
    config, params = _resolve_run(args)
    dataset = load_manifest(args.data)
    records = evaluate_split(params, config, dataset, split=args.split)

    if args.probe_shots:
        train_emb, _ = forward_image(params, dataset.features("train"))
        test_emb, _ = forward_image(params, dataset.features(args.split))
        for shots in (int(s) for s in args.probe_shots.split(",")):
            probe = linear_probe(train_emb, dataset.labels("train"), test_emb,
                                 dataset.labels(args.split), shots,
                                 runs=args.probe_runs, seed=config.seed)
            records.append((f"probe_{shots}shot_mean", args.split, probe.mean))
            records.append((f"probe_{shots}shot_sd", args.split, probe.sd))

    write_metrics(args.out, records, config_hash=config_hash(config),
                  notes={"split": args.split})
    for name, grouping, value in records:
        print(f"{name:28s} {grouping:10s} {value:.4f}")
    return 0


# --- ablate ---------------------------------------------------------------------

def run_ablate(config, dataset, data_path, out_dir):
    """Run the 2x2 context/soft-target grid with a shared seed."""
    out_dir = Path(out_dir)
    manifests = []
    rows = []
    for context_mode, soft in ABLATION_GRID:
        cell = with_overrides(config, context_mode=context_mode,
                              soft_targets=soft)
        cell_name = f"{context_mode}-{'soft' if soft else 'hard'}"
        cell_dir = out_dir / cell_name
        params, _, manifest = _train_run(cell, dataset, data_path, cell_dir)
        records = evaluate_split(params, cell, dataset, split="test")
        metrics_path = cell_dir / "metrics.jsonl"
        write_metrics(metrics_path, records, config_hash=config_hash(cell))
        manifest.metrics_path = str(metrics_path)
        manifest.write(cell_dir / "run.json")
        manifests.append(manifest)
        values = {(n, g): v for n, g, v in records}
        rows.append((cell_name, values))
    return manifests, rows


def ablation_table(rows, ks=(1, 5, 10)):
    header = f"{'run':12s} {'template':9s} {'soft':5s} " + " ".join(
        f"{'R@' + str(k):>7s}" for k in ks
    )
    lines = [header, "-" * len(header)]
    for cell_name, values in rows:
        context_mode, variant = cell_name.split("-")
        marks = ("long" if context_mode == "long" else "   .",
                 "yes" if variant == "soft" else "  .")
        recalls = " ".join(
            f"{np.mean([values[(f'r_at_{k}', d)] for d in ('i2t', 't2i')]):7.4f}"
            for k in ks
        )
        lines.append(f"{cell_name:12s} {marks[0]:9s} {marks[1]:5s} {recalls}")
    return "\n".join(lines)


def cmd_ablate(args):
    config = parse_config(args.config, _config_overrides(args))
    dataset = load_manifest(args.data)
    manifests, rows = run_ablate(config, dataset, args.data, args.out)
    table = ablation_table(rows)
    out_path = Path(args.out) / "ablation.txt"
    out_path.write_text(table + "\n", encoding="utf-8")
    print(table)
    print(f"\n4 runs, config hashes: {[m.config_hash for m in manifests]}")
    return 0


# --- report ----------------------------------------------------------------------

def cmd_report(args):
    for path in args.metrics:
        header, records = read_metrics(path)
        print(f"== {path} (config {header.get('config_hash', '?')}) ==")
        recalls = {(g, n): v for n, g, v in records if n.startswith("r_at_")}
        if recalls:
            ks = sorted({int(n.split("_")[-1]) for g, n in recalls})
            print("  retrieval")
            print("    direction " + " ".join(f"{'R@' + str(k):>8s}" for k in ks))
            for direction in ("i2t", "t2i"):
                row = " ".join(f"{recalls[(direction, f'r_at_{k}')]:8.4f}"
                               for k in ks if (direction, f"r_at_{k}") in recalls)
                print(f"    {direction:9s} {row}")
        silhouettes = [(g, v) for n, g, v in records if n == "silhouette"]
        if silhouettes:
            print("  silhouette")
            for grouping, value in silhouettes:
                print(f"    {grouping:10s} {value:8.4f}")
        covered = {"silhouette"} | {n for _, n in recalls}
        rest = [(n, g, v) for n, g, v in records if n not in covered]
        if rest:
            width = max(len(n) for n, _, _ in rest)
            for name, grouping, value in rest:
                print(f"  {name:{width}s}  {grouping:10s}  {value:10.4f}")
        print()
    return 0


# --- argument parsing ---------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="leafalign",
        description="Dual-encoder contrastive alignment on crop/disease data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic manifest")
    gen.add_argument("--out", required=True)
    gen.add_argument("--n-crops", type=int, default=6)
    gen.add_argument("--n-conditions", type=int, default=4)
    gen.add_argument("--n-classes", type=int, default=None,
                     help="populated classes (default: full grid)")
    gen.add_argument("--samples-per-class", type=int, default=30)
    gen.add_argument("--feature-dim", type=int, default=32)
    gen.add_argument("--crop-signal", type=float, default=2.0)
    gen.add_argument("--disease-signal", type=float, default=1.0)
    gen.add_argument("--class-signal", type=float, default=1.0)
    gen.add_argument("--noise-sigma", type=float, default=0.5)
    gen.add_argument("--split", default="0.7,0.2,0.1")
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(func=cmd_gen_data)

    def add_overrides(p):
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--peak-lr", dest="peak_lr", type=float)
        p.add_argument("--weight-decay", dest="weight_decay", type=float)
        p.add_argument("--tau", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--soft-targets", dest="soft_targets",
                       action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--context", dest="context_mode",
                       choices=("long", "short"))
        p.add_argument("--prompt")
        p.add_argument("--seed", type=int)
        p.add_argument("--d", type=int)

    tr = sub.add_parser("train", help="train encoders on a manifest")
    tr.add_argument("--config")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True)
    add_overrides(tr)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--run", help="run directory from `train`")
    ev.add_argument("--checkpoint")
    ev.add_argument("--config")
    ev.add_argument("--data", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--split", default="test")
    ev.add_argument("--probe-shots", dest="probe_shots",
                    help="comma-separated shot counts for linear probing")
    ev.add_argument("--probe-runs", dest="probe_runs", type=int, default=10)
    ev.set_defaults(func=cmd_eval)

    ab = sub.add_parser("ablate", help="run the context/soft-target grid")
    ab.add_argument("--config")
    ab.add_argument("--data", required=True)
    ab.add_argument("--out", required=True)
    add_overrides(ab)
    ab.set_defaults(func=cmd_ablate)

    rp = sub.add_parser("report", help="render metrics files as tables")
    rp.add_argument("metrics", nargs="+")
    rp.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except LeafAlignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
