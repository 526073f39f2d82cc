"""Command-line front end.

Heavy imports happen inside the command handlers so that --threads can pin
BLAS/JIT thread counts through the environment before numpy loads.

Exit codes: 0 success, 1 some per-item failures, 2 configuration or corpus
errors. Commands with an output directory drop a `run_config` file beside
their outputs; `train --config run_config` replays a stored run.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

_CLASS_PRESETS = ("av7", "all10")


class SystemExit2(Exception):
    """Configuration/corpus error destined for exit code 2."""


def _data_dir(args):
    data = args.data or os.environ.get("URBAN_ACOUSTICS_DATA")
    if not data:
        raise SystemExit2("no dataset directory: pass --data or set URBAN_ACOUSTICS_DATA")
    return Path(data)


def _preset_ids(preset):
    from .dataset import AV_SUBSET_IDS, CLASS_NAMES

    if preset == "av7":
        return AV_SUBSET_IDS
    return tuple(range(len(CLASS_NAMES)))


# ---------------------------------------------------------------------------
# RunConfig: flat key=value serialization of a resolved run


_RUN_KEYS = (
    "command", "data", "out", "cache", "classes", "epochs", "batch_size", "lr",
    "seed", "split_ratio", "split_mode", "precision", "eval_interval",
    "limit_per_class", "clean_train_metrics", "augment", "shift_limit",
    "freq_mask_width", "time_mask_width", "n_freq_masks", "n_time_masks",
    "n_fft", "hop", "n_mels", "num_classes", "per_class",
)


def write_run_config(path, values):
    lines = ["# resolved run configuration; replay with: urban-acoustics train --config <this file>"]
    for key in _RUN_KEYS:
        if key in values and values[key] is not None:
            lines.append(f"{key} = {values[key]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_run_config(path):
    values = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SystemExit2(f"{path}:{line_no}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _RUN_KEYS:
            raise SystemExit2(f"{path}:{line_no}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def _pick(args, name, stored, cast, default, key=None):
    """Explicit flag beats the stored config file value beats the default.

    `key` is the run_config key when it differs from the argparse attribute.
    """
    flag = getattr(args, name, None)
    if flag is not None:
        return flag
    raw = stored.get(key or name)
    if raw is not None:
        if cast is bool:
            return raw.lower() in ("1", "true", "yes")
        return cast(raw)
    return default


def _build_train_config(args):
    from .features import AugmentConfig
    from .train import TrainConfig

    stored = read_run_config(args.config) if args.config else {}
    if stored and stored.get("command") not in (None, "train"):
        raise SystemExit2(f"{args.config} was written by "
                          f"'{stored.get('command')}', not train")

    classes = _pick(args, "classes", stored, str, "av7")
    augment_on = not args.no_augment if args.no_augment else _pick(
        args, "augment", stored, bool, True)
    augment = AugmentConfig(
        enabled=augment_on,
        shift_limit=_pick(args, "shift_limit", stored, float, 0.4),
        freq_mask_width=_pick(args, "freq_mask_width", stored, int, 6),
        time_mask_width=_pick(args, "time_mask_width", stored, int, 34),
        n_freq_masks=_pick(args, "n_freq_masks", stored, int, 1),
        n_time_masks=_pick(args, "n_time_masks", stored, int, 1),
    )
    config = TrainConfig(
        epochs=_pick(args, "epochs", stored, int, 100),
        batch_size=_pick(args, "batch", stored, int, 16, key="batch_size"),
        lr=_pick(args, "lr", stored, float, 1e-3),
        seed=_pick(args, "seed", stored, int, 0),
        split_ratio=_pick(args, "split_ratio", stored, float, 0.8),
        kept_class_ids=_preset_ids(classes),
        augment=augment,
        split_mode=_pick(args, "split", stored, str, "random", key="split_mode"),
        precision=_pick(args, "precision", stored, str, "f32"),
        eval_interval=_pick(args, "eval_interval", stored, int, 1),
        clean_train_metrics=_pick(args, "clean_train_metrics", stored, bool, False),
        limit_per_class=_pick(args, "limit_per_class", stored, int, 0),
        n_fft=_pick(args, "n_fft", stored, int, 1024),
        hop=_pick(args, "hop", stored, int, 512),
        n_mels=_pick(args, "n_mels", stored, int, 64),
    )
    return config, classes, stored


def _train_run_values(command, config, classes, data, out, cache):
    return {
        "command": command, "data": data, "out": out, "cache": cache,
        "classes": classes, "epochs": config.epochs,
        "batch_size": config.batch_size, "lr": config.lr, "seed": config.seed,
        "split_ratio": config.split_ratio, "split_mode": config.split_mode,
        "precision": config.precision, "eval_interval": config.eval_interval,
        "limit_per_class": config.limit_per_class,
        "clean_train_metrics": config.clean_train_metrics,
        "augment": config.augment.enabled,
        "shift_limit": config.augment.shift_limit,
        "freq_mask_width": config.augment.freq_mask_width,
        "time_mask_width": config.augment.time_mask_width,
        "n_freq_masks": config.augment.n_freq_masks,
        "n_time_masks": config.augment.n_time_masks,
        "n_fft": config.n_fft, "hop": config.hop, "n_mels": config.n_mels,
    }


# ---------------------------------------------------------------------------
# commands


def cmd_prepare(args):
    from .dataset import load_dataset
    from .features import FeatureCache, FeatureError, extract_features

    data = _data_dir(args)
    manifest = load_dataset(data)
    kept = set(_preset_ids(args.classes or "all10"))
    cache_dir = Path(args.cache) if args.cache else data / "feature_cache"
    cache = FeatureCache(cache_dir)

    failures = []
    counts = {}
    for e in manifest.entries:
        if e.class_id not in kept:
            continue
        try:
            extract_features(e.path, cache=cache,
                             cache_key=f"fold{e.fold}_{e.file_name}")
        except (FeatureError, OSError) as exc:
            failures.append(f"{e.path}: {exc}")
            continue
        counts[e.class_id] = counts.get(e.class_id, 0) + 1

    print(f"cached features for {sum(counts.values())} clips in {len(counts)} classes")
    for cid in sorted(counts):
        print(f"  {manifest.class_names[cid]:>18s}  {counts[cid]}")
    write_run_config(cache_dir / "run_config", {
        "command": "prepare", "data": data, "cache": cache_dir,
        "classes": args.classes or "all10",
    })
    if failures:
        print(f"{len(failures)} unreadable files:", file=sys.stderr)
        for f in failures:
            print(f"  {f}", file=sys.stderr)
        return 1
    return 0


def cmd_train(args):
    from .dataset import load_dataset
    from .features import FeatureCache
    from .train import train, write_confusion_csvs, write_history_csv

    config, classes, stored = _build_train_config(args)
    data = args.data or stored.get("data") or os.environ.get("URBAN_ACOUSTICS_DATA")
    if not data:
        raise SystemExit2("no dataset directory: pass --data or set URBAN_ACOUSTICS_DATA")
    out = Path(args.out) if args.out else (Path(stored["out"]) if stored.get("out") else None)
    if out is None:
        raise SystemExit2("no output directory: pass --out")
    out.mkdir(parents=True, exist_ok=True)

    cache_arg = args.cache or stored.get("cache")
    cache = FeatureCache(cache_arg) if cache_arg else None

    manifest = load_dataset(Path(data))
    result = train(manifest, config, out_dir=out, cache=cache)

    write_history_csv(out / "history.csv", result.records)
    write_confusion_csvs(out, result.final_eval.confusion)
    write_run_config(out / "run_config", _train_run_values(
        "train", config, classes, data, out, cache_arg))

    print(f"final test accuracy: {result.final_eval.accuracy:.4f}")
    for name, acc in zip(result.subset.class_names, result.final_eval.per_class):
        shown = "undefined" if acc is None else f"{acc:.4f}"
        print(f"  {name:>18s}  {shown}")
    return 0


def cmd_eval(args):
    from .checkpoint import load_checkpoint, restore_model
    from .dataset import load_dataset, select_subset
    from .features import FeatureCache
    from .fourier import StftConfig
    from .train import evaluate, write_confusion_csvs

    ckpt = load_checkpoint(args.checkpoint)
    net = restore_model(ckpt)
    kept = tuple(ckpt.metadata.get("kept_class_ids", ()))
    if not kept:
        raise SystemExit2(f"{args.checkpoint} does not record its class subset")
    if args.classes and _preset_ids(args.classes) != kept:
        raise SystemExit2(
            f"class subset mismatch: checkpoint was trained on classes {kept}, "
            f"--classes {args.classes} selects {_preset_ids(args.classes)}"
        )

    data = _data_dir(args)
    manifest = load_dataset(data)
    entries, subset = select_subset(manifest.entries, kept)
    if not entries:
        raise SystemExit2(f"no clips of classes {kept} under {data}")

    cfg = ckpt.metadata.get("config", {})
    stft = StftConfig(n_fft=int(cfg.get("n_fft", 1024)), hop=int(cfg.get("hop", 512)))
    cache = FeatureCache(args.cache) if args.cache else None
    result = evaluate(net, entries, subset, cache=cache,
                      stft_config=stft, n_mels=int(cfg.get("n_mels", 64)))

    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    write_confusion_csvs(out, result.confusion)
    write_run_config(out / "run_config", {
        "command": "eval", "data": data, "out": out, "cache": args.cache,
        "classes": args.classes,
    })
    print(f"test accuracy: {result.accuracy:.4f} over {len(entries)} clips")
    for name, acc in zip(subset.class_names, result.per_class):
        shown = "undefined" if acc is None else f"{acc:.4f}"
        print(f"  {name:>18s}  {shown}")
    return 0


def cmd_predict(args):
    from .checkpoint import load_checkpoint, restore_model
    from .dataset import make_subset
    from .features import FeatureError
    from .fourier import StftConfig
    from .train import predict

    ckpt = load_checkpoint(args.checkpoint)
    net = restore_model(ckpt)
    kept = tuple(ckpt.metadata.get("kept_class_ids", ()))
    if not kept:
        raise SystemExit2(f"{args.checkpoint} does not record its class subset")
    subset = make_subset(kept)
    cfg = ckpt.metadata.get("config", {})
    stft = StftConfig(n_fft=int(cfg.get("n_fft", 1024)), hop=int(cfg.get("hop", 512)))

    failed = 0
    for wav in args.wavs:
        try:
            name, probs = predict(net, subset, wav, stft_config=stft,
                                  n_mels=int(cfg.get("n_mels", 64)))
        except (FeatureError, OSError) as exc:
            print(f"{wav}: error: {exc}", file=sys.stderr)
            failed += 1
            continue
        shown = " ".join(f"{n}={p:.4f}" for n, p in zip(subset.class_names, probs))
        print(f"{wav}\t{name}\t{shown}")
    return 1 if failed else 0


def cmd_synth(args):
    from .synth import make_synthetic_corpus

    out = Path(args.out)
    manifest = make_synthetic_corpus(out, num_classes=args.classes,
                                     per_class=args.per_class, seed=args.seed)
    write_run_config(out / "run_config", {
        "command": "synth", "out": out, "num_classes": args.classes,
        "per_class": args.per_class, "seed": args.seed,
    })
    print(f"wrote {len(manifest.entries)} clips across {args.classes} classes to {out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="urban-acoustics",
        description="Urban sound classification: features, training, evaluation.",
    )
    parser.add_argument("--threads", type=int, metavar="N",
                        help="cap BLAS/JIT worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate a corpus and build the feature cache")
    p.add_argument("--data", help="corpus root (default: $URBAN_ACOUSTICS_DATA)")
    p.add_argument("--cache", help="cache directory (default: <data>/feature_cache)")
    p.add_argument("--classes", choices=_CLASS_PRESETS)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a classifier")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--config", help="replay a stored run_config file")
    p.add_argument("--classes", choices=_CLASS_PRESETS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--split", choices=("random", "folds"))
    p.add_argument("--split-ratio", dest="split_ratio", type=float)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--precision", choices=("f32", "f64"))
    p.add_argument("--eval-interval", dest="eval_interval", type=int)
    p.add_argument("--limit-per-class", dest="limit_per_class", type=int)
    p.add_argument("--clean-train-metrics", dest="clean_train_metrics",
                   action="store_const", const=True)
    p.add_argument("--cache")
    p.add_argument("--n-fft", dest="n_fft", type=int)
    p.add_argument("--hop", dest="hop", type=int)
    p.add_argument("--n-mels", dest="n_mels", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--out", help="where to write confusion CSVs (default: beside checkpoint)")
    p.add_argument("--classes", choices=_CLASS_PRESETS)
    p.add_argument("--cache")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify WAV files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("wavs", nargs="+", metavar="wav")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="generate a synthetic test corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=7, help="number of classes (1-7)")
    p.add_argument("--per-class", dest="per_class", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads:
        os.environ.setdefault("OPENBLAS_NUM_THREADS", str(args.threads))
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
        os.environ.setdefault("NUMBA_NUM_THREADS", str(args.threads))
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    try:
        return args.func(args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # corpus/config problems surface here
        from .checkpoint import CheckpointError
        from .dataset import MetadataError
        from .features import FeatureError

        if isinstance(exc, (MetadataError, CheckpointError, FeatureError,
                            ValueError, OSError)):
            print(f"error: {exc}", file=sys.stderr)
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
