"""Training orchestration: epochs, batching, metrics, and the CSV artifacts.

One master seed fans out through named streams so each consumer can be
reproduced in isolation:

    split       default_rng-derived integer from (seed, 0)
    shuffle     default_rng([seed, 1, epoch])
    augment     default_rng([seed, 2, epoch, entry_index])
    init        integer from (seed, 3)
    limit       default_rng([seed, 4])

entry_index is the clip's position in the subset-filtered entry list, so
augmentation draws depend only on (seed, epoch, position), never on batch
timing or order.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as model_mod
from .checkpoint import save_checkpoint
from .dataset import AV_SUBSET_IDS, select_subset, split_by_folds, split_entries
from .features import N_MELS, AugmentConfig, extract_features
from .fourier import StftConfig
from .layers import softmax, softmax_cross_entropy
from .optim import adam_step, init_adam

log = logging.getLogger(__name__)

STREAM_SPLIT = 0
STREAM_SHUFFLE = 1
STREAM_AUGMENT = 2
STREAM_INIT = 3
STREAM_LIMIT = 4


def derive_rng(seed, *stream):
    return np.random.default_rng([int(seed), *(int(s) for s in stream)])


def derive_seed(seed, *stream):
    seq = np.random.SeedSequence([int(seed), *(int(s) for s in stream)])
    return int(seq.generate_state(1)[0])


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0
    split_ratio: float = 0.8
    kept_class_ids: tuple = AV_SUBSET_IDS
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    split_mode: str = "random"  # or "folds"
    precision: str = "f32"  # or "f64" for bit-reproducible verification runs
    eval_interval: int = 1
    clean_train_metrics: bool = False  # re-score the train split in eval mode
    limit_per_class: int = 0  # 0 = use everything
    n_fft: int = 1024
    hop: int = 512
    n_mels: int = N_MELS

    def validate(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.split_mode not in ("random", "folds"):
            raise ValueError(f"unknown split mode {self.split_mode!r}")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"unknown precision {self.precision!r}")
        if self.eval_interval < 1:
            raise ValueError(f"eval_interval must be >= 1, got {self.eval_interval}")

    @property
    def dtype(self):
        return np.dtype(np.float64 if self.precision == "f64" else np.float32)

    @property
    def stft(self):
        return StftConfig(n_fft=self.n_fft, hop=self.hop)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float = None  # None on epochs without an eval pass


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (K, K) int64, rows true, columns predicted
    class_names: tuple

    @property
    def accuracy(self):
        total = int(self.counts.sum())
        if total == 0:
            raise ValueError("confusion matrix is empty")
        return float(np.trace(self.counts)) / total

    def per_class_accuracy(self):
        """Diagonal over row sum per class; None where the class has no
        test examples (undefined, deliberately not zero)."""
        out = []
        for i in range(self.counts.shape[0]):
            row = int(self.counts[i].sum())
            out.append(float(self.counts[i, i]) / row if row else None)
        return out


@dataclass
class EvalResult:
    accuracy: float
    confusion: ConfusionMatrix
    per_class: list


@dataclass
class TrainResult:
    model: object
    records: list
    entries: list  # subset-filtered, in manifest order
    subset: object
    split: object
    final_eval: EvalResult


def _limit_per_class(entries, limit, seed):
    if not limit:
        return entries
    rng = derive_rng(seed, STREAM_LIMIT)
    by_class = {}
    for i, e in enumerate(entries):
        by_class.setdefault(e.class_id, []).append(i)
    keep = []
    for cid in sorted(by_class):
        idxs = by_class[cid]
        perm = rng.permutation(len(idxs))
        keep.extend(idxs[int(p)] for p in perm[:limit])
    return [entries[i] for i in sorted(keep)]


def _batch_spans(n, batch_size, order):
    """Index batches; a trailing singleton is merged into the previous batch
    because train-mode batch norm needs at least two samples."""
    spans = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(spans) >= 2 and len(spans[-1]) == 1:
        spans[-2] = np.concatenate([spans[-2], spans[-1]])
        spans.pop()
    return spans


def _load_batch(entries, indices, dtype, augment=None, rngs=None, cache=None,
                stft_config=None, n_mels=N_MELS):
    mats = []
    labels = []
    stft_config = stft_config if stft_config is not None else StftConfig()
    for i in indices:
        e = entries[int(i)]
        feats = extract_features(
            e.path,
            augment=augment,
            rng=rngs[int(i)] if rngs is not None else None,
            stft_config=stft_config,
            n_mels=n_mels,
            cache=cache,
            cache_key=f"fold{e.fold}_{e.file_name}",
        )
        mats.append(feats.data.astype(dtype, copy=False))
        labels.append(e.class_id)
    return np.stack(mats), labels


def evaluate(model, entries, subset, cache=None, batch_size=16,
             stft_config=None, n_mels=N_MELS):
    """Eval-mode accuracy and confusion over un-augmented features.

    Predictions argmax the logits; ties resolve to the lowest class index.
    The result does not depend on the order of `entries`.
    """
    if not entries:
        raise ValueError("evaluate needs at least one entry")
    k = subset.num_classes
    counts = np.zeros((k, k), dtype=np.int64)
    for start in range(0, len(entries), batch_size):
        chunk = entries[start : start + batch_size]
        x, class_ids = _load_batch(chunk, range(len(chunk)), model.dtype,
                                   cache=cache, stft_config=stft_config,
                                   n_mels=n_mels)
        logits = model_mod.forward(model, x, training=False)
        pred = np.argmax(logits, axis=1)
        for cid, p in zip(class_ids, pred):
            counts[subset.remap(cid), int(p)] += 1
    cm = ConfusionMatrix(counts, subset.class_names)
    return EvalResult(cm.accuracy, cm, cm.per_class_accuracy())


def predict(model, subset, wav_path, cache=None, stft_config=None, n_mels=N_MELS):
    """(class name, probability vector) for one WAV file."""
    feats = extract_features(wav_path, stft_config=stft_config or StftConfig(),
                             n_mels=n_mels, cache=cache)
    x = feats.data[None].astype(model.dtype, copy=False)
    logits = model_mod.forward(model, x, training=False)
    probs = softmax(logits.astype(np.float64))[0]
    return subset.class_names[int(np.argmax(probs))], probs


def train(manifest, config, out_dir=None, cache=None):
    """Run the full loop and return the trained model plus per-epoch records.

    With out_dir set, writes checkpoint.bin after the last epoch and best.bin
    whenever test accuracy improves. Feature or IO failures abort with the
    offending file in the message.
    """
    config.validate()
    entries, subset = select_subset(manifest.entries, config.kept_class_ids)
    entries = _limit_per_class(entries, config.limit_per_class, config.seed)
    if not entries:
        raise ValueError("no usable clips after class filtering")

    if config.split_mode == "folds":
        split = split_by_folds(entries, config.split_ratio)
    else:
        split = split_entries(entries, config.split_ratio,
                              derive_seed(config.seed, STREAM_SPLIT))
    if not split.train_indices or not split.test_indices:
        raise ValueError(
            f"split produced {len(split.train_indices)} train / "
            f"{len(split.test_indices)} test clips; need both non-empty"
        )
    test_entries = [entries[i] for i in split.test_indices]
    train_entries = [entries[i] for i in split.train_indices]

    cfg = model_mod.ModelConfig(num_classes=subset.num_classes)
    net = model_mod.init_params(cfg, derive_seed(config.seed, STREAM_INIT),
                                dtype=config.dtype)
    opt = init_adam(net.params, lr=config.lr)
    augment = config.augment if config.augment.enabled else None

    remap = np.array([subset.remap(e.class_id) for e in entries])
    records = []
    best_acc = -1.0
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    last_eval = None

    for epoch in range(1, config.epochs + 1):
        order = derive_rng(config.seed, STREAM_SHUFFLE, epoch).permutation(
            np.array(split.train_indices))
        rngs = None
        if augment is not None:
            rngs = {
                int(i): derive_rng(config.seed, STREAM_AUGMENT, epoch, int(i))
                for i in split.train_indices
            }

        loss_sum = 0.0
        hit = 0
        seen = 0
        for span in _batch_spans(len(order), config.batch_size, order):
            x, class_ids = _load_batch(entries, span, config.dtype,
                                       augment=augment, rngs=rngs, cache=cache,
                                       stft_config=config.stft,
                                       n_mels=config.n_mels)
            labels = remap[span]
            logits, caches = model_mod.forward(net, x, training=True,
                                               return_caches=True)
            loss, grad = softmax_cross_entropy(logits, labels)
            grads = model_mod.backward(net, caches, grad)
            adam_step(net.params, grads, opt)
            loss_sum += loss * len(span)
            hit += int((np.argmax(logits, axis=1) == labels).sum())
            seen += len(span)

        train_loss = loss_sum / seen
        if config.clean_train_metrics:
            train_acc = evaluate(net, train_entries, subset, cache=cache,
                                 batch_size=config.batch_size,
                                 stft_config=config.stft,
                                 n_mels=config.n_mels).accuracy
        else:
            train_acc = hit / seen

        test_acc = None
        if epoch % config.eval_interval == 0 or epoch == config.epochs:
            last_eval = evaluate(net, test_entries, subset, cache=cache,
                                 batch_size=config.batch_size,
                                 stft_config=config.stft, n_mels=config.n_mels)
            test_acc = last_eval.accuracy
            if out_dir is not None and test_acc > best_acc:
                best_acc = test_acc
                save_checkpoint(out_dir / "best.bin", net,
                                _checkpoint_meta(config, subset, epoch))
        records.append(EpochRecord(epoch, train_loss, train_acc, test_acc))
        log.info("epoch %d/%d loss %.4f train_acc %.4f%s", epoch, config.epochs,
                 train_loss, train_acc,
                 f" test_acc {test_acc:.4f}" if test_acc is not None else "")

    if last_eval is None:
        last_eval = evaluate(net, test_entries, subset, cache=cache,
                             batch_size=config.batch_size,
                             stft_config=config.stft, n_mels=config.n_mels)
    if out_dir is not None:
        save_checkpoint(out_dir / "checkpoint.bin", net,
                        _checkpoint_meta(config, subset, config.epochs))
    return TrainResult(net, records, entries, subset, split, last_eval)


def _checkpoint_meta(config, subset, epoch):
    fields = {
        "epochs": config.epochs, "batch_size": config.batch_size, "lr": config.lr,
        "seed": config.seed, "split_ratio": config.split_ratio,
        "kept_class_ids": list(config.kept_class_ids),
        "split_mode": config.split_mode, "precision": config.precision,
        "augment_enabled": config.augment.enabled,
        "n_fft": config.n_fft, "hop": config.hop, "n_mels": config.n_mels,
    }
    digest = hashlib.sha256(json.dumps(fields, sort_keys=True).encode()).hexdigest()
    return {
        "seed": config.seed,
        "epoch": epoch,
        "config": fields,
        "config_hash": digest[:16],
        "kept_class_ids": list(subset.kept_class_ids),
        "class_names": list(subset.class_names),
    }


# ---------------------------------------------------------------------------
# CSV artifacts


def write_history_csv(path, records):
    lines = ["epoch,train_loss,train_acc,test_acc"]
    for r in records:
        test = "" if r.test_acc is None else f"{r.test_acc:.6f}"
        lines.append(f"{r.epoch},{r.train_loss:.17g},{r.train_acc:.6f},{test}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_confusion_csvs(out_dir, cm):
    out_dir = Path(out_dir)
    names = cm.class_names
    header = "," + ",".join(names)

    lines = [header]
    for i, name in enumerate(names):
        lines.append(name + "," + ",".join(str(int(v)) for v in cm.counts[i]))
    (out_dir / "confusion.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = [header]
    for i, name in enumerate(names):
        row = cm.counts[i]
        total = row.sum()
        vals = row / total if total else np.zeros_like(row, dtype=np.float64)
        lines.append(name + "," + ",".join(f"{v:.4f}" for v in vals))
    (out_dir / "confusion_normalized.csv").write_text("\n".join(lines) + "\n",
                                                      encoding="utf-8")
