"""Dataset splitting, the training loop, and Table-style metrics."""

from __future__ import annotations

import copy
import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ClassTooSmall, EmptySplit, FeatureIoError, NonFiniteLoss
from .features import read_jtfx
from .nn.loss import softmax_cross_entropy
from .nn.optim import Adam, TrainConfig

SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.7, 0.1, 0.2)


@dataclass
class ManifestEntry:
    path: str
    label: int
    split: str


@dataclass
class DatasetManifest:
    entries: list
    class_names: list
    extraction: dict = field(default_factory=dict)

    def for_split(self, split: str):
        return [e for e in self.entries if e.split == split]


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: np.ndarray               # [actual, predicted] counts
    per_class: list                     # (precision, recall, f1) per class

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "macroPrecision": self.macro_precision,
            "macroRecall": self.macro_recall,
            "macroF1": self.macro_f1,
            "averaging": "macro",
            "confusion": self.confusion.tolist(),
            "perClass": [{"precision": p, "recall": r, "f1": f}
                         for p, r, f in self.per_class],
        }


def largest_remainder_split(n: int):
    """Partition n items into 70/10/20 counts by largest-remainder rounding."""
    exact = [n * f for f in SPLIT_FRACTIONS]
    counts = [int(x) for x in exact]
    remainders = [x - c for x, c in zip(exact, counts)]
    # hand out leftover items by descending remainder, split order breaking ties
    order = sorted(range(3), key=lambda i: (-remainders[i], i))
    for i in order[:n - sum(counts)]:
        counts[i] += 1
    return tuple(counts)


def split_dataset(items_per_class: dict, seed: int,
                  extraction: dict | None = None) -> DatasetManifest:
    """Stratified per-class 70/10/20 split, deterministic for a fixed seed.

    ``items_per_class`` maps class name -> list of feature paths.
    """
    rng = np.random.default_rng(seed)
    class_names = sorted(items_per_class)
    entries = []
    for label, name in enumerate(class_names):
        paths = sorted(items_per_class[name])
        if len(paths) < 3:
            raise ClassTooSmall(f"class {name!r} has {len(paths)} items (< 3)")
        perm = rng.permutation(len(paths))
        shuffled = [paths[i] for i in perm]
        n_train, n_val, n_test = largest_remainder_split(len(paths))
        for i, p in enumerate(shuffled):
            if i < n_train:
                split = "train"
            elif i < n_train + n_val:
                split = "val"
            else:
                split = "test"
            entries.append(ManifestEntry(path=str(p), label=label, split=split))
    return DatasetManifest(entries=entries, class_names=class_names,
                           extraction=extraction or {})


def write_manifest(manifest: DatasetManifest, path):
    with open(path, "w") as f:
        meta = {"classNames": manifest.class_names, "extraction": manifest.extraction}
        f.write(json.dumps(meta, sort_keys=True) + "\n")
        for e in manifest.entries:
            f.write(json.dumps({"path": e.path, "label": e.label, "split": e.split}) + "\n")


def read_manifest(path) -> DatasetManifest:
    with open(path) as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise FeatureIoError(f"{path}: empty manifest")
    meta = json.loads(lines[0])
    entries = [ManifestEntry(**json.loads(line)) for line in lines[1:]]
    return DatasetManifest(entries=entries,
                           class_names=meta.get("classNames", []),
                           extraction=meta.get("extraction", {}))


def load_features(path):
    """Load a JTFX file as the float32 tensor list models consume."""
    _, tensors = read_jtfx(path)
    return [t.astype(np.float32) for t in tensors]


def metrics_from_confusion(confusion: np.ndarray) -> MetricsReport:
    confusion = np.asarray(confusion, dtype=np.int64)
    k = confusion.shape[0]
    total = confusion.sum()
    accuracy = float(np.trace(confusion) / total) if total else 0.0
    per_class = []
    for c in range(k):
        tp = confusion[c, c]
        predicted = confusion[:, c].sum()
        actual = confusion[c, :].sum()
        precision = float(tp / predicted) if predicted else 0.0
        recall = float(tp / actual) if actual else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append((precision, recall, f1))
    return MetricsReport(
        accuracy=accuracy,
        macro_precision=float(np.mean([p for p, _, _ in per_class])),
        macro_recall=float(np.mean([r for _, r, _ in per_class])),
        macro_f1=float(np.mean([f for _, _, f in per_class])),
        confusion=confusion,
        per_class=per_class,
    )


def evaluate(model, manifest: DatasetManifest, split: str,
             features_by_path: dict | None = None) -> MetricsReport:
    entries = manifest.for_split(split)
    if not entries:
        raise EmptySplit(f"split {split!r} is empty")
    k = len(manifest.class_names) or max(e.label for e in entries) + 1
    confusion = np.zeros((k, k), dtype=np.int64)
    for e in entries:
        feats = (features_by_path[e.path] if features_by_path is not None
                 else load_features(e.path))
        confusion[e.label, model.predict(feats)] += 1
    return metrics_from_confusion(confusion)


def _epoch_eval(model, entries, features):
    loss_sum = 0.0
    correct = 0
    for e in entries:
        logits = model.forward(features[e.path])
        loss, _ = softmax_cross_entropy(logits, e.label)
        loss_sum += loss
        if int(np.argmax(logits)) == e.label:
            correct += 1
    n = len(entries)
    return loss_sum / n, correct / n


def train(model, manifest: DatasetManifest, config: TrainConfig,
          features_by_path: dict | None = None):
    """Minibatch Adam with early stopping on validation accuracy.

    Returns (model restored to the best-validation parameters, history);
    history rows are dicts with epoch/trainLoss/trainAcc/valLoss/valAcc.
    """
    train_entries = manifest.for_split("train")
    val_entries = manifest.for_split("val")
    if not train_entries:
        raise EmptySplit("train split is empty")
    monitor = val_entries or train_entries    # fall back when no val items exist

    features = features_by_path
    if features is None:
        features = {}
        for e in manifest.entries:
            if e.path not in features:
                features[e.path] = load_features(e.path)

    optimizer = Adam(model.param_grad_pairs(), config)
    rng = np.random.default_rng(config.seed)
    history = []
    best_acc = -1.0
    best_state = None
    best_epoch = -1

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_entries))
        train_loss = 0.0
        train_correct = 0
        for start in range(0, len(order), config.batch_size):
            batch = [train_entries[i] for i in order[start:start + config.batch_size]]
            model.zero_grad()
            for e in batch:
                logits = model.forward(features[e.path])
                loss, dlogits = softmax_cross_entropy(logits, e.label)
                if not np.isfinite(loss):
                    raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}")
                train_loss += loss
                if int(np.argmax(logits)) == e.label:
                    train_correct += 1
                model.backward(dlogits / len(batch))
            optimizer.step()
        val_loss, val_acc = _epoch_eval(model, monitor, features)
        history.append({
            "epoch": epoch,
            "trainLoss": train_loss / len(train_entries),
            "trainAcc": train_correct / len(train_entries),
            "valLoss": val_loss,
            "valAcc": val_acc,
        })
        if val_acc > best_acc:
            best_acc = val_acc
            best_state = copy.deepcopy(model.state_dict())
            best_epoch = epoch
        elif epoch - best_epoch >= config.early_stop_patience:
            break

    if best_state is not None:
        model.load_state(best_state)
    return model, history


def write_history_csv(history, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "trainLoss", "trainAcc", "valLoss", "valAcc"])
        for row in history:
            writer.writerow([row["epoch"],
                             f"{row['trainLoss']:.6f}", f"{row['trainAcc']:.6f}",
                             f"{row['valLoss']:.6f}", f"{row['valAcc']:.6f}"])


def write_metrics_json(report: MetricsReport, path, extra: dict | None = None):
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
