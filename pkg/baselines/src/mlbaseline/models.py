"""Off-the-shelf baseline models over record containers.

Two pipelines, both consuming HAI1 files and emitting a BaselineResult:

- a three-layer perceptron (Keras; dense 300/100 relu + softmax, SGD), the
  stock image-classification recipe with nothing adapted but the input width;
- a two-step random forest: a first forest is trained with the hard classes
  held out, and validation records whose step-1 confidence falls below a
  threshold are re-decided by a second forest that knows the hard classes
  (which may also hand the record back, as an error check).

Accuracy is always computed on the untouched validation split.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .containers import Container, read_container

REPORT_VERSION = 1
REST = -1  # step-2 bucket for "not one of the special classes"


@dataclass(frozen=True)
class BaselineResult:
    model_id: str
    dataset_id: str
    delta: str
    validation_accuracy: float
    train_ms: float
    eval_ms: float
    per_class_accuracy: list
    config: dict = field(default_factory=dict)
    report_version: int = REPORT_VERSION

    def __post_init__(self):
        if not 0.0 <= self.validation_accuracy <= 1.0:
            raise ValueError("validation_accuracy must lie in [0, 1]")
        for value in self.per_class_accuracy:
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError("per-class accuracies must lie in [0, 1]")
        if self.train_ms < 0 or self.eval_ms < 0:
            raise ValueError("negative wall time")

    def to_json(self) -> str:
        return json.dumps(
            {
                "report_version": self.report_version,
                "model_id": self.model_id,
                "dataset_id": self.dataset_id,
                "delta": self.delta,
                "validation_accuracy": self.validation_accuracy,
                "train_ms": self.train_ms,
                "eval_ms": self.eval_ms,
                "per_class_accuracy": self.per_class_accuracy,
                "config": self.config,
            },
            sort_keys=True,
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "BaselineResult":
        obj = json.loads(text)
        version = obj.pop("report_version")
        if version != REPORT_VERSION:
            raise ValueError(f"unsupported report version {version}")
        return BaselineResult(report_version=version, **obj)


def _load_labeled(path) -> Container:
    box = read_container(path)
    if box.labels is None:
        raise ValueError(f"{path}: model training needs labels")
    return box


def _per_class(y_true: np.ndarray, y_pred: np.ndarray, classes: int) -> list:
    out = []
    for cls in range(classes):
        members = y_true == cls
        if not members.any():
            out.append(None)
        else:
            out.append(float(np.mean(y_pred[members] == cls)))
    return out


def _accuracy_result(model_id, train_path, val_path, box, y_val, preds,
                     train_ms, eval_ms, classes, config) -> BaselineResult:
    return BaselineResult(
        model_id=model_id,
        dataset_id=f"{os.path.basename(str(train_path))}|{os.path.basename(str(val_path))}",
        delta=box.delta,
        validation_accuracy=float(np.mean(preds == y_val)),
        train_ms=train_ms,
        eval_ms=eval_ms,
        per_class_accuracy=_per_class(y_val, preds, classes),
        config=config,
    )


# -- three-layer perceptron -------------------------------------------------------


def run_mlp(
    train_path,
    val_path,
    *,
    epochs: int = 30,
    seed: int = 0,
    hidden=(300, 100),
    batch_size: int = 32,
    learning_rate: float = 0.01,
) -> BaselineResult:
    """Train the stock dense 300/100/softmax recipe; only input width varies."""
    if epochs < 1:
        raise ValueError("epochs must be positive")
    os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "3")
    import tensorflow as tf

    train = _load_labeled(train_path)
    val = _load_labeled(val_path)
    x_train = train.features()
    x_val = val.features()
    if x_train.shape[1] != x_val.shape[1]:
        raise ValueError("train and validation widths differ")
    # value payloads arrive as 0..255-ish codes; bits are already 0/1
    scale = max(1.0, float(x_train.max()))
    x_train = x_train / scale
    x_val = x_val / scale
    y_train = train.labels
    y_val = val.labels
    classes = int(max(y_train.max(), y_val.max())) + 1

    tf.keras.utils.set_random_seed(seed)
    layers = [tf.keras.layers.Input((x_train.shape[1],))]
    layers += [tf.keras.layers.Dense(w, activation="relu") for w in hidden]
    layers += [tf.keras.layers.Dense(classes, activation="softmax")]
    model = tf.keras.Sequential(layers)
    model.compile(
        optimizer=tf.keras.optimizers.SGD(learning_rate=learning_rate),
        loss="sparse_categorical_crossentropy",
        metrics=["accuracy"],
    )
    t0 = time.perf_counter()
    model.fit(x_train, y_train, epochs=epochs, batch_size=batch_size, verbose=0)
    train_ms = (time.perf_counter() - t0) * 1e3
    t0 = time.perf_counter()
    preds = np.argmax(model.predict(x_val, verbose=0), axis=1)
    eval_ms = (time.perf_counter() - t0) * 1e3

    config = {
        "epochs": epochs,
        "seed": seed,
        "hidden": list(hidden),
        "batch_size": batch_size,
        "learning_rate": learning_rate,
        "classes": classes,
        "input_width": int(x_train.shape[1]),
    }
    return _accuracy_result("mlp-3layer", train_path, val_path, val, y_val,
                            preds, train_ms, eval_ms, classes, config)


# -- two-step random forest -------------------------------------------------------


def run_rf_twostep(
    train_path,
    val_path,
    *,
    trees: int = 1_500,
    threshold: float = 0.5,
    special_classes=(6,),
    seed: int = 0,
    n_jobs: int = -1,
) -> BaselineResult:
    """Forest with hard classes held out, plus a second forest behind a
    confidence gate. An empty ``special_classes`` degenerates to one forest."""
    from sklearn.ensemble import RandomForestClassifier

    if trees < 1:
        raise ValueError("trees must be positive")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie strictly between 0 and 1")
    train = _load_labeled(train_path)
    val = _load_labeled(val_path)
    x_train = train.features()
    x_val = val.features()
    y_train = np.asarray(train.labels)
    y_val = np.asarray(val.labels)
    classes = int(max(y_train.max(), y_val.max())) + 1
    special = sorted(int(c) for c in set(special_classes))
    seen = set(np.unique(y_train).tolist())
    if any(c not in seen for c in special):
        raise ValueError(f"special classes {special} not all present in training data")

    def forest(extra_seed):
        return RandomForestClassifier(
            n_estimators=trees, random_state=seed + extra_seed, n_jobs=n_jobs
        )

    t0 = time.perf_counter()
    keep = ~np.isin(y_train, special)
    m1 = forest(0).fit(x_train[keep], y_train[keep])
    m2 = None
    if special:
        # step 2 learns the special classes against a single "rest" bucket
        y2 = np.where(np.isin(y_train, special), y_train, REST)
        m2 = forest(1).fit(x_train, y2)
    train_ms = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    proba1 = m1.predict_proba(x_val)
    preds = m1.classes_[np.argmax(proba1, axis=1)]
    routed = np.zeros(len(y_val), dtype=bool)
    if special:
        routed = np.max(proba1, axis=1) < threshold
        if routed.any():
            step2 = m2.predict(x_val[routed])
            # REST is the error check: the record goes back to step 1
            preds[routed] = np.where(step2 == REST, preds[routed], step2)
    eval_ms = (time.perf_counter() - t0) * 1e3

    step1_members = ~np.isin(y_val, special)
    step1_accuracy = (
        float(np.mean(preds[step1_members] == y_val[step1_members]))
        if step1_members.any()
        else None
    )
    config = {
        "trees": trees,
        "threshold": threshold,
        "special_classes": special,
        "seed": seed,
        "classes": classes,
        "routed_count": int(routed.sum()),
        "step1_validation_accuracy": step1_accuracy,
    }
    return _accuracy_result("rf-2step", train_path, val_path, val, y_val,
                            np.asarray(preds), train_ms, eval_ms, classes, config)


def compare_runtime(plain: BaselineResult, protected: BaselineResult) -> float:
    """Fractional training-time reduction of the protected run."""
    if plain.model_id != protected.model_id:
        raise ValueError("results come from different models")
    if plain.train_ms <= 0.0:
        raise ValueError("zero baseline training time")
    return (plain.train_ms - protected.train_ms) / plain.train_ms
