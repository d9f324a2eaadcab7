"""One-vs-one multiclass SVM with ID-matrix minimum-distance decoding.

A soft-margin linear SVM is trained per class pair with a seeded
stochastic subgradient solver. At prediction time the vector of binary
outcomes is compared against each class's signature row, counting
mismatches only over that row's non-don't-care columns; the class at
minimum distance wins, with ties resolved to the lowest class index and
flagged.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from fruitdx.descriptors import DescriptorConfig
from fruitdx.errors import (
    DegenerateTrainingError,
    FeatureMismatchError,
    ModelIntegrityError,
    ModelVersionError,
    PreconditionError,
)

MODEL_FORMAT = "fruitdx-model"
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SvmConfig:
    c: float = 1.0
    epochs: int = 200
    eta0: float = 0.1
    seed: int = 0
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.c <= 0:
            raise PreconditionError("regularization c must be > 0")
        if self.epochs < 1:
            raise PreconditionError("epochs must be >= 1")
        if self.eta0 <= 0:
            raise PreconditionError("eta0 must be > 0")
        if self.tolerance < 0:
            raise PreconditionError("tolerance must be >= 0")
        if self.seed < 0:
            raise PreconditionError("seed must be >= 0")


@dataclass(frozen=True, eq=False)
class BinarySvm:
    """Linear decision function separating one ordered class pair."""

    weights: np.ndarray
    bias: float
    positive_class: str
    negative_class: str
    train_counts: tuple[int, int] = (0, 0)
    objective_trace: Optional[np.ndarray] = None  # per-epoch full objective; not persisted

    def decision(self, x) -> float:
        return float(self.weights @ np.asarray(x, dtype=np.float64) + self.bias)

    def outcome(self, x) -> int:
        """+1 for the positive class, -1 for the negative (0 decides positive)."""
        return 1 if self.decision(x) >= 0.0 else -1

    def __eq__(self, other):
        if not isinstance(other, BinarySvm):
            return NotImplemented
        return (
            np.array_equal(self.weights, other.weights)
            and self.bias == other.bias
            and self.positive_class == other.positive_class
            and self.negative_class == other.negative_class
            and tuple(self.train_counts) == tuple(other.train_counts)
        )


@dataclass(frozen=True, eq=False)
class IdMatrix:
    """Per-class signatures over the ordered class pairs.

    Column c for pair (i, j) carries +1 at row i, -1 at row j, and 0
    ("don't care") elsewhere; pairs are in lexicographic order.
    """

    n_classes: int
    pairs: tuple[tuple[int, int], ...]
    rows: np.ndarray  # (n_classes, n_pairs) int8

    def __post_init__(self):
        n = self.n_classes
        expected_pairs = tuple((i, j) for i in range(n) for j in range(i + 1, n))
        if self.pairs != expected_pairs:
            raise PreconditionError("pairs must enumerate (i, j), i < j, lexicographically")
        if self.rows.shape != (n, len(expected_pairs)):
            raise PreconditionError("ID matrix shape mismatch")
        for col, (i, j) in enumerate(self.pairs):
            column = self.rows[:, col]
            if column[i] != 1 or column[j] != -1 or np.count_nonzero(column) != 2:
                raise PreconditionError(f"column {col} is not a valid (+1, -1) pair signature")
        if len({tuple(r) for r in self.rows.tolist()}) != n:
            raise PreconditionError("ID matrix rows must be unique")
        self.rows.setflags(write=False)

    @property
    def n_columns(self) -> int:
        return int(self.rows.shape[1])

    def __eq__(self, other):
        if not isinstance(other, IdMatrix):
            return NotImplemented
        return (
            self.n_classes == other.n_classes
            and self.pairs == other.pairs
            and np.array_equal(self.rows, other.rows)
        )


def build_id_matrix(n_classes: int) -> IdMatrix:
    """Signature matrix for n classes: one column per pair, N(N-1)/2 total."""
    if n_classes < 2:
        raise PreconditionError("need at least 2 classes")
    pairs = tuple((i, j) for i in range(n_classes) for j in range(i + 1, n_classes))
    rows = np.zeros((n_classes, len(pairs)), dtype=np.int8)
    for col, (i, j) in enumerate(pairs):
        rows[i, col] = 1
        rows[j, col] = -1
    return IdMatrix(n_classes=n_classes, pairs=pairs, rows=rows)


@dataclass(frozen=True, eq=False)
class Prediction:
    label: str
    class_index: int
    distances: np.ndarray  # mismatch count per class
    tie: bool
    outcomes: np.ndarray  # +-1 per learner


@dataclass(frozen=True, eq=False)
class MulticlassModel:
    classes: tuple[str, ...]
    id_matrix: IdMatrix
    learners: tuple[BinarySvm, ...]
    feature_blocks: tuple[tuple[str, int, int], ...] = ()
    descriptor_config: Optional[DescriptorConfig] = None
    metadata: dict = None  # type: ignore[assignment]
    format_version: int = MODEL_FORMAT_VERSION

    def __post_init__(self):
        if self.metadata is None:
            object.__setattr__(self, "metadata", {})
        if len(self.learners) != self.id_matrix.n_columns:
            raise PreconditionError("one learner per ID-matrix column required")
        for learner, (i, j) in zip(self.learners, self.id_matrix.pairs):
            if (
                learner.positive_class != self.classes[i]
                or learner.negative_class != self.classes[j]
            ):
                raise PreconditionError(f"learner for pair ({i}, {j}) has wrong class labels")

    @property
    def dim(self) -> int:
        return int(self.learners[0].weights.shape[0])

    def __eq__(self, other):
        if not isinstance(other, MulticlassModel):
            return NotImplemented
        return (
            self.classes == other.classes
            and self.id_matrix == other.id_matrix
            and self.learners == tuple(other.learners)
            and self.feature_blocks == other.feature_blocks
            and self.descriptor_config == other.descriptor_config
            and self.metadata == other.metadata
            and self.format_version == other.format_version
        )


def _as_matrix(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        if samples.ndim != 2:
            raise PreconditionError("sample matrix must be 2-D")
        return np.ascontiguousarray(samples, dtype=np.float64)
    rows = [np.asarray(getattr(s, "values", s), dtype=np.float64) for s in samples]
    if not rows:
        raise PreconditionError("no training samples")
    dim = rows[0].shape[0]
    for r in rows:
        if r.ndim != 1 or r.shape[0] != dim:
            raise PreconditionError("training samples have mixed dimensions")
    return np.stack(rows)


def train_binary(
    samples,
    labels,
    config: SvmConfig,
    positive_class: str = "+1",
    negative_class: str = "-1",
) -> BinarySvm:
    """Minimize 0.5*||w||^2 + c * sum(hinge) by seeded subgradient descent.

    One pass visits every sample in a fresh seeded shuffle; the step size
    decays as eta0 / (1 + eta0 * t / c) over the global step counter t.
    Training stops early once the full-data objective changes by less
    than `tolerance` between epochs.
    """
    X = _as_matrix(samples)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise PreconditionError("labels must match the sample count")
    if not np.isin(y, (-1.0, 1.0)).all():
        raise PreconditionError("labels must be +1 or -1")
    n_pos = int((y > 0).sum())
    n_neg = int((y < 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateTrainingError("training needs at least one sample of each sign")

    n, dim = X.shape
    w = np.zeros(dim, dtype=np.float64)
    b = 0.0
    rng = np.random.default_rng(config.seed)
    c = config.c
    eta0 = config.eta0
    t = 0
    trace = []
    for epoch in range(config.epochs):
        for i in rng.permutation(n):
            t += 1
            eta = eta0 / (1.0 + eta0 * t / c)
            xi = X[i]
            margin = y[i] * (xi @ w + b)
            w *= 1.0 - eta / n
            if margin < 1.0:
                w += (eta * c * y[i]) * xi
                b += eta * c * y[i]
        objective = 0.5 * float(w @ w) + c * float(
            np.maximum(0.0, 1.0 - y * (X @ w + b)).sum()
        )
        trace.append(objective)
        if epoch > 0 and abs(trace[-1] - trace[-2]) < config.tolerance:
            break
    return BinarySvm(
        weights=w,
        bias=float(b),
        positive_class=positive_class,
        negative_class=negative_class,
        train_counts=(n_pos, n_neg),
        objective_trace=np.asarray(trace),
    )


def _pair_seed(base: int, i: int, j: int) -> int:
    return int(np.random.SeedSequence([base, i, j]).generate_state(1)[0])


def train_multiclass(
    samples,
    labels,
    config: SvmConfig,
    classes=None,
    feature_blocks=(),
    descriptor_config: Optional[DescriptorConfig] = None,
    metadata: Optional[dict] = None,
) -> MulticlassModel:
    """Train one binary learner per class pair on only that pair's samples."""
    X = _as_matrix(samples)
    labels = [str(label) for label in labels]
    if len(labels) != X.shape[0]:
        raise PreconditionError("labels must match the sample count")
    if classes is None:
        classes = tuple(dict.fromkeys(labels))
    else:
        classes = tuple(str(c) for c in classes)
    if len(classes) < 2:
        raise PreconditionError("need at least 2 classes")
    for cls in classes:
        if cls not in labels:
            raise PreconditionError(f"class {cls!r} has no training samples")
    for label in labels:
        if label not in classes:
            raise PreconditionError(f"sample label {label!r} is not a known class")

    label_arr = np.asarray(labels)
    id_matrix = build_id_matrix(len(classes))
    learners = []
    for i, j in id_matrix.pairs:
        sel = (label_arr == classes[i]) | (label_arr == classes[j])
        pair_y = np.where(label_arr[sel] == classes[i], 1.0, -1.0)
        pair_config = replace(config, seed=_pair_seed(config.seed, i, j))
        learners.append(
            train_binary(
                X[sel],
                pair_y,
                pair_config,
                positive_class=classes[i],
                negative_class=classes[j],
            )
        )
    return MulticlassModel(
        classes=classes,
        id_matrix=id_matrix,
        learners=tuple(learners),
        feature_blocks=tuple(tuple(b) for b in feature_blocks),
        descriptor_config=descriptor_config,
        metadata=dict(metadata or {}),
    )


def decode(outcomes, id_matrix: IdMatrix):
    """Match binary outcomes against every class signature.

    The distance to a class is its mismatch count over non-don't-care
    columns, i.e. sum of |outcome - entry| / 2 where the entry is +-1.
    Returns (class index, per-class distances, tie flag); ties resolve to
    the lowest class index.
    """
    out = np.asarray(outcomes, dtype=np.int64)
    if out.shape != (id_matrix.n_columns,):
        raise PreconditionError(
            f"expected {id_matrix.n_columns} outcomes, got {out.shape}"
        )
    if out.size and not np.isin(out, (-1, 1)).all():
        raise PreconditionError("outcomes must be +1 or -1")
    rows = id_matrix.rows.astype(np.int64)
    care = rows != 0
    mismatches = (np.abs(out[None, :] - rows) // 2) * care
    distances = mismatches.sum(axis=1)
    winner = int(np.argmin(distances))
    tie = bool((distances == distances[winner]).sum() > 1)
    return winner, distances, tie


def classify(model: MulticlassModel, fv) -> Prediction:
    """Evaluate every learner's sign and decode against the ID matrix."""
    x = np.asarray(getattr(fv, "values", fv), dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.dim:
        layout = (
            " + ".join(f"{name}:{length}" for name, _, length in model.feature_blocks)
            or f"{model.dim} values"
        )
        got = x.shape[0] if x.ndim == 1 else f"shape {x.shape}"
        raise FeatureMismatchError(
            f"feature vector has {got} values; the model expects {model.dim} ({layout})"
        )
    outcomes = np.array([learner.outcome(x) for learner in model.learners], dtype=np.int64)
    index, distances, tie = decode(outcomes, model.id_matrix)
    return Prediction(
        label=model.classes[index],
        class_index=index,
        distances=distances,
        tie=tie,
        outcomes=outcomes,
    )


# --------------------------------------------------------------------------
# persistence: a single JSON document with an explicit version and checksum;
# weights are stored as decimal text (repr round-trips float64 exactly).


def _payload(model: MulticlassModel) -> dict:
    return {
        "classes": list(model.classes),
        "id_matrix": model.id_matrix.rows.tolist(),
        "learners": [
            {
                "positive_class": lr.positive_class,
                "negative_class": lr.negative_class,
                "weights": [float(v) for v in lr.weights],
                "bias": lr.bias,
                "train_counts": list(lr.train_counts),
            }
            for lr in model.learners
        ],
        "feature_blocks": [list(b) for b in model.feature_blocks],
        "descriptor_config": (
            asdict(model.descriptor_config) if model.descriptor_config is not None else None
        ),
        "metadata": model.metadata,
    }


def _canonical(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def save_model(model: MulticlassModel, path) -> None:
    payload = _payload(model)
    doc = {
        "format": MODEL_FORMAT,
        "format_version": model.format_version,
        "encoding": "decimal-text",
        "checksum": hashlib.sha256(_canonical(payload).encode()).hexdigest(),
        "payload": payload,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_model(path) -> MulticlassModel:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelIntegrityError(f"cannot read model {p}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelIntegrityError(f"{p} is not a {MODEL_FORMAT} file")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelVersionError(
            f"{p} has format version {version}; this build reads version {MODEL_FORMAT_VERSION}"
        )
    payload = doc.get("payload")
    if not isinstance(payload, dict):
        raise ModelIntegrityError(f"{p} has no payload")
    if hashlib.sha256(_canonical(payload).encode()).hexdigest() != doc.get("checksum"):
        raise ModelIntegrityError(f"{p} fails its checksum; the file is corrupt")
    try:
        classes = tuple(payload["classes"])
        rows = np.asarray(payload["id_matrix"], dtype=np.int8)
        n = len(classes)
        pairs = tuple((i, j) for i in range(n) for j in range(i + 1, n))
        id_matrix = IdMatrix(n_classes=n, pairs=pairs, rows=rows)
        learners = tuple(
            BinarySvm(
                weights=np.asarray(d["weights"], dtype=np.float64),
                bias=float(d["bias"]),
                positive_class=d["positive_class"],
                negative_class=d["negative_class"],
                train_counts=tuple(d["train_counts"]),
            )
            for d in payload["learners"]
        )
        dcfg = payload.get("descriptor_config")
        descriptor_config = DescriptorConfig(**dcfg) if dcfg is not None else None
        model = MulticlassModel(
            classes=classes,
            id_matrix=id_matrix,
            learners=learners,
            feature_blocks=tuple(tuple(b) for b in payload.get("feature_blocks", [])),
            descriptor_config=descriptor_config,
            metadata=payload.get("metadata", {}),
            format_version=version,
        )
    except (KeyError, TypeError, ValueError, PreconditionError) as exc:
        raise ModelIntegrityError(f"{p} payload is malformed: {exc}") from exc
    return model
