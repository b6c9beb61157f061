"""Softmax face classifier trained from partial (ambiguous) labels.

Each training face carries a candidate set Y of possible identities, exactly
one of which is correct. Two losses are supported: aveCE averages the
cross-entropy over all candidates, hardEM penalizes only the currently most
probable candidate. Training proceeds either on all data at once or
incrementally per episode; between incremental stages the model can relabel
every face to its nearest per-identity prototype (mean embedding of the faces
currently assigned to that identity), restricted to the face's original
candidates.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

LOSSES = ("aveCE", "hardEM")
SCHEDULES = ("all_at_once", "incremental")

_CHECKPOINT_FORMAT = "telesum-softmax"
_CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    """Raised when training cannot proceed (bad inputs or diverged loss)."""


@dataclass(frozen=True)
class LabelSpace:
    """Ordered label universe; index positions are stable across a run."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.labels:
            raise ValueError("label space must be non-empty")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("label space has duplicate labels")

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, name: str) -> int:
        try:
            return self.labels.index(name)
        except ValueError:
            raise KeyError(f"label {name!r} not in label space") from None


@dataclass(frozen=True)
class PartialExample:
    """A face vector with its candidate label set.

    ``candidates`` is the working label set used for training; ``original``
    preserves the pre-relabel candidate set (None until a relabel replaces
    the working set). Relabeling never assigns outside the original set.
    """

    x: np.ndarray
    candidates: frozenset[str]
    episode: int = 0
    original: frozenset[str] | None = None

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("candidate label set must be non-empty")

    @property
    def audit_candidates(self) -> frozenset[str]:
        return self.original if self.original is not None else self.candidates


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "aveCE"
    schedule: str = "incremental"
    relabel: bool = False
    learning_rate: float = 0.1
    epochs_per_stage: int = 20
    batch_size: int = 32
    seed: int = 0
    relabel_iterations: int = 3

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs_per_stage < 1:
            raise ValueError("epochs_per_stage must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.relabel_iterations < 1:
            raise ValueError("relabel_iterations must be at least 1")


@dataclass
class SoftmaxModel:
    """Linear softmax classifier over fixed embeddings."""

    weights: np.ndarray  # |labels| x D
    biases: np.ndarray  # |labels|
    label_space: LabelSpace
    rng_seed: int = 0

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ x + self.biases

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Probability of each label given x, via max-subtracted softmax."""
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise ValueError("input vector contains non-finite values")
        return _softmax(self.logits(x))

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if not np.all(np.isfinite(X)):
            raise ValueError("input matrix contains non-finite values")
        Z = X @ self.weights.T + self.biases
        Z -= Z.max(axis=1, keepdims=True)
        E = np.exp(Z)
        return E / E.sum(axis=1, keepdims=True)

    def predict_label(self, x: np.ndarray) -> str:
        return self.label_space.labels[int(np.argmax(self.predict(x)))]


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def new_model(label_space: LabelSpace, dim: int, seed: int = 0) -> SoftmaxModel:
    """Zero-initialized model: every prediction starts uniform."""
    return SoftmaxModel(
        weights=np.zeros((len(label_space), dim), dtype=np.float64),
        biases=np.zeros(len(label_space), dtype=np.float64),
        label_space=label_space,
        rng_seed=seed,
    )


def _candidate_indices(example: PartialExample, space: LabelSpace) -> list[int]:
    idx = sorted(space.index(name) for name in example.candidates)
    return idx


def loss_ave_ce(model: SoftmaxModel, example: PartialExample) -> float:
    """Average categorical cross-entropy over the candidate set.

    With a singleton candidate set this is ordinary cross-entropy.
    """
    probs = model.predict(example.x)
    idx = _candidate_indices(example, model.label_space)
    return float(-np.mean(np.log(probs[idx])))


def loss_hard_em(model: SoftmaxModel, example: PartialExample) -> float:
    """Negative log-probability of the most probable candidate."""
    probs = model.predict(example.x)
    idx = _candidate_indices(example, model.label_space)
    return float(-np.log(np.max(probs[idx])))


def loss_gradients(
    model: SoftmaxModel, example: PartialExample, loss: str
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic (dL/dW, dL/db) for one example under the given loss.

    Both losses have gradient p - q in logit space: q is uniform over the
    candidates for aveCE and one-hot at the most probable candidate for
    hardEM (gradient flows only through the argmax label).
    """
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    probs = model.predict(example.x)
    idx = _candidate_indices(example, model.label_space)
    q = np.zeros_like(probs)
    if loss == "aveCE":
        q[idx] = 1.0 / len(idx)
    else:
        best = idx[int(np.argmax(probs[idx]))]
        q[best] = 1.0
    g = probs - q
    return np.outer(g, np.asarray(example.x, dtype=np.float64)), g


def _stage_example_lists(
    examples: list[PartialExample], cfg: TrainConfig
) -> list[list[int]]:
    """Cumulative index lists, one per training stage."""
    if cfg.schedule == "all_at_once":
        stages = [list(range(len(examples)))]
    else:
        episodes = sorted({e.episode for e in examples})
        stages = []
        seen: list[int] = []
        for ep in episodes:
            seen = seen + [i for i, e in enumerate(examples) if e.episode == ep]
            stages.append(list(seen))
    if cfg.relabel and len(stages) == 1:
        # single-stage data trains for several relabeling rounds on itself
        stages = stages * cfg.relabel_iterations
    return stages


def _run_sgd_stage(
    model: SoftmaxModel,
    X: np.ndarray,
    candidate_idx: list[list[int]],
    subset: list[int],
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> float:
    """Mini-batch SGD over one stage's examples; returns final-epoch mean loss."""
    n_labels = len(model.label_space)
    mean_loss = 0.0
    for _ in range(cfg.epochs_per_stage):
        order = rng.permutation(len(subset))
        total_loss = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            rows = [subset[i] for i in order[lo : lo + cfg.batch_size]]
            Xb = X[rows]
            P = model.predict_batch(Xb)
            Q = np.zeros((len(rows), n_labels), dtype=np.float64)
            if cfg.loss == "aveCE":
                batch_losses = []
                for bi, row in enumerate(rows):
                    idx = candidate_idx[row]
                    Q[bi, idx] = 1.0 / len(idx)
                    batch_losses.append(-np.mean(np.log(P[bi, idx])))
            else:
                batch_losses = []
                for bi, row in enumerate(rows):
                    idx = candidate_idx[row]
                    best = idx[int(np.argmax(P[bi, idx]))]
                    Q[bi, best] = 1.0
                    batch_losses.append(-np.log(P[bi, best]))
            G = P - Q
            model.weights -= cfg.learning_rate * (G.T @ Xb) / len(rows)
            model.biases -= cfg.learning_rate * G.mean(axis=0)
            total_loss += float(np.sum(batch_losses))
        mean_loss = total_loss / len(subset)
        if not np.isfinite(mean_loss) or not np.all(np.isfinite(model.weights)):
            raise TrainingError(
                f"training diverged: non-finite loss {mean_loss} "
                f"(loss={cfg.loss}, lr={cfg.learning_rate})"
            )
    return mean_loss


def train(
    examples: list[PartialExample],
    cfg: TrainConfig,
    label_space: LabelSpace | None = None,
    metrics: list[dict] | None = None,
) -> SoftmaxModel:
    """Train a softmax model per the configured loss, schedule, and relabeling.

    The incremental schedule walks episodes in order, each stage training on
    all examples seen so far. With relabeling on, every face is re-assigned a
    singleton label after each stage (except the last) by prototype distance,
    and the next stage trains on those singletons. Deterministic for a fixed
    cfg.seed.
    """
    if not examples:
        raise TrainingError("cannot train on an empty example list")
    if label_space is None:
        names = sorted({name for e in examples for name in e.candidates})
        label_space = LabelSpace(tuple(names))
    dims = {e.x.shape[0] for e in examples}
    if len(dims) != 1:
        raise TrainingError(f"inconsistent example dimensions: {sorted(dims)}")

    model = new_model(label_space, dims.pop(), seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    X = np.stack([np.asarray(e.x, dtype=np.float64) for e in examples])

    working = list(examples)
    stages = _stage_example_lists(examples, cfg)
    for stage_no, subset in enumerate(stages):
        candidate_idx = [
            _candidate_indices(e, label_space) if i in set(subset) else []
            for i, e in enumerate(working)
        ]
        loss = _run_sgd_stage(model, X, candidate_idx, subset, cfg, rng)
        relabeled = 0
        if cfg.relabel and stage_no + 1 < len(stages):
            result = prototype_relabel(model, [working[i] for i in subset])
            for pos, i in enumerate(subset):
                if result.examples[pos].candidates != working[i].candidates:
                    relabeled += 1
                working[i] = result.examples[pos]
        if metrics is not None:
            metrics.append(
                {
                    "stage": stage_no,
                    "examples": len(subset),
                    "mean_loss": loss,
                    "relabeled": relabeled,
                }
            )
    return model


@dataclass
class RelabelResult:
    examples: list[PartialExample]
    unchanged: list[int]  # positions whose candidates had no prototypes


def prototype_relabel(
    model: SoftmaxModel, examples: list[PartialExample]
) -> RelabelResult:
    """Replace each example's candidate set with its nearest-prototype label.

    Assignments use the current model (argmax over the example's original
    candidates); prototypes are the mean embedding of the faces assigned to
    each label; each example is then relabeled to the prototype nearest in
    Euclidean distance among its original candidates. Labels outside the
    original candidate set are never assigned. Examples none of whose
    candidates earned a prototype keep their set unchanged and are reported.
    """
    space = model.label_space
    assigned: dict[int, list[np.ndarray]] = {}
    audit_idx: list[list[int]] = []
    for e in examples:
        idx = sorted(space.index(name) for name in e.audit_candidates)
        audit_idx.append(idx)
        probs = model.predict(e.x)
        best = idx[int(np.argmax(probs[idx]))]
        assigned.setdefault(best, []).append(np.asarray(e.x, dtype=np.float64))

    prototypes = {label: np.mean(vs, axis=0) for label, vs in assigned.items()}

    out: list[PartialExample] = []
    unchanged: list[int] = []
    for pos, e in enumerate(examples):
        with_proto = [i for i in audit_idx[pos] if i in prototypes]
        if not with_proto:
            out.append(e)
            unchanged.append(pos)
            continue
        dists = [float(np.linalg.norm(e.x - prototypes[i])) for i in with_proto]
        winner = with_proto[int(np.argmin(dists))]
        out.append(
            PartialExample(
                x=e.x,
                candidates=frozenset({space.labels[winner]}),
                episode=e.episode,
                original=e.audit_candidates,
            )
        )
    return RelabelResult(examples=out, unchanged=unchanged)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[int(rng.integers(n))]]
    for _ in range(1, k):
        d2 = np.min(
            np.stack([np.sum((X - c) ** 2, axis=1) for c in centers]), axis=0
        )
        total = d2.sum()
        if total <= 0:
            centers.append(X[int(rng.integers(n))])
            continue
        centers.append(X[int(rng.choice(n, p=d2 / total))])
    return np.stack(centers)


def kmeans_cluster(
    X: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding; returns (centroids, assignment).

    An empty cluster is re-seeded from the point currently farthest from its
    assigned centroid.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(X, k, rng)
    assignment = np.zeros(X.shape[0], dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assignment = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for c in range(k):
            members = X[assignment == c]
            if len(members):
                new_centers[c] = members.mean(axis=0)
            else:
                farthest = int(np.argmax(d2[np.arange(len(X)), assignment]))
                new_centers[c] = X[farthest]
        shift = float(((new_centers - centers) ** 2).sum())
        centers = new_centers
        if shift < tol:
            break
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return centers, np.argmin(d2, axis=1)


def kmeans_baseline(
    train_examples: list[PartialExample],
    test_examples: list[PartialExample],
    k: int,
    seed: int = 0,
) -> float:
    """Cluster train+test jointly, label clusters by weighted majority over
    train members' weak labels (each label weighted 1/|Y|), score on test."""
    X = np.stack([np.asarray(e.x, dtype=np.float64) for e in train_examples + test_examples])
    _, assignment = kmeans_cluster(X, k, seed=seed)
    n_train = len(train_examples)

    votes: dict[int, dict[str, float]] = {}
    for i, e in enumerate(train_examples):
        weight = 1.0 / len(e.candidates)
        bucket = votes.setdefault(int(assignment[i]), {})
        for name in e.candidates:
            bucket[name] = bucket.get(name, 0.0) + weight
    cluster_label = {
        c: max(sorted(bucket), key=lambda name: bucket[name])
        for c, bucket in votes.items()
    }

    correct = 0
    for j, e in enumerate(test_examples):
        gold = next(iter(e.candidates))
        if cluster_label.get(int(assignment[n_train + j])) == gold:
            correct += 1
    return correct / len(test_examples) if test_examples else 0.0


@dataclass
class OneVsRestModel:
    """Independent per-label logistic scorers trained on weak labels."""

    weights: np.ndarray
    biases: np.ndarray
    label_space: LabelSpace

    def scores(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ np.asarray(x, dtype=np.float64) + self.biases

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.scores(x)))

    def predict_label(self, x: np.ndarray) -> str:
        return self.label_space.labels[int(np.argmax(self.scores(x)))]


def naive_multilabel_baseline(
    examples: list[PartialExample],
    cfg: TrainConfig,
    label_space: LabelSpace | None = None,
) -> OneVsRestModel:
    """One-vs-rest binary cross-entropy treating every weak label as positive."""
    if not examples:
        raise TrainingError("cannot train on an empty example list")
    if label_space is None:
        names = sorted({name for e in examples for name in e.candidates})
        label_space = LabelSpace(tuple(names))
    X = np.stack([np.asarray(e.x, dtype=np.float64) for e in examples])
    Y = np.zeros((len(examples), len(label_space)), dtype=np.float64)
    for i, e in enumerate(examples):
        for name in e.candidates:
            Y[i, label_space.index(name)] = 1.0

    model = OneVsRestModel(
        weights=np.zeros((len(label_space), X.shape[1]), dtype=np.float64),
        biases=np.zeros(len(label_space), dtype=np.float64),
        label_space=label_space,
    )
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.epochs_per_stage):
        order = rng.permutation(len(examples))
        for lo in range(0, len(order), cfg.batch_size):
            rows = order[lo : lo + cfg.batch_size]
            Xb, Yb = X[rows], Y[rows]
            S = 1.0 / (1.0 + np.exp(-(Xb @ model.weights.T + model.biases)))
            G = S - Yb
            model.weights -= cfg.learning_rate * (G.T @ Xb) / len(rows)
            model.biases -= cfg.learning_rate * G.mean(axis=0)
    return model


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class AccuracyReport:
    micro_accuracy: float
    per_label: dict[str, float]
    pearson_r: float | None


def pearson_r(xs: list[float], ys: list[float]) -> float | None:
    """Sample Pearson correlation; None when undefined (<2 points or zero
    variance on either side)."""
    if len(xs) < 2 or len(xs) != len(ys):
        return None
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    xd, yd = x - x.mean(), y - y.mean()
    denom = float(np.sqrt((xd**2).sum() * (yd**2).sum()))
    if denom == 0.0:
        return None
    return float((xd * yd).sum() / denom)


def evaluate_accuracy(model, test_examples: list[PartialExample]) -> AccuracyReport:
    """Micro accuracy plus per-label accuracy and the frequency/accuracy
    Pearson correlation, over a singleton-labeled (manually annotated) test set.
    """
    for e in test_examples:
        if len(e.candidates) != 1:
            raise ValueError("test examples must carry a single gold label")
    if not test_examples:
        raise ValueError("empty test set")

    totals: dict[str, int] = {}
    hits: dict[str, int] = {}
    correct = 0
    for e in test_examples:
        gold = next(iter(e.candidates))
        pred = model.predict_label(e.x)
        totals[gold] = totals.get(gold, 0) + 1
        if pred == gold:
            hits[gold] = hits.get(gold, 0) + 1
            correct += 1

    per_label = {name: hits.get(name, 0) / n for name, n in sorted(totals.items())}
    labels = sorted(totals)
    r = pearson_r(
        [float(totals[name]) for name in labels],
        [per_label[name] for name in labels],
    )
    return AccuracyReport(
        micro_accuracy=correct / len(test_examples),
        per_label=per_label,
        pearson_r=r,
    )


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_model(model: SoftmaxModel, path: Path, config: TrainConfig | None = None) -> None:
    """Write a versioned checkpoint: JSON header line, then row-major
    little-endian float64 weights followed by biases."""
    header = {
        "format": _CHECKPOINT_FORMAT,
        "version": _CHECKPOINT_VERSION,
        "dim": model.dim,
        "labels": list(model.label_space.labels),
        "seed": model.rng_seed,
        "config": asdict(config) if config is not None else None,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    blob += np.ascontiguousarray(model.weights, dtype="<f8").tobytes()
    blob += np.ascontiguousarray(model.biases, dtype="<f8").tobytes()
    path.write_bytes(blob)


def load_model(path: Path) -> SoftmaxModel:
    blob = path.read_bytes()
    nl = blob.index(b"\n")
    header = json.loads(blob[:nl].decode("utf-8"))
    if header.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"not a model checkpoint: {path}")
    if header.get("version") != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    labels = tuple(header["labels"])
    dim = int(header["dim"])
    body = blob[nl + 1 :]
    expected = (len(labels) * dim + len(labels)) * 8
    if len(body) != expected:
        raise ValueError(f"checkpoint parameter block is {len(body)} bytes, expected {expected}")
    flat = np.frombuffer(body, dtype="<f8")
    weights = flat[: len(labels) * dim].reshape(len(labels), dim).copy()
    biases = flat[len(labels) * dim :].copy()
    return SoftmaxModel(
        weights=weights,
        biases=biases,
        label_space=LabelSpace(labels),
        rng_seed=int(header.get("seed", 0)),
    )
