"""Lazy multi-label classifier: exact k-NN search + per-label MAP decisions.

Fitting stores the training features and labels and builds, per label, a
smoothed prior P(H1) = (s + n_pos) / (2s + m) together with posterior
tables P(E_j | H) for j in 0..k, where the event E_j is "exactly j of the
k nearest neighbours carry the label". Neighbour statistics at fit time
are leave-one-out: a training point is never its own neighbour. At query
time each label is switched on iff

    P(H1) * P(E_C | H1)  >=  P(H0) * P(E_C | H0)

with C the positive-neighbour count of the query, and the reported
confidence is the normalised posterior.

Neighbour search is exact brute force. Squared distances are computed in
float64 via the expansion |a|^2 + |b|^2 - 2ab (clipped at zero); distance
ties break toward the smaller training index. The public
euclidean_distance uses the direct sum formula, which may differ from the
expansion in the last few ulps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError


@dataclass
class MlknnModel:
    features: np.ndarray  # (m, d) stored as given, cast to float64 for search
    labels: np.ndarray  # (m, L) binary
    k: int
    s: float
    prior1: np.ndarray  # (L,)
    prior0: np.ndarray  # (L,)
    c1: np.ndarray  # (L, k+1) P(E_j | H1)
    c0: np.ndarray  # (L, k+1) P(E_j | H0)


@dataclass
class Prediction:
    labels: np.ndarray  # (L,) 0/1
    confidences: np.ndarray  # (L,) normalised posteriors in (0, 1)


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two equal-length vectors (float64 sum)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    diff = a - b
    return float(np.sqrt(np.dot(diff, diff)))


def _sq_distances(train: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """(n_q, m) squared Euclidean distances in float64, clipped at zero."""
    sq_train = np.einsum("ij,ij->i", train, train)
    sq_q = np.einsum("ij,ij->i", queries, queries)
    d2 = sq_q[:, None] + sq_train[None, :] - 2.0 * (queries @ train.T)
    return np.maximum(d2, 0.0)


def _neighbor_indices(d2: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest entries per row, ties to the smaller index."""
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def knn_neighbors(features: np.ndarray, query: np.ndarray, k: int) -> list[int]:
    """The k training indices nearest to `query`, sorted by (distance, index)."""
    features = np.asarray(features, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64).reshape(1, -1)
    m = features.shape[0]
    if k < 1 or k > m:
        raise ValidationError(f"k must be in 1..{m}, got {k}")
    if query.shape[1] != features.shape[1]:
        raise ShapeError(f"query length {query.shape[1]} != feature dim {features.shape[1]}")
    d2 = _sq_distances(features, query)
    return [int(i) for i in _neighbor_indices(d2, k)[0]]


def _validate_binary(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    values = np.unique(labels)
    if not np.isin(values, (0, 1)).all():
        raise ValidationError(f"labels must be binary, found values {values}")
    return labels.astype(np.int8)


def fit_mlknn(features: np.ndarray, labels: np.ndarray, k: int = 3, s: float = 1.0) -> MlknnModel:
    """Build the prior and posterior count tables from a training set.

    Requires m >= k + 1 so every point has k leave-one-out neighbours.
    `s` is the Laplace smoothing strength; it keeps every table entry
    strictly positive and every confidence strictly inside (0, 1).
    """
    features = np.asarray(features)
    labels = _validate_binary(labels)
    if features.ndim != 2 or labels.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise ShapeError(
            f"features {features.shape} and labels {labels.shape} must be 2-D with equal rows"
        )
    m, n_labels = labels.shape
    if m <= k:
        raise ValidationError(f"need at least k+1={k + 1} training points, got {m}")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if s <= 0:
        raise ValidationError(f"smoothing s must be > 0, got {s}")

    x64 = features.astype(np.float64, copy=False)
    d2 = _sq_distances(x64, x64)
    np.fill_diagonal(d2, np.inf)  # leave-one-out
    neighbors = _neighbor_indices(d2, k)
    # delta[i, l] = how many of i's k neighbours carry label l
    delta = labels[neighbors].sum(axis=1)

    prior1 = (s + labels.sum(axis=0)) / (2.0 * s + m)
    prior0 = 1.0 - prior1

    kappa1 = np.zeros((n_labels, k + 1), dtype=np.int64)
    kappa0 = np.zeros((n_labels, k + 1), dtype=np.int64)
    for lab in range(n_labels):
        pos = labels[:, lab] == 1
        kappa1[lab] = np.bincount(delta[pos, lab], minlength=k + 1)
        kappa0[lab] = np.bincount(delta[~pos, lab], minlength=k + 1)
    c1 = (s + kappa1) / (s * (k + 1) + kappa1.sum(axis=1, keepdims=True))
    c0 = (s + kappa0) / (s * (k + 1) + kappa0.sum(axis=1, keepdims=True))

    return MlknnModel(
        features=features,
        labels=labels,
        k=k,
        s=float(s),
        prior1=prior1,
        prior0=prior0,
        c1=c1,
        c0=c0,
    )


def _check_fitted(model: MlknnModel):
    if model.c1 is None or model.c0 is None or model.prior1 is None:
        raise ValidationError("model is not fitted")
    if model.features.shape[0] < model.k:
        raise ValidationError("model stores fewer training points than k")


def predict_batch(model: MlknnModel, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """MAP decisions and confidences for a (n_q, d) query block.

    Returns (labels (n_q, L) int8, confidences (n_q, L) float64).
    """
    _check_fitted(model)
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != model.features.shape[1]:
        raise ShapeError(
            f"queries {queries.shape} do not match feature dim {model.features.shape[1]}"
        )
    x64 = model.features.astype(np.float64, copy=False)
    d2 = _sq_distances(x64, queries)
    neighbors = _neighbor_indices(d2, model.k)
    counts = model.labels[neighbors].sum(axis=1)  # (n_q, L)

    lab_idx = np.arange(model.labels.shape[1])
    post1 = model.prior1[None, :] * model.c1[lab_idx, counts]
    post0 = model.prior0[None, :] * model.c0[lab_idx, counts]
    confidences = post1 / (post1 + post0)
    decisions = (post1 >= post0).astype(np.int8)
    return decisions, confidences


def predict_mlknn(model: MlknnModel, query: np.ndarray) -> Prediction:
    """MAP decision and normalised posterior confidence for one query."""
    query = np.asarray(query).reshape(1, -1)
    decisions, confidences = predict_batch(model, query)
    return Prediction(labels=decisions[0], confidences=confidences[0])


def apply_threshold(confidences: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Indicator predictions: 1 where confidence strictly exceeds tau.

    Note the MAP rule in predict_mlknn uses >= at the 0.5 boundary, while
    this indicator is strict, so the two can differ exactly on ties.
    """
    confidences = np.asarray(confidences, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    if confidences.shape != tau.shape:
        raise ShapeError(f"confidences {confidences.shape} vs tau {tau.shape}")
    if ((confidences < 0) | (confidences > 1)).any() or ((tau < 0) | (tau > 1)).any():
        raise ValidationError("confidences and tau must lie in [0, 1]")
    return (confidences > tau).astype(np.int8)
