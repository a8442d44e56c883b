"""Classical comparison models: kNN, Gaussian Naive Bayes, least squares,
k-means, and the 5-way BMI class construction over subjects.

All tie-breaking is pinned (distance ties by training order, vote and argmax
ties by smallest class id) so results are platform-deterministic.
"""

from dataclasses import dataclass

import numpy as np

KNN_METRICS = ("euclidean", "cosine", "minkowski3")


def _pairwise_distances(queries: np.ndarray, train: np.ndarray, metric: str) -> np.ndarray:
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    t = np.asarray(train, dtype=np.float64)
    if metric == "euclidean":
        d2 = (q * q).sum(1)[:, None] + (t * t).sum(1)[None, :] - 2.0 * (q @ t.T)
        return np.sqrt(np.maximum(d2, 0.0))
    if metric == "cosine":
        qn = np.linalg.norm(q, axis=1)
        tn = np.linalg.norm(t, axis=1)
        if np.any(qn == 0) or np.any(tn == 0):
            raise ValueError("cosine distance undefined for zero vectors")
        return 1.0 - (q @ t.T) / (qn[:, None] * tn[None, :])
    if metric == "minkowski3":
        diff = np.abs(q[:, None, :] - t[None, :, :])
        return (diff**3).sum(axis=2) ** (1.0 / 3.0)
    raise ValueError(f"unknown metric {metric!r}; choose from {KNN_METRICS}")


def knn_classify_batch(
    train_x: np.ndarray,
    train_y: np.ndarray,
    queries: np.ndarray,
    k: int = 10,
    metric: str = "euclidean",
) -> np.ndarray:
    """Majority vote over the k nearest training rows, one label per query row.

    Distance ties resolve in training-set order (stable sort); vote ties take
    the smallest class id.
    """
    train_y = np.asarray(train_y, dtype=int)
    if k < 1 or k > len(train_y):
        raise ValueError(f"k must be in 1..{len(train_y)}, got {k}")
    d = _pairwise_distances(queries, train_x, metric)
    nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
    votes = train_y[nearest]  # (nq, k)
    n_classes = int(train_y.max()) + 1
    out = np.empty(len(votes), dtype=int)
    for i, row in enumerate(votes):
        counts = np.bincount(row, minlength=n_classes)
        out[i] = int(np.argmax(counts))  # argmax takes the smallest id on ties
    return out


def knn_classify(train_x, train_y, query, k=10, metric="euclidean") -> int:
    return int(knn_classify_batch(train_x, train_y, np.atleast_2d(query), k, metric)[0])


@dataclass(frozen=True)
class GaussianNBModel:
    log_priors: np.ndarray  # (C,)
    means: np.ndarray       # (C, F)
    variances: np.ndarray   # (C, F), floored


def gnb_fit(x: np.ndarray, y: np.ndarray, n_classes: int | None = None,
            var_floor: float = 1e-9) -> GaussianNBModel:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    counts = np.bincount(y, minlength=n_classes)
    for c in range(n_classes):
        if counts[c] == 0:
            raise ValueError(f"class {c} has no training samples")
    means = np.empty((n_classes, x.shape[1]))
    variances = np.empty_like(means)
    for c in range(n_classes):
        xc = x[y == c]
        means[c] = xc.mean(axis=0)
        variances[c] = np.maximum(xc.var(axis=0), var_floor)
    return GaussianNBModel(
        log_priors=np.log(counts / counts.sum()),
        means=means,
        variances=variances,
    )


def gnb_classify(model: GaussianNBModel, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    # (n, C, F) log-likelihood terms
    diff = x[:, None, :] - model.means[None, :, :]
    ll = -0.5 * (np.log(2.0 * np.pi * model.variances)[None] + diff**2 / model.variances[None])
    scores = model.log_priors[None, :] + ll.sum(axis=2)
    return scores.argmax(axis=1)


@dataclass(frozen=True)
class LinearModel:
    coef: np.ndarray  # (F,)
    intercept: float


def linreg_fit(x: np.ndarray, y: np.ndarray) -> LinearModel:
    """Ordinary least squares via SVD; rank deficiency gives the minimum-norm fit."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    design = np.hstack([x, np.ones((len(x), 1))])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return LinearModel(coef=beta[:-1], intercept=float(beta[-1]))


def linreg_predict(model: LinearModel, x: np.ndarray) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=np.float64)) @ model.coef + model.intercept


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------

def _sq_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = (
        (x * x).sum(1)[:, None]
        + (centroids * centroids).sum(1)[None, :]
        - 2.0 * (x @ centroids.T)
    )
    return np.maximum(d2, 0.0)


def _seed_centroids(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Squared-distance-proportional seeding (k-means++)."""
    n = len(x)
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = _sq_distances(x, centroids[:1]).ravel()
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = x[idx]
        d2 = np.minimum(d2, _sq_distances(x, centroids[j:j + 1]).ravel())
    return centroids


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int):
    k = len(centroids)
    labels = np.full(len(x), -1)
    inertia_history: list[float] = []
    for _ in range(max_iter):
        d2 = _sq_distances(x, centroids)
        new_labels = d2.argmin(axis=1)
        inertia_history.append(float(d2[np.arange(len(x)), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        taken: set[int] = set()
        for j in range(k):
            members = x[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            else:
                # reseed an empty cluster to the farthest point not yet taken
                dist_own = d2[np.arange(len(x)), labels].copy()
                order = np.argsort(-dist_own, kind="stable")
                pick = next(int(i) for i in order if int(i) not in taken)
                taken.add(pick)
                centroids[j] = x[pick]
    inertia = float(
        _sq_distances(x, centroids)[np.arange(len(x)), labels].sum()
    )
    return centroids, labels, inertia, inertia_history


def kmeans(
    points: np.ndarray,
    k: int,
    restarts: int = 10,
    seed: int = 0,
    standardize: bool = True,
    max_iter: int = 100,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm, best of ``restarts`` by within-cluster sum of squares.

    Points are z-scored per dimension before clustering (default); returned
    centroids are mapped back to the input space.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n = len(x)
    if k < 1 or k > n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    if standardize:
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        xs = (x - mean) / std
    else:
        mean = np.zeros(x.shape[1])
        std = np.ones(x.shape[1])
        xs = x

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        c0 = _seed_centroids(xs, k, rng)
        centroids, labels, inertia, _ = _lloyd(xs, c0, max_iter)
        if best is None or inertia < best[2]:
            best = (centroids, labels, inertia)
    centroids, labels, _ = best
    return centroids * std + mean, labels


# ---------------------------------------------------------------------------
# BMI class construction
# ---------------------------------------------------------------------------

CLASS_MODES = ("bmi", "age_bmi", "weight_height")


def build_bmi_classes(
    subjects,
    mode: str = "weight_height",
    k: int = 5,
    restarts: int = 10,
    seed: int = 0,
    standardize: bool = True,
) -> dict[str, int]:
    """Cluster subjects into k ordinal BMI classes (0 leanest .. k-1 heaviest).

    ``mode`` picks the clustered representation; classes are relabeled in
    ascending order of the member subjects' mean BMI so ids are ordinal.
    """
    if isinstance(subjects, dict):
        records = [subjects[sid] for sid in sorted(subjects)]
    else:
        records = sorted(subjects, key=lambda r: r.subject_id)
    if mode not in CLASS_MODES:
        raise ValueError(f"mode must be one of {CLASS_MODES}")
    if mode == "age_bmi":
        missing = [r.subject_id for r in records if r.age_years is None]
        if missing:
            raise ValueError(f"age_bmi mode needs ages; missing for {missing}")
        points = np.array([[r.age_years, r.bmi] for r in records])
    elif mode == "bmi":
        points = np.array([[r.bmi] for r in records])
    else:
        points = np.array([[r.weight_kg, r.height_m] for r in records])

    _, labels = kmeans(points, k, restarts=restarts, seed=seed, standardize=standardize)

    bmis = np.array([r.bmi for r in records])
    cluster_ids = []
    for c in range(k):
        members = bmis[labels == c]
        if len(members) == 0:
            raise ValueError(
                "insufficient diversity: k-means left an empty BMI class"
            )
        cluster_ids.append((float(members.mean()), c))
    order = {c: rank for rank, (_, c) in enumerate(sorted(cluster_ids))}
    return {r.subject_id: order[int(labels[i])] for i, r in enumerate(records)}
