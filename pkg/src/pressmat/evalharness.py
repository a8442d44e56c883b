"""10-fold cross-validation, metrics, and drop-column feature importance.

Folds are frame-level and stratified per subject, so every subject appears in
every training split (identity classification needs that). Normalization and
the k-means BMI class construction are refit inside each training fold.
Aggregates are mean and sample (n-1) standard deviation over folds; confusion
matrices aggregate by summing counts.
"""

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import baselines, mtnet
from .dataset import SubjectRecord
from .features import FEATURE_NAMES, FeatureTable


@dataclass(frozen=True)
class FoldPlan:
    n_folds: int
    assignment: np.ndarray  # (n,) fold id per table row
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.nonzero(self.assignment == fold)[0]

    def train_indices(self, fold: int) -> np.ndarray:
        return np.nonzero(self.assignment != fold)[0]


def make_folds(subject_ids, n_folds: int = 10, seed: int = 0) -> FoldPlan:
    """Shuffle each subject's frames and deal them round-robin into folds."""
    subject_ids = np.asarray(subject_ids)
    if n_folds < 2:
        raise ValueError(f"n_folds must be >= 2, got {n_folds}")
    rng = np.random.default_rng(seed)
    assignment = np.full(len(subject_ids), -1, dtype=int)
    for sid in sorted(set(subject_ids.tolist())):
        idx = np.nonzero(subject_ids == sid)[0]
        if len(idx) < n_folds:
            raise ValueError(
                f"subject {sid!r} has {len(idx)} frames, needs >= {n_folds} "
                f"for {n_folds}-fold stratification"
            )
        perm = rng.permutation(len(idx))
        assignment[idx[perm]] = np.arange(len(idx)) % n_folds
    return FoldPlan(n_folds=n_folds, assignment=assignment, seed=seed)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def r2(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if len(pred) == 0 or len(pred) != len(truth):
        raise ValueError("r2 needs equal non-zero-length inputs")
    ss_tot = float(((truth - truth.mean()) ** 2).sum())
    if ss_tot == 0:
        raise ValueError("r2 undefined for constant truth")
    ss_res = float(((truth - pred) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if len(pred) == 0 or len(pred) != len(truth):
        raise ValueError("rmse needs equal non-zero-length inputs")
    return float(np.sqrt(((truth - pred) ** 2).mean()))


def accuracy(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if len(pred) == 0 or len(pred) != len(truth):
        raise ValueError("accuracy needs equal non-zero-length inputs")
    return float((pred == truth).mean())


def confusion_matrix(truth, pred, n_classes: int) -> np.ndarray:
    """Counts with rows = truth, columns = prediction."""
    truth = np.asarray(truth, dtype=int)
    pred = np.asarray(pred, dtype=int)
    if len(pred) == 0 or len(pred) != len(truth):
        raise ValueError("confusion_matrix needs equal non-zero-length inputs")
    m = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(m, (truth, pred), 1)
    return m


def per_class_prf(truth, pred, n_classes: int) -> dict:
    """Per-class precision/recall/F1 plus macro averages.

    A class with zero predicted positives has precision 0; zero true members
    give recall 0; F1 is 0 when P + R is 0.
    """
    m = confusion_matrix(truth, pred, n_classes)
    tp = np.diag(m).astype(float)
    pred_pos = m.sum(axis=0).astype(float)
    true_pos = m.sum(axis=1).astype(float)
    precision = np.divide(tp, pred_pos, out=np.zeros(n_classes), where=pred_pos > 0)
    recall = np.divide(tp, true_pos, out=np.zeros(n_classes), where=true_pos > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros(n_classes), where=pr > 0)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "precision_macro": float(precision.mean()),
        "recall_macro": float(recall.mean()),
        "f1_macro": float(f1.mean()),
    }


# ---------------------------------------------------------------------------
# Recipes
# ---------------------------------------------------------------------------

@dataclass
class FoldData:
    """Arrays a recipe sees for one side of a fold split."""

    x: np.ndarray            # active feature matrix
    subject_ids: np.ndarray  # (n,) str
    subject_idx: np.ndarray  # (n,) int index into the class order
    bmi: np.ndarray          # (n,)
    bmi_class: np.ndarray    # (n,) int in 0..n_bmi_classes-1
    n_bmi_classes: int = 5


def _zscore_fit(x):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return mean, std


class MtnetRecipe:
    """The multitask network: identity, BMI regression, and the 5-class head."""

    name = "mtnet"
    produces = ("identity", "bmi", "bmi_class")

    def __init__(self, config: mtnet.TrainConfig | None = None):
        self.config = config or mtnet.TrainConfig()

    def run_fold(self, train: FoldData, test: FoldData, seed: int) -> dict:
        config = mtnet.TrainConfig(
            max_iterations=self.config.max_iterations,
            weight_decay=self.config.weight_decay,
            optimizer=self.config.optimizer,
            lbfgs_memory=self.config.lbfgs_memory,
            grad_tol=self.config.grad_tol,
            loss_tol=self.config.loss_tol,
            learning_rate=self.config.learning_rate,
            seed=seed,
        )
        model = mtnet.train(train.x, train.subject_ids, train.bmi, config)
        mtnet.fit_bmi_class_head(model, train.x, train.bmi_class,
                                 n_classes=train.n_bmi_classes)
        out = mtnet.forward(model, test.x)
        id_pred = np.array(model.subject_ids)[out.identity_probs.argmax(axis=1)]
        return {
            "identity_pred": id_pred,
            "bmi_pred": out.bmi_estimate,
            "bmi_class_pred": mtnet.predict_bmi_class(model, test.x),
        }


class KnnRecipe:
    """k-nearest neighbors on z-scored features, identity and BMI class."""

    name = "knn"
    produces = ("identity", "bmi_class")

    def __init__(self, k: int = 10, metric: str = "euclidean"):
        self.k = k
        self.metric = metric

    def run_fold(self, train: FoldData, test: FoldData, seed: int) -> dict:
        mean, std = _zscore_fit(train.x)
        xtr = (train.x - mean) / std
        xte = (test.x - mean) / std
        k = min(self.k, len(xtr))
        id_idx = baselines.knn_classify_batch(xtr, train.subject_idx, xte, k, self.metric)
        cls = baselines.knn_classify_batch(xtr, train.bmi_class, xte, k, self.metric)
        return {"identity_pred_idx": id_idx, "bmi_class_pred": cls}


class GnbRecipe:
    """Gaussian Naive Bayes on raw features, identity and BMI class."""

    name = "gnb"
    produces = ("identity", "bmi_class")

    def run_fold(self, train: FoldData, test: FoldData, seed: int) -> dict:
        id_model = baselines.gnb_fit(train.x, train.subject_idx)
        cls_model = baselines.gnb_fit(train.x, train.bmi_class,
                                      n_classes=train.n_bmi_classes)
        return {
            "identity_pred_idx": baselines.gnb_classify(id_model, test.x),
            "bmi_class_pred": baselines.gnb_classify(cls_model, test.x),
        }


class LinregRecipe:
    """Ordinary least squares BMI regression on raw features."""

    name = "linreg"
    produces = ("bmi",)

    def run_fold(self, train: FoldData, test: FoldData, seed: int) -> dict:
        model = baselines.linreg_fit(train.x, train.bmi)
        return {"bmi_pred": baselines.linreg_predict(model, test.x)}


def make_recipe(name: str, config: mtnet.TrainConfig | None = None, **kwargs):
    if name == "mtnet":
        return MtnetRecipe(config)
    if name == "knn":
        return KnnRecipe(**kwargs)
    if name == "gnb":
        return GnbRecipe()
    if name == "linreg":
        return LinregRecipe()
    raise ValueError(f"unknown recipe {name!r}")


# ---------------------------------------------------------------------------
# Cross-validation driver
# ---------------------------------------------------------------------------

N_BMI_CLASSES = 5


@dataclass
class EvaluationReport:
    config_echo: dict
    identity_classes: list[str]
    per_fold: list[dict]
    aggregate: dict
    failed_folds: list[dict] = field(default_factory=list)

    def to_document(self) -> dict:
        return {
            "config_echo": self.config_echo,
            "identity_classes": self.identity_classes,
            "per_fold": self.per_fold,
            "aggregate": self.aggregate,
            "failed_folds": self.failed_folds,
        }

    def save(self, path: str) -> None:
        _atomic_write_text(
            path, json.dumps(self.to_document(), indent=2, sort_keys=True) + "\n"
        )

    @classmethod
    def load(cls, path: str) -> "EvaluationReport":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(
            config_echo=doc["config_echo"],
            identity_classes=doc["identity_classes"],
            per_fold=doc["per_fold"],
            aggregate=doc["aggregate"],
            failed_folds=doc.get("failed_folds", []),
        )

    def scalar_metric_names(self) -> list[str]:
        return sorted(self.aggregate["scalars"])

    def save_per_fold_csv(self, path: str) -> None:
        """Flat per-fold scalar metrics for plotting tools."""
        names = self.scalar_metric_names()
        lines = [",".join(["fold"] + names)]
        for entry in self.per_fold:
            row = [str(entry["fold"])]
            row += [repr(entry["scalars"][m]) for m in names]
            lines.append(",".join(row))
        _atomic_write_text(path, "\n".join(lines) + "\n")


def _atomic_write_text(path: str, text: str) -> None:
    parent = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(parent, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".report-", dir=parent, text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except Exception:
        os.unlink(tmp)
        raise


def _fold_data(table: FeatureTable, idx: np.ndarray, class_order: list[str],
               class_map: dict[str, int], n_bmi_classes: int) -> FoldData:
    sid_to_idx = {s: i for i, s in enumerate(class_order)}
    sids = table.subject_ids[idx]
    return FoldData(
        x=table.active_matrix()[idx],
        subject_ids=sids,
        subject_idx=np.array([sid_to_idx[s] for s in sids], dtype=int),
        bmi=table.bmi[idx],
        bmi_class=np.array([class_map[s] for s in sids], dtype=int),
        n_bmi_classes=n_bmi_classes,
    )


def _subject_records(table: FeatureTable):
    """Reconstruct minimal subject records (id -> bmi) for class construction.

    Weight/height are not stored in the feature table, so the BMI-space
    clustering runs on the BMI values; the ordinal relabeling is unchanged.
    """
    records = {}
    for sid in sorted(set(table.subject_ids.tolist())):
        b = float(table.bmi[table.subject_ids == sid][0])
        # synthesize a consistent (height, weight) pair: height 1.7 m reference
        records[sid] = SubjectRecord(sid, 1.7, b * 1.7 * 1.7)
    return records


def run_cv(
    table: FeatureTable,
    recipe,
    plan: FoldPlan,
    class_mode: str = "bmi",
    subjects: dict | None = None,
    n_bmi_classes: int = N_BMI_CLASSES,
    config_echo: dict | None = None,
) -> EvaluationReport:
    """Train/test the recipe on every fold and aggregate metrics.

    ``subjects`` (id -> SubjectRecord) enables the weight/height class modes;
    without it, BMI classes are clustered from the table's BMI column. A
    failing fold is recorded and skipped; two failures abort the run.
    """
    class_order = sorted(set(table.subject_ids.tolist()))
    per_fold: list[dict] = []
    failed: list[dict] = []

    subject_records = subjects if subjects is not None else _subject_records(table)
    if class_mode != "bmi" and subjects is None:
        raise ValueError(f"class mode {class_mode!r} needs subject records")

    # confusion classes for identity
    m_classes = len(class_order)
    agg_scalars: dict[str, list[float]] = {}
    agg_arrays: dict[str, list[np.ndarray]] = {}
    id_confusion_total = np.zeros((m_classes, m_classes), dtype=int)
    cls_confusion_total = np.zeros((n_bmi_classes, n_bmi_classes), dtype=int)

    for fold in range(plan.n_folds):
        tr_idx = plan.train_indices(fold)
        te_idx = plan.test_indices(fold)
        try:
            train_subject_set = set(table.subject_ids[tr_idx].tolist())
            missing = [s for s in class_order if s not in train_subject_set]
            if missing:
                raise ValueError(f"fold {fold}: subjects {missing} absent from training")
            train_records = {s: subject_records[s] for s in sorted(train_subject_set)}
            class_map = baselines.build_bmi_classes(
                train_records, mode=class_mode, k=n_bmi_classes,
                seed=plan.seed + fold,
            )
            train = _fold_data(table, tr_idx, class_order, class_map, n_bmi_classes)
            test = _fold_data(table, te_idx, class_order, class_map, n_bmi_classes)
            preds = recipe.run_fold(train, test, seed=plan.seed + fold)

            scalars: dict[str, float] = {}
            arrays: dict[str, list] = {}

            if "identity_pred" in preds or "identity_pred_idx" in preds:
                if "identity_pred_idx" in preds:
                    pred_idx = np.asarray(preds["identity_pred_idx"], dtype=int)
                else:
                    sid_to_idx = {s: i for i, s in enumerate(class_order)}
                    pred_idx = np.array(
                        [sid_to_idx[s] for s in preds["identity_pred"]], dtype=int
                    )
                scalars["identity_accuracy"] = accuracy(pred_idx, test.subject_idx)
                prf = per_class_prf(test.subject_idx, pred_idx, m_classes)
                scalars["identity_precision_macro"] = prf["precision_macro"]
                scalars["identity_recall_macro"] = prf["recall_macro"]
                scalars["identity_f1_macro"] = prf["f1_macro"]
                arrays["identity_precision"] = prf["precision"].tolist()
                arrays["identity_recall"] = prf["recall"].tolist()
                arrays["identity_f1"] = prf["f1"].tolist()
                cm = confusion_matrix(test.subject_idx, pred_idx, m_classes)
                arrays["identity_confusion"] = cm.tolist()
                id_confusion_total += cm

            if "bmi_pred" in preds:
                scalars["bmi_r2"] = r2(preds["bmi_pred"], test.bmi)
                scalars["bmi_rmse"] = rmse(preds["bmi_pred"], test.bmi)

            if "bmi_class_pred" in preds:
                cls_pred = np.asarray(preds["bmi_class_pred"], dtype=int)
                scalars["bmi_class_accuracy"] = accuracy(cls_pred, test.bmi_class)
                cm = confusion_matrix(test.bmi_class, cls_pred, n_bmi_classes)
                arrays["bmi_class_confusion"] = cm.tolist()
                cls_confusion_total += cm

            per_fold.append({"fold": fold, "scalars": scalars, "arrays": arrays})
            for k, v in scalars.items():
                agg_scalars.setdefault(k, []).append(v)
            for k in ("identity_precision", "identity_recall", "identity_f1"):
                if k in arrays:
                    agg_arrays.setdefault(k, []).append(np.asarray(arrays[k]))
        except Exception as e:  # noqa: BLE001 - fold failures are data, not bugs
            failed.append({"fold": fold, "error": f"{type(e).__name__}: {e}"})
            if len(failed) >= 2:
                raise RuntimeError(
                    f"{len(failed)} folds failed; first errors: {failed}"
                ) from e

    aggregate: dict = {"scalars": {}, "arrays": {}}
    for k, vals in agg_scalars.items():
        arr = np.asarray(vals)
        aggregate["scalars"][k] = {
            "mean": float(arr.mean()),
            "std": float(arr.std(ddof=1)) if len(arr) > 1 else 0.0,
        }
    for k, stacks in agg_arrays.items():
        mat = np.stack(stacks)
        aggregate["arrays"][k] = {
            "mean": mat.mean(axis=0).tolist(),
            "std": (mat.std(axis=0, ddof=1) if len(mat) > 1 else np.zeros(mat.shape[1])).tolist(),
        }
    if id_confusion_total.any():
        aggregate["identity_confusion_total"] = id_confusion_total.tolist()
    if cls_confusion_total.any():
        aggregate["bmi_class_confusion_total"] = cls_confusion_total.tolist()

    echo = dict(config_echo or {})
    echo.setdefault("recipe", getattr(recipe, "name", type(recipe).__name__))
    echo.setdefault("n_folds", plan.n_folds)
    echo.setdefault("seed", plan.seed)
    echo.setdefault("class_mode", class_mode)
    echo.setdefault("feature_mask", list(table.mask))
    return EvaluationReport(
        config_echo=echo,
        identity_classes=class_order,
        per_fold=per_fold,
        aggregate=aggregate,
        failed_folds=failed,
    )


def drop_column_importance(
    table: FeatureTable,
    recipe,
    plan: FoldPlan,
    class_mode: str = "bmi",
    subjects: dict | None = None,
    n_bmi_classes: int = N_BMI_CLASSES,
) -> dict[str, dict[str, float]]:
    """Metric change when each active feature is removed and the CV rerun.

    Positive values mean the feature helps (removing it hurts); negative
    values are permitted.
    """
    full = run_cv(table, recipe, plan, class_mode=class_mode, subjects=subjects,
                  n_bmi_classes=n_bmi_classes)

    def metric(report, name):
        entry = report.aggregate["scalars"].get(name)
        return None if entry is None else entry["mean"]

    full_acc = metric(full, "identity_accuracy")
    full_r2 = metric(full, "bmi_r2")

    out: dict[str, dict[str, float]] = {}
    for j in table.active_indices:
        reduced = table.with_feature_dropped(int(j))
        rep = run_cv(reduced, recipe, plan, class_mode=class_mode, subjects=subjects,
                     n_bmi_classes=n_bmi_classes)
        entry: dict[str, float] = {}
        if full_acc is not None:
            entry["identity_accuracy"] = full_acc - metric(rep, "identity_accuracy")
        if full_r2 is not None:
            entry["bmi_r2"] = full_r2 - metric(rep, "bmi_r2")
        out[FEATURE_NAMES[int(j)]] = entry
    return out
