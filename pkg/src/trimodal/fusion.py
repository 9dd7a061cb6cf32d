"""Late fusion of per-modality class probabilities.

Sums run through ``math.fsum`` so results do not depend on the order in which
modalities are listed.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateError, NoInputError, ParameterError, StateError

MODALITIES = ("image", "cognitive", "biomarker")
STRATEGIES = ("weighted", "majority", "bayes", "stacked")
CLAMP = 1e-6


class ModalityPrediction:
    """One modality's 2-class probabilities for one subject; ``probabilities=None`` marks it missing."""

    def __init__(self, modality, probabilities=None):
        self.modality = modality
        if probabilities is not None:
            p = np.asarray(probabilities, dtype=np.float64)
            if p.shape != (2,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise DataError(f"{modality}: not a 2-class probability vector: {p}")
            probabilities = p
        self.probabilities = probabilities

    @classmethod
    def missing(cls, modality):
        return cls(modality, None)

    @classmethod
    def positive(cls, modality, p1):
        """Build from the positive-class probability alone."""
        return cls(modality, [1.0 - p1, p1])

    @property
    def present(self):
        return self.probabilities is not None

    @property
    def status(self):
        return "present" if self.present else "missing"

    @property
    def vote(self):
        return label_of(self.probabilities)

    def __repr__(self):
        if not self.present:
            return f"ModalityPrediction({self.modality}, missing)"
        return f"ModalityPrediction({self.modality}, p1={self.probabilities[1]:.4f})"


def label_of(probs):
    # ties at 0.5 go to the positive (AD) class
    return int(probs[1] >= probs[0])


class FusionWeights:
    """Non-negative per-modality weights, stored normalized to sum to one."""

    def __init__(self, weights):
        raw = {m: float(w) for m, w in dict(weights).items()}
        if any(w < 0 or not math.isfinite(w) for w in raw.values()):
            raise ParameterError(f"weights must be finite and non-negative: {raw}")
        total = math.fsum(raw.values())
        if total <= 0:
            raise DegenerateError("at least one fusion weight must be positive")
        self.weights = {m: w / total for m, w in raw.items()}

    def __getitem__(self, modality):
        return self.weights.get(modality, 0.0)

    def as_tuple(self, order=MODALITIES):
        return tuple(self[m] for m in order)

    def __repr__(self):
        return "FusionWeights(" + ", ".join(f"{m}={w:.4f}" for m, w in self.weights.items()) + ")"

    @classmethod
    def equal(cls, modalities=MODALITIES):
        return cls({m: 1.0 for m in modalities})


@dataclass
class FusionResult:
    probabilities: np.ndarray
    label: int
    strategy: str
    confidence: float
    modalities_used: tuple

    @property
    def positive(self):
        return float(self.probabilities[1])


def derive_weights(aucs, order=MODALITIES):
    """Weights proportional to validation AUC. ``aucs`` is a mapping or a sequence in ``order``."""
    if not isinstance(aucs, dict):
        aucs = dict(zip(order, aucs))
    for m, a in aucs.items():
        if not 0.0 <= a <= 1.0:
            raise ParameterError(f"AUC for {m} outside [0, 1]: {a}")
    if all(a == 0 for a in aucs.values()):
        raise DegenerateError("all AUCs are zero; cannot derive weights")
    return FusionWeights(aucs)


def _present(preds):
    present = [p for p in preds if p.present]
    if not present:
        raise NoInputError("all modalities are missing")
    return present


def _result(p1, strategy, confidence, present):
    probs = np.array([1.0 - p1, p1])
    return FusionResult(probs, label_of(probs), strategy, confidence, tuple(p.modality for p in present))


def _weighted(present, weights, all_present, strategy):
    mass = math.fsum(weights[p.modality] for p in present)
    if mass <= 0:
        raise NoInputError("no present modality carries positive weight")
    p1 = math.fsum(weights[p.modality] * p.probabilities[1] for p in present) / mass
    confidence = 1.0 if all_present else min(mass, 1.0)
    return _result(p1, strategy, confidence, present)


def fuse_weighted_average(preds, weights):
    """Convex combination of present modalities with their weights renormalized.

    Confidence is the stored weight mass of the modalities that are present.
    """
    present = _present(preds)
    return _weighted(present, weights, len(present) == len(preds), "weighted_average")


def fuse_majority_vote(preds, weights):
    """Argmax votes; output probabilities are the mean over the winning voters.

    A tied vote falls back to the weighted average over the present modalities.
    """
    present = _present(preds)
    all_present = len(present) == len(preds)
    ones = [p for p in present if p.vote == 1]
    zeros = [p for p in present if p.vote == 0]
    if len(ones) == len(zeros):
        return _weighted(present, weights, all_present, "majority_vote(tie->weighted_average)")
    winners = ones if len(ones) > len(zeros) else zeros
    p1 = math.fsum(p.probabilities[1] for p in winners) / len(winners)
    mass = math.fsum(weights[p.modality] for p in present)
    confidence = 1.0 if all_present else min(mass, 1.0)
    res = _result(p1, "majority_vote", confidence, present)
    res.label = 1 if winners is ones else 0
    return res


def logit(p):
    return math.log(p) - math.log1p(-p)


def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def fuse_logit_pool(preds, prior=0.5, n_modalities=3):
    """Independent-evidence pooling: each present modality adds its log-odds shift from the prior."""
    if not 0.0 < prior < 1.0:
        raise ParameterError(f"prior must lie in (0, 1), got {prior}")
    present = _present(preds)
    lp = logit(prior)
    shifts = [logit(min(max(p.probabilities[1], CLAMP), 1.0 - CLAMP)) - lp for p in present]
    p1 = _sigmoid(lp + math.fsum(shifts))
    return _result(p1, "logit_pool", len(present) / n_modalities, present)


@dataclass
class StackerModel:
    weights: np.ndarray = field(default_factory=lambda: np.zeros(len(MODALITIES)))
    bias: float = 0.0
    iterations: int = 0
    final_loss: float = float("nan")
    trained: bool = False
    order: tuple = MODALITIES

    def predict(self, features):
        z = np.asarray(features, dtype=np.float64) @ self.weights + self.bias
        return np.array([_sigmoid(float(v)) for v in np.atleast_1d(z)])


def impute(features, fill=0.5):
    x = np.array(features, dtype=np.float64)
    x[np.isnan(x)] = fill
    return x


def train_stacker(meta_features, labels, l2=1e-4, lr=0.1, max_iter=5000, tol=1e-6):
    """Logistic regression over per-modality positive probabilities (NaN = missing, imputed 0.5).

    Full-batch gradient descent on mean cross-entropy plus ``l2/2 * |w|^2``.
    Features must come from held-out predictions.
    """
    X = impute(meta_features)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise DataError(f"meta-features {list(X.shape)} do not match {len(y)} labels")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be 0 or 1")
    if len(np.unique(y)) < 2:
        raise DataError("stacker needs both classes in its training labels")
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        z = X @ w + b
        p = 1.0 / (1.0 + np.exp(-z))
        r = p - y
        gw = X.T @ r / n + l2 * w
        gb = r.mean()
        if max(np.abs(gw).max(), abs(gb)) < tol:
            break
        w -= lr * gw
        b -= lr * gb
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0, z) - y * z) + 0.5 * l2 * w @ w)
    if not (np.all(np.isfinite(w)) and math.isfinite(b)):
        raise DataError("stacker diverged")
    return StackerModel(w, float(b), it, loss, True, MODALITIES[:d] if d <= len(MODALITIES) else tuple(range(d)))


def stacker_features(preds, order=MODALITIES):
    by_mod = {p.modality: p for p in preds}
    return np.array(
        [by_mod[m].probabilities[1] if m in by_mod and by_mod[m].present else 0.5 for m in order]
    )


def fuse_stacked(model, preds):
    if model is None or not model.trained:
        raise StateError("stacker has not been trained")
    present = _present(preds)
    x = stacker_features(preds, model.order)
    p1 = _sigmoid(math.fsum(model.weights * x) + model.bias)
    return _result(p1, "stacked", len(present) / len(model.order), present)


def fuse(strategy, preds, weights=None, prior=0.5, stacker=None):
    """Dispatch on a strategy name (weighted | majority | bayes | stacked)."""
    if strategy == "weighted":
        return fuse_weighted_average(preds, weights)
    if strategy == "majority":
        return fuse_majority_vote(preds, weights)
    if strategy == "bayes":
        return fuse_logit_pool(preds, prior)
    if strategy == "stacked":
        return fuse_stacked(stacker, preds)
    raise ParameterError(f"unknown fusion strategy {strategy!r}; expected one of {STRATEGIES}")
