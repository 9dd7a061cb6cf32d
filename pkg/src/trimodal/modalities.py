"""The three branch architectures, their shared training loop, and per-subject prediction."""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import DataError, DimensionError, GeometryError, ParameterError
from .fusion import ModalityPrediction
from .nn.functional import softmax, softmax_cross_entropy_grad
from .rng import Rng

MODALITIES = ("image", "cognitive", "biomarker")
N_CLASSES = 2
INFER_CHUNK = 128


class ModelSpec(nn.Sequential):
    """A Sequential tagged with its modality and input geometry."""

    def __init__(self, modality, input_shape, layers, seed=None):
        super().__init__(layers)
        self.modality = modality
        self.input_shape = tuple(int(d) for d in input_shape)
        self.seed = seed

    def check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise DimensionError(
                f"{self.modality} model expects samples of shape {list(self.input_shape)}, got {list(x.shape[1:])}"
            )
        return x

    def __repr__(self):
        return f"ModelSpec({self.modality}, input={self.input_shape}, params={self.count_params()})"


def build_mri_cnn(side=224, channels=3, seed=0):
    """Three conv blocks (conv -> relu -> batch norm -> 2x2 pool) and a dropout MLP head."""
    if side < 8 or side % 8:
        raise GeometryError(f"image side must be a positive multiple of 8 (three 2x2 pools), got {side}")
    if channels < 1:
        raise GeometryError(f"channels must be >= 1, got {channels}")
    rng = Rng(seed)
    layers = []
    c_in = channels
    for k, filters in enumerate((32, 64, 128), start=1):
        layers += [
            nn.Conv2D(c_in, filters, 3, f"conv{k}", rng),
            nn.ReLU(),
            nn.BatchNorm(filters, f"bn{k}"),
            nn.MaxPool2x2(),
        ]
        c_in = filters
    flat = (side // 8) ** 2 * 128
    layers += [
        nn.Flatten(),
        nn.Dense(flat, 256, "fc1", rng),
        nn.ReLU(),
        nn.Dropout(0.5),
        nn.Dense(256, 128, "fc2", rng),
        nn.ReLU(),
        nn.Dropout(0.5),
        nn.Dense(128, N_CLASSES, "out", rng),
        nn.Softmax(),
    ]
    return ModelSpec("image", (side, side, channels), layers, seed)


def _build_sequence_lstm(modality, T, feature_dim, seed):
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    if feature_dim < 1:
        raise ParameterError(f"feature_dim must be >= 1, got {feature_dim}")
    rng = Rng(seed)
    layers = [
        nn.LSTM(feature_dim, 64, True, 0.2, "lstm1", rng),
        nn.LSTM(64, 128, False, 0.2, "lstm2", rng),
        nn.Dense(128, 128, "fc1", rng),
        nn.ReLU(),
        nn.Dense(128, N_CLASSES, "out", rng),
        nn.Softmax(),
    ]
    return ModelSpec(modality, (T, feature_dim), layers, seed)


def build_cognitive_lstm(T=6, feature_dim=3, seed=0):
    return _build_sequence_lstm("cognitive", T, feature_dim, seed)


def build_biomarker_lstm(T=4, feature_dim=3, seed=0):
    # second layer returns only its final state, as in the cognitive branch
    return _build_sequence_lstm("biomarker", T, feature_dim, seed)


def build_model(modality, geometry, seed=0):
    """Build from a geometry tuple (h, w, T_c, f_c, T_b, f_b)."""
    h, w, tc, fc, tb, fb = geometry
    if modality == "image":
        if h != w:
            raise GeometryError(f"images must be square, got {h}x{w}")
        return build_mri_cnn(h, 3, seed)
    if modality == "cognitive":
        return build_cognitive_lstm(tc, fc, seed)
    if modality == "biomarker":
        return build_biomarker_lstm(tb, fb, seed)
    raise ParameterError(f"unknown modality {modality!r}")


def expected_layers(modality):
    """Layer listing each architecture must reproduce, as ``describe()`` dicts."""
    if modality == "image":
        out = []
        for filters in (32, 64, 128):
            out += [
                {"kind": "conv2d", "filters": filters, "kernel": 3, "padding": "same"},
                {"kind": "relu"},
                {"kind": "batchnorm"},
                {"kind": "maxpool", "pool": 2},
            ]
        return out + [
            {"kind": "flatten"},
            {"kind": "dense", "units": 256},
            {"kind": "relu"},
            {"kind": "dropout", "rate": 0.5},
            {"kind": "dense", "units": 128},
            {"kind": "relu"},
            {"kind": "dropout", "rate": 0.5},
            {"kind": "dense", "units": 2},
            {"kind": "softmax"},
        ]
    if modality in ("cognitive", "biomarker"):
        return [
            {"kind": "lstm", "units": 64, "return_sequences": True, "recurrent_dropout": 0.2},
            {"kind": "lstm", "units": 128, "return_sequences": False, "recurrent_dropout": 0.2},
            {"kind": "dense", "units": 128},
            {"kind": "relu"},
            {"kind": "dense", "units": 2},
            {"kind": "softmax"},
        ]
    raise ParameterError(f"unknown modality {modality!r}")


def validate_structure(spec):
    expected = expected_layers(spec.modality)
    got = spec.describe()
    if got != expected:
        raise GeometryError(f"{spec.modality} model does not match its reference layer listing")
    if spec.modality == "image":
        h, w, c = spec.input_shape
        if h != w or h % 8 or c < 1:
            raise GeometryError(f"bad image geometry {spec.input_shape}")
    return True


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    patience: int = 5

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ParameterError("batch_size must be >= 2 (batch norm needs two samples)")
        if self.patience < 1:
            raise ParameterError("patience must be >= 1")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    best_epoch: int = 0
    steps: int = 0

    def __len__(self):
        return len(self.train_loss)


def _batches(perm, batch_size):
    chunks = [perm[i:i + batch_size] for i in range(0, len(perm), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        # a lone trailing sample cannot be batch-normalized
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def _logits(spec, X):
    return np.concatenate([spec.forward(X[i:i + INFER_CHUNK], "infer") for i in range(0, len(X), INFER_CHUNK)])


def evaluate_loss(spec, X, y):
    logits = _logits(spec, spec.check_input(X))
    loss, _ = softmax_cross_entropy_grad(logits, y)
    acc = float(np.mean((softmax(logits)[:, 1] >= 0.5).astype(int) == np.asarray(y)))
    return loss, acc


def train_modality(spec, X_train, y_train, X_val, y_val, cfg=None, log=None):
    """Mini-batch Adam with early stopping; ``spec`` ends holding its best-validation-loss weights.

    Returns ``(spec, history)``; the model is updated in place.
    """
    cfg = cfg or TrainConfig()
    X_train = spec.check_input(X_train)
    X_val = spec.check_input(X_val)
    y_train = np.asarray(y_train, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    if len(X_train) != len(y_train) or len(X_val) != len(y_val):
        raise DimensionError("sample and label counts differ")
    if len(np.unique(y_train)) < 2:
        raise DataError("training split contains a single class")
    if len(X_val) == 0:
        raise DataError("validation split is empty")
    if len(X_train) < 2:
        raise DataError("need at least two training samples")

    rng = Rng(cfg.seed)
    opt = nn.AdamState(lr=cfg.lr)
    hist = TrainHistory()
    best_loss, best_state, since_best = np.inf, None, 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(X_train))
        total = 0.0
        for idx in _batches(perm, cfg.batch_size):
            logits = spec.forward(X_train[idx], "train", rng)
            loss, dlogits = softmax_cross_entropy_grad(logits, y_train[idx])
            grads = nn.backprop(spec, dlogits)
            nn.adam_step(spec.parameters(), grads, opt)
            total += loss * len(idx)
            hist.steps += 1
        val_loss, val_acc = evaluate_loss(spec, X_val, y_val)
        hist.train_loss.append(total / len(X_train))
        hist.val_loss.append(val_loss)
        hist.val_acc.append(val_acc)
        if log:
            log(f"{spec.modality} epoch {epoch + 1}: train {hist.train_loss[-1]:.4f} val {val_loss:.4f} acc {val_acc:.3f}")
        if val_loss < best_loss:
            best_loss, since_best = val_loss, 0
            best_state = {k: v.copy() for k, v in spec.state_dict().items()}
            hist.best_epoch = epoch + 1
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    spec.load_state_dict(best_state)
    return spec, hist


def predict_batch(spec, X):
    """Class probabilities [N, 2] in inference mode."""
    return softmax(_logits(spec, spec.check_input(X)))


def predict_modality(spec, sample):
    """One subject's prediction; ``sample`` has the model's input shape (no batch axis)."""
    x = np.asarray(sample, dtype=np.float64)
    if x.shape != spec.input_shape:
        raise DimensionError(f"{spec.modality} model expects a sample of shape {list(spec.input_shape)}, got {list(x.shape)}")
    return ModalityPrediction(spec.modality, predict_batch(spec, x[None])[0])
