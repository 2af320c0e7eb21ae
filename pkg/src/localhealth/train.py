"""Training loops for the regression head and the baseline models."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import RiskThreshold
from .head import HeadParams, backward_batch, forward_batch, init_params, param_count
from .metrics import macro_f1, predict_risk_by_year
from .optim import OptimizerState, TrainConfig, adamw_step, lr_schedule
from .seeding import rng_for


@dataclass
class SupervisedArrays:
    """Feature/target arrays for one split, aligned row-by-row with keys."""

    keys: list[tuple[str, int]]
    x: np.ndarray  # (n, d) embeddings or count features
    adi: np.ndarray  # (n,) normalized ADI
    g: np.ndarray  # (n,) outcome fractions
    r: np.ndarray  # (n,) risk labels
    years: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.keys)


@dataclass
class EpochStat:
    epoch: int
    train_mse: float
    val_f1: float


@dataclass
class TrainResult:
    params: HeadParams
    best_epoch: int
    best_val_f1: float
    trace: list[EpochStat] = field(default_factory=list)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, trace: list[EpochStat]):
        super().__init__(message)
        self.trace = trace


def train_head(
    train: SupervisedArrays,
    val: SupervisedArrays,
    thresholds: dict[int, RiskThreshold],
    config: TrainConfig,
    use_adi: bool = True,
    rule: str = "label_threshold",
) -> TrainResult:
    """Mini-batch MSE training of the head; keeps the best validation-F1 epoch.

    Batches are reshuffled each epoch from the config seed, so two runs with
    the same seed produce bit-identical traces.  Ties on validation macro-F1
    go to the earlier epoch.
    """
    if len(train) == 0 or len(val) == 0:
        raise ValueError("train and val must be non-empty")
    dim = train.x.shape[1]
    rng = rng_for(config.seed, "train-head")
    theta = init_params(dim, rng).to_vector()
    state = OptimizerState.zeros(theta.size)
    n = len(train)
    steps_per_epoch = int(np.ceil(n / config.batch))
    total_steps = config.epochs * steps_per_epoch

    best_theta = theta.copy()
    best_f1 = -1.0
    best_epoch = 0
    trace: list[EpochStat] = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch):
            idx = perm[start : start + config.batch]
            params = HeadParams.from_vector(theta, dim)
            ghat, cache = forward_batch(train.x[idx], train.adi[idx], params, use_adi)
            err = ghat - train.g[idx]
            if not np.all(np.isfinite(err)):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", trace)
            grad_out = 2.0 * err / idx.size
            grads = backward_batch(cache, train.adi[idx], params, grad_out, use_adi)
            step += 1
            try:
                theta, state = adamw_step(theta, grads, state, lr_schedule(step, total_steps, config), config)
            except FloatingPointError as exc:
                raise TrainingDiverged(f"{exc} at epoch {epoch}", trace) from exc

        if epoch % config.eval_every == 0 or epoch == config.epochs:
            params = HeadParams.from_vector(theta, dim)
            train_pred, _ = forward_batch(train.x, train.adi, params, use_adi)
            train_mse = float(np.mean((train_pred - train.g) ** 2))
            val_pred, _ = forward_batch(val.x, val.adi, params, use_adi)
            val_f1 = macro_f1(predict_risk_by_year(val_pred, val.years, thresholds, rule), val.r)
            trace.append(EpochStat(epoch=epoch, train_mse=train_mse, val_f1=val_f1))
            if val_f1 > best_f1:
                best_f1 = val_f1
                best_theta = theta.copy()
                best_epoch = epoch

    return TrainResult(
        params=HeadParams.from_vector(best_theta, dim),
        best_epoch=best_epoch,
        best_val_f1=best_f1,
        trace=trace,
    )


@dataclass
class CountModel:
    """Ordinary least squares over normalized counts (optionally plus ADI)."""

    weights: np.ndarray
    intercept: float
    feature_names: tuple[str, ...]

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=float) @ self.weights + self.intercept


def fit_count_lr(
    features: np.ndarray, targets: np.ndarray, feature_names: tuple[str, ...] = ()
) -> CountModel:
    """Least squares via normal equations with a tiny ridge (1e-10) for conditioning."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"bad design matrix {x.shape} for {y.shape[0]} targets")
    if x.shape[0] < x.shape[1] + 1:
        raise ValueError(f"need at least {x.shape[1] + 1} rows, have {x.shape[0]}")
    a = np.hstack([x, np.ones((x.shape[0], 1))])
    gram = a.T @ a
    rank = np.linalg.matrix_rank(gram)
    if rank < gram.shape[0]:
        import logging

        logging.getLogger(__name__).warning(
            "rank-deficient design (%d < %d); ridge-resolved", rank, gram.shape[0]
        )
    try:
        w = np.linalg.solve(gram + 1e-10 * np.eye(gram.shape[0]), a.T @ y)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"normal equations unsolvable: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise ValueError("non-finite least-squares solution")
    return CountModel(weights=w[:-1], intercept=float(w[-1]), feature_names=tuple(feature_names))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _platt_fit(margins: np.ndarray, labels: np.ndarray, iters: int = 100) -> tuple[float, float]:
    """Newton fit of sigmoid(a*margin + b) to binary labels (margin calibration)."""
    a, b = 1.0, 0.0
    for _ in range(iters):
        z = a * margins + b
        p = _sigmoid(z)
        r = p - labels
        ga, gb = float(np.mean(r * margins)), float(np.mean(r))
        w = p * (1.0 - p)
        haa = float(np.mean(w * margins * margins)) + 1e-12
        hab = float(np.mean(w * margins))
        hbb = float(np.mean(w)) + 1e-12
        det = haa * hbb - hab * hab
        if abs(det) < 1e-18:
            break
        da = (gb * hab - ga * hbb) / det
        db = (ga * hab - gb * haa) / det
        a, b = a + da, b + db
        if max(abs(da), abs(db)) < 1e-10:
            break
    return a, b


@dataclass
class LinearClassifier:
    """Logistic-regression or linear-SVM risk classifier over aggregated embeddings.

    Both expose a calibrated score in (0, 1): the sigmoid output for logistic
    regression, and a Platt-calibrated logistic map of the margin for the SVM
    (raw hinge margins settle near +-1, where a fixed squash could never clear
    a probability-style threshold).  High-risk is predicted when the score
    reaches the decision threshold.
    """

    kind: str
    weights: np.ndarray
    bias: float
    threshold: float = 0.15
    calib_a: float = 1.0
    calib_b: float = 0.0

    def score(self, features: np.ndarray) -> np.ndarray:
        margin = np.asarray(features, dtype=float) @ self.weights + self.bias
        return _sigmoid(self.calib_a * margin + self.calib_b)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return (self.score(features) >= self.threshold).astype(int)


def fit_classifier(
    kind: str,
    features: np.ndarray,
    labels: np.ndarray,
    threshold: float = 0.15,
    config: TrainConfig | None = None,
    val_features: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
) -> LinearClassifier:
    """Train a LogReg (binary cross-entropy) or SVM (hinge + L2) classifier.

    Uses the same AdamW optimizer and warmup/decay schedule as the head.
    When a validation set is given, the best validation-macro-F1 epoch is
    kept.  A single-class training set is an error.
    """
    if kind not in ("LogReg", "SVM"):
        raise ValueError(f"unknown classifier kind {kind!r}")
    config = config or TrainConfig()
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if set(np.unique(y)) != {0, 1}:
        raise ValueError("training labels must contain both classes")

    rng = rng_for(config.seed, "classifier", kind)
    bound = 1.0 / np.sqrt(x.shape[1])
    theta = np.concatenate([rng.uniform(-bound, bound, x.shape[1]), [0.0]])
    state = OptimizerState.zeros(theta.size)
    n = x.shape[0]
    steps_per_epoch = int(np.ceil(n / config.batch))
    total_steps = config.epochs * steps_per_epoch

    def finalize(vec: np.ndarray) -> LinearClassifier:
        clf = LinearClassifier(kind, vec[:-1].copy(), float(vec[-1]), threshold)
        if kind == "SVM":
            margins = x @ clf.weights + clf.bias
            clf.calib_a, clf.calib_b = _platt_fit(margins, y.astype(float))
        return clf

    best_theta = theta.copy()
    best_f1 = -1.0
    step = 0
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch):
            idx = perm[start : start + config.batch]
            xb, yb = x[idx], y[idx]
            margin = xb @ theta[:-1] + theta[-1]
            if kind == "LogReg":
                residual = _sigmoid(margin) - yb  # d(BCE)/d(margin)
            else:
                signed = 2.0 * yb - 1.0
                residual = np.where(signed * margin < 1.0, -signed, 0.0)  # d(hinge)/d(margin)
            grad_w = xb.T @ residual / idx.size
            grad_b = float(residual.mean())
            grads = np.concatenate([grad_w, [grad_b]])
            step += 1
            theta, state = adamw_step(theta, grads, state, lr_schedule(step, total_steps, config), config)

        if val_features is not None and val_labels is not None:
            f1 = macro_f1(finalize(theta).predict(val_features), val_labels)
            if f1 > best_f1:
                best_f1 = f1
                best_theta = theta.copy()

    if val_features is None:
        best_theta = theta
    return finalize(best_theta)


def save_checkpoint(
    path: str | Path,
    result: TrainResult,
    config: TrainConfig,
    use_adi: bool,
) -> None:
    """JSON checkpoint with decimal parameters (17 significant digits)."""
    params = result.params
    payload = {
        "dim": params.dim,
        "param_count": param_count(params.dim),
        "use_adi": use_adi,
        "params": {
            "conv_w": [format(v, ".17g") for v in params.conv_w],
            "conv_b": format(params.conv_b, ".17g"),
            "fc_w": [format(v, ".17g") for v in params.fc_w],
            "fc_b": format(params.fc_b, ".17g"),
            "fuse_w": [format(v, ".17g") for v in params.fuse_w],
            "fuse_b": format(params.fuse_b, ".17g"),
        },
        "config": {
            "epochs": config.epochs, "batch": config.batch, "peak_lr": config.peak_lr,
            "warmup_frac": config.warmup_frac, "weight_decay": config.weight_decay,
            "beta1": config.beta1, "beta2": config.beta2, "eps": config.eps,
            "seed": config.seed, "eval_every": config.eval_every,
        },
        "best_epoch": result.best_epoch,
        "best_val_f1": result.best_val_f1,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[HeadParams, dict]:
    payload = json.loads(Path(path).read_text("utf-8"))
    raw = payload["params"]
    params = HeadParams(
        conv_w=np.array([float(v) for v in raw["conv_w"]]),
        conv_b=float(raw["conv_b"]),
        fc_w=np.array([float(v) for v in raw["fc_w"]]),
        fc_b=float(raw["fc_b"]),
        fuse_w=np.array([float(v) for v in raw["fuse_w"]]),
        fuse_b=float(raw["fuse_b"]),
        dim=int(payload["dim"]),
    )
    return params, payload
