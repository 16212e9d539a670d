"""Fully connected autoencoder scoring reconstruction error as anomaly signal.

Implemented directly on numpy in float64: forward, backward, and the
optimizer are explicit here, which keeps training bit-reproducible per
seed and lets the finite-difference gradient check exercise the real
analytic gradients.

Layer stack (widths for the default latent of 32):

    encoder   in -> 256 -> 128 -> 64          each: linear, leaky ReLU, batchnorm
              64 -> latent                    plain linear
    decoder   latent -> 64 -> 128 -> 256      each: linear, leaky ReLU
              256 -> in                       linear, tanh

The tanh output bounds reconstructions to (-1, 1), so training and
scoring operate on inputs squashed into [-1, 1] by a per-dimension affine
map whose bounds come from the training set and ride along in the bundle.
Training minimizes Huber loss with Gaussian jitter on inputs only, RMSProp
steps (momentum-free adaptive rule), and early stopping that restores the
best-validation weights.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .detector import Thresholds, calibrate
from .features import FEATURE_DIM, schema_hash
from .preprocess import FittedPca, FittedScaler, fit as fit_preprocess, transform

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class AeArchitecture:
    input_dim: int
    hidden: tuple[int, int, int] = (256, 128, 64)
    latent_dim: int = 32
    lrelu_slope: float = 0.01

    def widths(self) -> list[int]:
        h1, h2, h3 = self.hidden
        d = self.input_dim
        return [d, h1, h2, h3, self.latent_dim, h3, h2, h1, d]


@dataclass(frozen=True)
class TrainConfig:
    huber_delta: float = 1.0
    jitter_std: float = 0.01
    batch_size: int = 64
    learning_rate: float = 1e-3
    max_epochs: int = 500
    patience: int = 20
    min_delta: float = 1e-5
    validation_split: float = 0.2
    rng_seed: int = 0
    latent_dim: int = 32
    variance_target: float = 0.97

    def __post_init__(self) -> None:
        if not (
            self.huber_delta > 0
            and self.jitter_std >= 0
            and self.batch_size > 0
            and self.learning_rate > 0
            and self.max_epochs > 0
            and self.patience > 0
            and self.min_delta >= 0
        ):
            raise ValueError("hyperparameters must be positive")
        if not 0.0 < self.validation_split < 1.0:
            raise ValueError("validation split must be in (0, 1)")


class AutoencoderNet:
    """Parameter container plus explicit forward/backward passes.

    Layers 0-2 carry batchnorm (applied after the leaky ReLU, matching
    the layer listing above); layer 3 is the plain linear bottleneck;
    layers 4-6 are leaky-ReLU decoder stages; layer 7 ends in tanh.
    """

    N_LAYERS = 8
    BN_LAYERS = (0, 1, 2)

    def __init__(self, arch: AeArchitecture, rng: np.random.Generator | None = None):
        self.arch = arch
        widths = arch.widths()
        rng = rng or np.random.default_rng(0)
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        for i in range(self.N_LAYERS):
            fan_in, fan_out = widths[i], widths[i + 1]
            self.params[f"W{i}"] = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
            self.params[f"b{i}"] = np.zeros(fan_out)
        for j, layer in enumerate(self.BN_LAYERS):
            dim = widths[layer + 1]
            self.params[f"gamma{j}"] = np.ones(dim)
            self.params[f"beta{j}"] = np.zeros(dim)
            self.buffers[f"run_mean{j}"] = np.zeros(dim)
            self.buffers[f"run_var{j}"] = np.ones(dim)

    # -- forward -----------------------------------------------------------

    def forward(self, x: np.ndarray, training: bool) -> tuple[np.ndarray, dict[str, Any]]:
        """Return (output, cache).  Never mutates buffers; batch statistics
        for the running-average update are returned in the cache."""
        slope = self.arch.lrelu_slope
        cache: dict[str, Any] = {"x0": x, "training": training, "bn": {}}
        h = x
        for i in range(self.N_LAYERS):
            pre = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            cache[f"pre{i}"] = pre
            if i == 3:
                h = pre
            elif i == 7:
                h = np.tanh(pre)
                cache["out"] = h
            else:
                act = np.where(pre > 0, pre, slope * pre)
                if i in self.BN_LAYERS:
                    j = self.BN_LAYERS.index(i)
                    if training:
                        mu = act.mean(axis=0)
                        var = act.var(axis=0)
                    else:
                        mu = self.buffers[f"run_mean{j}"]
                        var = self.buffers[f"run_var{j}"]
                    inv_std = 1.0 / np.sqrt(var + BN_EPS)
                    xhat = (act - mu) * inv_std
                    h = self.params[f"gamma{j}"] * xhat + self.params[f"beta{j}"]
                    cache["bn"][j] = (act, mu, var, inv_std, xhat)
                else:
                    h = act
            cache[f"act{i}"] = h
        return cache["out"], cache

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward(np.atleast_2d(x), training=False)
        return out

    def update_running_stats(self, cache: dict[str, Any]) -> None:
        for j, (_, mu, var, _, _) in cache["bn"].items():
            self.buffers[f"run_mean{j}"] *= 1.0 - BN_MOMENTUM
            self.buffers[f"run_mean{j}"] += BN_MOMENTUM * mu
            self.buffers[f"run_var{j}"] *= 1.0 - BN_MOMENTUM
            self.buffers[f"run_var{j}"] += BN_MOMENTUM * var

    # -- backward ----------------------------------------------------------

    def backward(self, cache: dict[str, Any], dout: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of the loss w.r.t. every parameter, given dL/d(output)."""
        slope = self.arch.lrelu_slope
        grads: dict[str, np.ndarray] = {}
        dh = dout
        for i in reversed(range(self.N_LAYERS)):
            pre = cache[f"pre{i}"]
            if i == 7:
                out = cache["out"]
                dpre = dh * (1.0 - out * out)
            elif i == 3:
                dpre = dh
            else:
                if i in self.BN_LAYERS:
                    j = self.BN_LAYERS.index(i)
                    act, mu, var, inv_std, xhat = cache["bn"][j]
                    m = act.shape[0]
                    grads[f"beta{j}"] = dh.sum(axis=0)
                    grads[f"gamma{j}"] = (dh * xhat).sum(axis=0)
                    dxhat = dh * self.params[f"gamma{j}"]
                    if cache["training"]:
                        dvar = (dxhat * (act - mu)).sum(axis=0) * (-0.5) * inv_std**3
                        dmu = (-dxhat * inv_std).sum(axis=0) + dvar * (-2.0 / m) * (act - mu).sum(axis=0)
                        dact = dxhat * inv_std + dvar * 2.0 * (act - mu) / m + dmu / m
                    else:
                        dact = dxhat * inv_std
                    dh = dact
                dpre = dh * np.where(pre > 0, 1.0, slope)
            x_in = cache["x0"] if i == 0 else cache[f"act{i-1}"]
            grads[f"W{i}"] = x_in.T @ dpre
            grads[f"b{i}"] = dpre.sum(axis=0)
            dh = dpre @ self.params[f"W{i}"].T
        return grads

    def clone_params(self) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
        return copy.deepcopy(self.params), copy.deepcopy(self.buffers)

    def load_params(self, params: dict[str, np.ndarray], buffers: dict[str, np.ndarray]) -> None:
        self.params = copy.deepcopy(params)
        self.buffers = copy.deepcopy(buffers)


def huber_loss_and_grad(
    out: np.ndarray, target: np.ndarray, delta: float
) -> tuple[float, np.ndarray]:
    """Mean Huber loss over all entries and its gradient w.r.t. out."""
    r = out - target
    absr = np.abs(r)
    quad = absr <= delta
    loss = np.where(quad, 0.5 * r * r, delta * (absr - 0.5 * delta))
    grad = np.clip(r, -delta, delta) / r.size
    return float(loss.mean()), grad


class RmsProp:
    """Momentum-free adaptive step: v <- rho v + (1-rho) g^2, w -= lr g/sqrt(v)."""

    def __init__(self, lr: float, rho: float = 0.9, eps: float = 1e-8):
        self.lr, self.rho, self.eps = lr, rho, eps
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if name not in self.v:
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            v *= self.rho
            v += (1.0 - self.rho) * g * g
            params[name] -= self.lr * g / (np.sqrt(v) + self.eps)


# -- squash into the tanh-representable box ---------------------------------


@dataclass(frozen=True)
class SquashBounds:
    lo: np.ndarray
    hi: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        span = np.maximum(self.hi - self.lo, 1e-12)
        return 2.0 * (x - self.lo) / span - 1.0


def fit_squash(reduced_train: np.ndarray, margin: float = 0.25) -> SquashBounds:
    """Affine bounds mapping the training range into [-1, 1] with headroom.

    The margin widens each side by a fraction of the observed span so
    mild benign extrapolation on unseen motion profiles stays inside the
    tanh-representable box instead of being scored as anomalous.
    """
    lo = reduced_train.min(axis=0)
    hi = reduced_train.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    return SquashBounds(lo=lo - margin * span, hi=hi + margin * span)


# -- the model bundle --------------------------------------------------------


@dataclass
class ModelBundle:
    """Everything runtime scoring needs, trained once and loaded once."""

    scaler: FittedScaler
    pca: FittedPca
    squash: SquashBounds
    net: AutoencoderNet
    thresholds: Thresholds | None
    feature_schema_hash: str
    metadata: dict[str, Any] = field(default_factory=dict)


def score(x_reduced: np.ndarray, bundle: ModelBundle) -> float:
    """Reconstruction MSE of one PCA-reduced vector; pure and repeatable."""
    x = np.asarray(x_reduced, dtype=float)
    if x.shape != (bundle.pca.d_out,):
        raise ValueError(f"expected reduced vector of dim {bundle.pca.d_out}, got {x.shape}")
    u = bundle.squash.apply(x)
    recon = bundle.net.reconstruct(u)[0]
    return float(np.mean((recon - u) ** 2))


def score_batch(x_reduced: np.ndarray, bundle: ModelBundle) -> np.ndarray:
    u = bundle.squash.apply(np.atleast_2d(np.asarray(x_reduced, dtype=float)))
    recon, _ = bundle.net.forward(u, training=False)
    return np.mean((recon - u) ** 2, axis=1)


def score_features(features_41: np.ndarray, bundle: ModelBundle) -> float:
    """Convenience: raw 41-entry features through the full pipeline."""
    reduced = transform(np.asarray(features_41, dtype=float), bundle.scaler, bundle.pca)
    return score(reduced, bundle)


# -- training ----------------------------------------------------------------


def train_network(
    u_train: np.ndarray,
    u_val: np.ndarray,
    arch: AeArchitecture,
    cfg: TrainConfig,
) -> tuple[AutoencoderNet, dict[str, Any]]:
    """Train on pre-squashed matrices; returns the best-validation network."""
    rng = np.random.default_rng([cfg.rng_seed, 41])
    net = AutoencoderNet(arch, rng)
    opt = RmsProp(cfg.learning_rate)

    t_train = np.clip(u_train, -1.0, 1.0)
    t_val = np.clip(u_val, -1.0, 1.0)
    assert np.all(np.abs(t_train) <= 1.0)

    best_val = np.inf
    best_epoch = -1
    best_snapshot = net.clone_params()
    epochs_since_improve = 0
    n = u_train.shape[0]
    epochs_run = 0

    for epoch in range(cfg.max_epochs):
        epochs_run = epoch + 1
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = u_train[idx]
            if cfg.jitter_std > 0:
                x = x + rng.standard_normal(x.shape) * cfg.jitter_std
            out, cache = net.forward(x, training=True)
            loss, dout = huber_loss_and_grad(out, t_train[idx], cfg.huber_delta)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch} (lr={cfg.learning_rate})"
                )
            grads = net.backward(cache, dout)
            opt.step(net.params, grads)
            net.update_running_stats(cache)

        val_out, _ = net.forward(u_val, training=False)
        val_loss, _ = huber_loss_and_grad(val_out, t_val, cfg.huber_delta)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"validation loss non-finite at epoch {epoch}")
        if val_loss < best_val - cfg.min_delta:
            best_val = val_loss
            best_epoch = epoch
            best_snapshot = net.clone_params()
            epochs_since_improve = 0
        else:
            epochs_since_improve += 1
            if epochs_since_improve >= cfg.patience:
                break

    net.load_params(*best_snapshot)
    history = {
        "epochs_run": epochs_run,
        "best_epoch": best_epoch,
        "best_val_loss": best_val,
    }
    return net, history


def train(clean_features: np.ndarray, cfg: TrainConfig | None = None) -> ModelBundle:
    """Full pipeline fit on raw 41-entry clean features.

    The tail `validation_split` fraction of rows is held out: pass rows
    grouped by session and validation then consists of whole unseen
    sessions, so early stopping and threshold calibration both measure
    generalization to new motion, not memorization of seen windows.
    Scaler, PCA, and squash bounds are fitted on the training rows only.
    """
    cfg = cfg or TrainConfig()
    x = np.asarray(clean_features, dtype=float)
    if x.ndim != 2 or x.shape[1] != FEATURE_DIM:
        raise ValueError(f"expected (N, {FEATURE_DIM}) matrix, got {x.shape}")
    n = x.shape[0]
    if n < 10:
        raise ValueError("too few feature rows to train on")

    n_val = max(1, int(round(n * cfg.validation_split)))
    train_rows = x[:-n_val]
    val_rows = x[-n_val:]

    scaler, pca = fit_preprocess(train_rows, variance_target=cfg.variance_target)
    reduced_train = transform(train_rows, scaler, pca)
    reduced_val = transform(val_rows, scaler, pca)
    squash = fit_squash(reduced_train)
    u_train = squash.apply(reduced_train)
    u_val = squash.apply(reduced_val)

    arch = AeArchitecture(input_dim=pca.d_out, latent_dim=cfg.latent_dim)
    net, history = train_network(u_train, u_val, arch, cfg)

    bundle = ModelBundle(
        scaler=scaler,
        pca=pca,
        squash=squash,
        net=net,
        thresholds=None,
        feature_schema_hash=schema_hash(),
    )
    val_scores = score_batch(reduced_val, bundle)
    bundle.thresholds = calibrate(val_scores)
    bundle.metadata = {
        "optimizer": "rmsprop",
        "learning_rate": cfg.learning_rate,
        "huber_delta": cfg.huber_delta,
        "jitter_std": cfg.jitter_std,
        "batch_size": cfg.batch_size,
        "max_epochs": cfg.max_epochs,
        "patience": cfg.patience,
        "min_delta": cfg.min_delta,
        "validation_split": cfg.validation_split,
        "rng_seed": cfg.rng_seed,
        "n_train": int(train_rows.shape[0]),
        "n_val": int(n_val),
        "pca_d_out": pca.d_out,
        "pca_retained_ratio": pca.retained_ratio,
        "latent_dim": cfg.latent_dim,
        **history,
    }
    return bundle


# -- gradient check ----------------------------------------------------------


def gradient_check(
    arch: AeArchitecture,
    probe_batch: np.ndarray,
    seed: int = 0,
    h: float = 1e-5,
    entries_per_tensor: int = 24,
    huber_delta: float = 1.0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Builds a freshly initialized network, computes analytic gradients for
    one training-mode pass, then probes every parameter tensor with
    central finite differences on a deterministic sample of entries.
    """
    x = np.atleast_2d(np.asarray(probe_batch, dtype=float))
    if x.shape[0] > 8:
        raise ValueError("probe batch must have at most 8 rows")
    rng = np.random.default_rng([seed, 42])
    net = AutoencoderNet(arch, rng)
    target = rng.uniform(-0.8, 0.8, size=x.shape)

    def loss_and_masks() -> tuple[float, tuple[np.ndarray, ...]]:
        out, cache = net.forward(x, training=True)
        loss, _ = huber_loss_and_grad(out, target, huber_delta)
        # activation-region masks: a central difference is only valid when
        # both evaluations stay on the same side of every kink
        masks = tuple(cache[f"pre{i}"] > 0 for i in range(net.N_LAYERS) if i not in (3, 7))
        masks += (np.abs(out - target) <= huber_delta,)
        return loss, masks

    out, cache = net.forward(x, training=True)
    _, dout = huber_loss_and_grad(out, target, huber_delta)
    analytic = net.backward(cache, dout)

    max_rel = 0.0
    for name in sorted(net.params):
        tensor = net.params[name]
        flat = tensor.reshape(-1)
        size = flat.size
        n_probe = min(size, entries_per_tensor)
        idx = rng.choice(size, size=n_probe, replace=False)
        ga_flat = analytic[name].reshape(-1)
        for k in idx:
            orig = flat[k]
            flat[k] = orig + h
            lp, masks_p = loss_and_masks()
            flat[k] = orig - h
            lm, masks_m = loss_and_masks()
            flat[k] = orig
            if any(not np.array_equal(a, b) for a, b in zip(masks_p, masks_m)):
                continue  # kink crossed inside [w-h, w+h]; FD invalid here
            g_fd = (lp - lm) / (2.0 * h)
            g_an = ga_flat[k]
            if abs(g_an) < 1e-8 and abs(g_fd) < 1e-8:
                continue  # below central-difference noise resolution
            denom = max(abs(g_an) + abs(g_fd), 1e-8)
            rel = abs(g_an - g_fd) / denom
            max_rel = max(max_rel, rel)
    return max_rel
