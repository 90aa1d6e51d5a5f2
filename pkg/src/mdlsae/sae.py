"""Sparse autoencoders with hand-derived gradients.

Three activation rules are supported:

``relu_l1``
    elementwise ReLU, trained with an L1 penalty on the latents.
``topk``
    per sample, keep the ``k`` largest raw pre-activations (sign kept).
``batch_topk``
    across the whole batch, keep the ``n * k`` largest pre-activations and
    clamp the kept values at zero from below.

Ties in any selection go to the lower index (row-major for ``batch_topk``).
The selection mask is treated as constant in the backward pass.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core_math import Adam, make_rng

ACTIVATION_RULES = ("relu_l1", "topk", "batch_topk")
PARAM_NAMES = ("W_enc", "b_enc", "W_dec", "b_dec")


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str = "non-finite loss"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class SaeConfig:
    input_dim: int
    dict_size: int
    k: int = 8
    l1_coefficient: float = 0.0
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 256
    seed: int = 0
    activation_rule: str = "batch_topk"
    patience: int = 10

    def __post_init__(self):
        _check_hyperparams(self.dict_size, self.k, self.l1_coefficient,
                           self.learning_rate, self.epochs, self.batch_size,
                           self.activation_rule, self.patience)
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")

    @classmethod
    def from_dict(cls, d: dict) -> "SaeConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def estimator_params(self) -> dict:
        d = self.to_dict()
        del d["input_dim"]
        return d


@dataclass(frozen=True)
class TrainReport:
    final_train_mse: float
    final_test_mse: float
    mean_L0: float
    alive_features: int
    epochs_run: int
    train_mse_history: tuple = ()
    test_mse_history: tuple = ()

    def record(self) -> dict:
        return {
            "final_train_mse": self.final_train_mse,
            "final_test_mse": self.final_test_mse,
            "mean_L0": self.mean_L0,
            "alive_features": self.alive_features,
            "epochs_run": self.epochs_run,
        }


def _check_hyperparams(dict_size, k, l1_coefficient, learning_rate, epochs,
                       batch_size, activation_rule, patience):
    if activation_rule not in ACTIVATION_RULES:
        raise ValueError(f"activation_rule must be one of {ACTIVATION_RULES}, "
                         f"got {activation_rule!r}")
    if dict_size < 1:
        raise ValueError(f"dict_size must be >= 1, got {dict_size}")
    if activation_rule != "relu_l1" and not 1 <= k <= dict_size:
        raise ValueError(f"need 1 <= k <= dict_size, got k={k}, dict_size={dict_size}")
    if l1_coefficient < 0:
        raise ValueError("l1_coefficient must be >= 0")
    if not learning_rate > 0:
        raise ValueError("learning_rate must be > 0")
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if patience < 1:
        raise ValueError(f"patience must be >= 1, got {patience}")


def _keep_largest(values: np.ndarray, count, axis=None) -> np.ndarray:
    """Boolean mask of the ``count`` largest entries; ties to lower index."""
    if axis is None:
        flat = values.reshape(-1)
        n = flat.size
        m = int(min(max(count, 0), n))
        mask = np.zeros(n, dtype=bool)
        if m == 0:
            return mask.reshape(values.shape)
        if m == n:
            return np.ones(values.shape, dtype=bool)
        thr = np.partition(flat, n - m)[n - m]
        mask = flat > thr
        eq = flat == thr
        need = m - int(mask.sum())
        mask |= eq & (np.cumsum(eq) <= need)
        return mask.reshape(values.shape)

    n_cols = values.shape[1]
    m = int(count)
    if m >= n_cols:
        return np.ones(values.shape, dtype=bool)
    thr = np.partition(values, n_cols - m, axis=1)[:, n_cols - m][:, None]
    mask = values > thr
    eq = values == thr
    need = m - mask.sum(axis=1, keepdims=True)
    mask |= eq & (np.cumsum(eq, axis=1) <= need)
    return mask


def preactivations(X, params):
    return (X - params["b_dec"]) @ params["W_enc"].T + params["b_enc"]


def activation_mask(pre: np.ndarray, rule: str, k: int) -> np.ndarray:
    if rule == "relu_l1":
        return pre > 0
    if rule == "topk":
        return _keep_largest(pre, k, axis=1)
    if rule == "batch_topk":
        return _keep_largest(pre, pre.shape[0] * k) & (pre > 0)
    raise ValueError(f"unknown activation rule {rule!r}")


def loss_and_grads(X, params, rule, k, l1_coefficient=0.0, mask=None):
    """Loss ``mean((x_hat - x)**2) + l1 * mean_rows(|z|_1)`` and its gradients.

    If ``mask`` is given it replaces the activation rule's selection.
    Returns ``(loss, mse, grads, z)``.
    """
    n, d = X.shape
    xc = X - params["b_dec"]
    pre = xc @ params["W_enc"].T + params["b_enc"]
    if mask is None:
        mask = activation_mask(pre, rule, k)
    z = np.where(mask, pre, 0.0)
    x_hat = z @ params["W_dec"].T + params["b_dec"]
    err = x_hat - X
    mse = float(np.mean(err * err))
    loss = mse
    g_out = (2.0 / (n * d)) * err
    dz = g_out @ params["W_dec"]
    if l1_coefficient:
        loss += l1_coefficient * float(np.abs(z).sum()) / n
        dz = dz + (l1_coefficient / n) * np.sign(z)
    dpre = np.where(mask, dz, 0.0)
    grads = {
        "W_dec": g_out.T @ z,
        "b_dec": g_out.sum(axis=0) - dpre.sum(axis=0) @ params["W_enc"],
        "W_enc": dpre.T @ xc,
        "b_enc": dpre.sum(axis=0),
    }
    return loss, mse, grads, z


def _normalize_columns(W: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(W, axis=0, keepdims=True)
    return W / np.where(norms > 0, norms, 1.0)


class SparseAutoencoder(TransformerMixin, BaseEstimator):
    """Linear-decoder sparse autoencoder.

    ``transform`` encodes, ``inverse_transform`` decodes, ``predict``
    reconstructs. Decoder columns are kept at unit norm during training.

    Parameters
    ----------
    dict_size : int
        Number of dictionary features ``D``.
    k : int
        Target nonzeros per sample (``topk`` and ``batch_topk``).
    activation_rule : {"relu_l1", "topk", "batch_topk"}
    l1_coefficient : float
        Weight of the mean row L1 norm of the latents (``relu_l1`` only).
    learning_rate, epochs, batch_size : Adam minibatch settings.
    patience : int
        Epochs without held-out improvement before stopping.
    seed : int
        Seed for initialization and minibatch order.
    """

    def __init__(self, dict_size=64, k=8, activation_rule="batch_topk",
                 l1_coefficient=0.0, learning_rate=1e-3, epochs=50,
                 batch_size=256, patience=10, seed=0):
        self.dict_size = dict_size
        self.k = k
        self.activation_rule = activation_rule
        self.l1_coefficient = l1_coefficient
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.patience = patience
        self.seed = seed

    @classmethod
    def from_config(cls, config: SaeConfig) -> "SparseAutoencoder":
        return cls(**config.estimator_params())

    @classmethod
    def from_weights(cls, W_enc, b_enc, W_dec, b_dec, **params) -> "SparseAutoencoder":
        W_enc = np.array(W_enc, dtype=float, ndmin=2)
        W_dec = np.array(W_dec, dtype=float, ndmin=2)
        D, d = W_enc.shape
        if W_dec.shape != (d, D):
            raise ValueError(f"decoder shape {W_dec.shape} != {(d, D)}")
        b_enc = np.asarray(b_enc, dtype=float).reshape(D)
        b_dec = np.asarray(b_dec, dtype=float).reshape(d)
        params.setdefault("dict_size", D)
        model = cls(**params)
        if model.dict_size != D:
            raise ValueError(f"dict_size={model.dict_size} but weights have D={D}")
        model.W_enc_, model.b_enc_, model.W_dec_, model.b_dec_ = W_enc, b_enc, W_dec, b_dec
        model.n_features_in_ = d
        return model

    @property
    def config(self) -> SaeConfig:
        check_is_fitted(self, "W_enc_")
        return SaeConfig(input_dim=self.n_features_in_, **self.get_params())

    def _params(self) -> dict:
        return {name: getattr(self, name + "_") for name in PARAM_NAMES}

    def _set_params_arrays(self, params: dict) -> None:
        for name in PARAM_NAMES:
            setattr(self, name + "_", params[name])

    def _check_X(self, X, n_cols, what="X"):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != n_cols:
            raise ValueError(f"{what} has {X.shape[1]} columns, expected {n_cols}")
        return X

    def _init_params(self, X, rng):
        d, D = X.shape[1], self.dict_size
        W_dec = _normalize_columns(rng.standard_normal((d, D)))
        return {
            "W_enc": W_dec.T.copy(),
            "b_enc": np.zeros(D),
            "W_dec": W_dec,
            "b_dec": X.mean(axis=0),
        }

    def fit(self, X, y=None, X_val=None):
        """Train on ``X``; early stopping watches ``X_val`` (``X`` if omitted)."""
        _check_hyperparams(self.dict_size, self.k, self.l1_coefficient,
                           self.learning_rate, self.epochs, self.batch_size,
                           self.activation_rule, self.patience)
        X = check_array(X, dtype=np.float64)
        X_val = X if X_val is None else self._check_X(X_val, X.shape[1], "X_val")
        self.n_features_in_ = X.shape[1]
        rng = make_rng(self.seed)
        params = self._init_params(X, rng)
        opt = Adam(lr=self.learning_rate)
        n = X.shape[0]
        l1 = self.l1_coefficient if self.activation_rule == "relu_l1" else 0.0

        best_val, best_params, stale = np.inf, None, 0
        train_hist, val_hist = [], []
        epoch = 0
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for epoch in range(1, self.epochs + 1):
                order = rng.permutation(n)
                for start in range(0, n, self.batch_size):
                    xb = X[order[start:start + self.batch_size]]
                    loss, _, grads, _ = loss_and_grads(
                        xb, params, self.activation_rule, self.k, l1)
                    if not np.isfinite(loss):
                        raise TrainingError(epoch)
                    W = params["W_dec"]
                    grads["W_dec"] = grads["W_dec"] - W * np.sum(W * grads["W_dec"], axis=0)
                    opt.step(params, grads)
                    params["W_dec"] = _normalize_columns(params["W_dec"])
                train_mse = _mse_of(X, params, self.activation_rule, self.k)
                val_mse = _mse_of(X_val, params, self.activation_rule, self.k)
                if not (np.isfinite(train_mse) and np.isfinite(val_mse)):
                    raise TrainingError(epoch)
                train_hist.append(train_mse)
                val_hist.append(val_mse)
                if val_mse < best_val:
                    best_val, stale = val_mse, 0
                    best_params = {k: v.copy() for k, v in params.items()}
                else:
                    stale += 1
                    if stale >= self.patience:
                        break
        self._set_params_arrays(best_params)
        self.train_mse_history_ = tuple(train_hist)
        self.val_mse_history_ = tuple(val_hist)
        self.epochs_run_ = epoch
        self.train_report_ = self._report(X, X_val)
        return self

    def _report(self, X, X_val) -> TrainReport:
        z_val = self.transform(X_val)
        return TrainReport(
            final_train_mse=self.reconstruction_mse(X),
            final_test_mse=mse(X_val, self.inverse_transform(z_val)),
            mean_L0=float(np.count_nonzero(z_val, axis=1).mean()),
            alive_features=self.dict_size - dead_features(self, X, 1e-6),
            epochs_run=self.epochs_run_,
            train_mse_history=self.train_mse_history_,
            test_mse_history=self.val_mse_history_,
        )

    def transform(self, X):
        """Encode ``X`` as one batch of latents (``n x D``)."""
        check_is_fitted(self, "W_enc_")
        X = self._check_X(X, self.n_features_in_)
        pre = preactivations(X, self._params())
        return np.where(activation_mask(pre, self.activation_rule, self.k), pre, 0.0)

    encode = transform

    def inverse_transform(self, Z):
        """Affine decode ``Z @ W_dec.T + b_dec``."""
        check_is_fitted(self, "W_enc_")
        Z = self._check_X(Z, self.dict_size, "latents")
        return Z @ self.W_dec_.T + self.b_dec_

    decode = inverse_transform

    def predict(self, X):
        return self.inverse_transform(self.transform(X))

    def reconstruction_mse(self, X) -> float:
        return mse(X, self.predict(X))

    def score(self, X, y=None) -> float:
        return -self.reconstruction_mse(X)


def _mse_of(X, params, rule, k) -> float:
    pre = preactivations(X, params)
    z = np.where(activation_mask(pre, rule, k), pre, 0.0)
    err = z @ params["W_dec"].T + params["b_dec"] - X
    return float(np.mean(err * err))


def mse(x, x_hat) -> float:
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    return float(np.mean((x - x_hat) ** 2))


def dead_features(model: SparseAutoencoder, data, threshold: float) -> int:
    """Features whose maximum activation over ``data`` is below ``threshold``."""
    if not (threshold >= 0 and np.isfinite(threshold)):
        raise ValueError(f"threshold must be finite and >= 0, got {threshold!r}")
    z = model.transform(data)
    return int(np.count_nonzero(z.max(axis=0) < threshold))


def train(config: SaeConfig, train_data, test_data):
    """Fit an autoencoder from ``config``. Returns ``(model, TrainReport)``."""
    train_data = check_array(train_data, dtype=np.float64)
    if train_data.shape[1] != config.input_dim:
        raise ValueError(f"train data has {train_data.shape[1]} columns, "
                         f"config.input_dim={config.input_dim}")
    model = SparseAutoencoder.from_config(config).fit(train_data, X_val=test_data)
    return model, model.train_report_
