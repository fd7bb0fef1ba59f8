"""Feed-forward rectifier network with softmax output, trained by mini-batch Adam."""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp, softmax
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..errors import ConfigurationError
from .validation import check_features, check_training_data


def init_params(layer_sizes, rng):
    """He-uniform weights for hidden layers, Glorot-uniform for the output; zero biases."""
    params = []
    last = len(layer_sizes) - 2
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out)) if i == last else np.sqrt(6.0 / fan_in)
        params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params, X):
    acts = [X]
    h = X
    n_layers = len(params) // 2
    for i in range(n_layers):
        z = h @ params[2 * i] + params[2 * i + 1]
        h = np.maximum(z, 0.0) if i < n_layers - 1 else z
        acts.append(h)
    return acts


def loss_grad(params, X, Y, alpha):
    """Mean cross-entropy + ``alpha / 2 * sum ||W||^2`` and its gradient (backprop)."""
    n = X.shape[0]
    acts = forward(params, X)
    logits = acts[-1]
    logp = logits - logsumexp(logits, axis=1, keepdims=True)
    weights = params[0::2]
    loss = -np.sum(Y * logp) / n + 0.5 * alpha * sum(np.sum(W * W) for W in weights)
    delta = (np.exp(logp) - Y) / n
    grads = [None] * len(params)
    for i in range(len(params) // 2 - 1, -1, -1):
        W = params[2 * i]
        grads[2 * i] = acts[i].T @ delta + alpha * W
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ W.T) * (acts[i] > 0)
    return float(loss), grads


class MLPClassifier(ClassifierMixin, BaseEstimator):
    """Rectifier MLP; ``hidden_layer_sizes=(50,)`` gives one layer of 50 units.

    Each epoch shuffles the rows with the seeded generator and takes one Adam
    step per mini-batch. ``loss_curve_`` holds the full training loss before
    training and after every epoch.
    """

    def __init__(self, hidden_layer_sizes=(50,), epochs=10, batch_size=32, learning_rate=0.01,
                 alpha=1e-4, beta1=0.9, beta2=0.999, epsilon=1e-8, random_state=1992):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.alpha = alpha
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.random_state = random_state

    def _check_params(self):
        if int(self.epochs) < 1:
            raise ConfigurationError(f"epochs must be at least 1, got {self.epochs}")
        if int(self.batch_size) < 1:
            raise ConfigurationError("batch_size must be at least 1")
        if any(int(h) < 1 for h in self.hidden_layer_sizes):
            raise ConfigurationError("hidden layers need at least one unit")
        if self.random_state is None:
            raise ConfigurationError("an explicit random_state is required")

    def initialize(self, X, y):
        """Set up classes and seeded initial weights without training."""
        X, y = check_training_data(self, X, y)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        self._rng = np.random.default_rng(self.random_state)
        sizes = [X.shape[1], *[int(h) for h in self.hidden_layer_sizes], len(self.classes_)]
        self.params_ = init_params(sizes, self._rng)
        Y = np.eye(len(self.classes_))[y_enc]
        self.loss_curve_ = [loss_grad(self.params_, X, Y, self.alpha)[0]]
        return X, Y

    def fit(self, X, y):
        self._check_params()
        X, Y = self.initialize(X, y)
        rng = self._rng
        m = [np.zeros_like(p) for p in self.params_]
        v = [np.zeros_like(p) for p in self.params_]
        step = 0
        n = X.shape[0]
        bs = int(self.batch_size)
        for _ in range(int(self.epochs)):
            order = rng.permutation(n)
            for start in range(0, n, bs):
                rows = order[start:start + bs]
                _, grads = loss_grad(self.params_, X[rows], Y[rows], self.alpha)
                step += 1
                c1 = 1 - self.beta1 ** step
                c2 = 1 - self.beta2 ** step
                for i, g in enumerate(grads):
                    m[i] = self.beta1 * m[i] + (1 - self.beta1) * g
                    v[i] = self.beta2 * v[i] + (1 - self.beta2) * g * g
                    self.params_[i] = self.params_[i] - self.learning_rate * (m[i] / c1) / (np.sqrt(v[i] / c2) + self.epsilon)
            self.loss_curve_.append(loss_grad(self.params_, X, Y, self.alpha)[0])
        self.n_iter_ = int(self.epochs)
        del self._rng
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_features(self, X)
        return softmax(forward(self.params_, X)[-1], axis=1)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def get_state(self) -> dict:
        return {
            "classes": self.classes_.tolist(),
            "n_features": self.n_features_in_,
            "layers": [
                {"weights": self.params_[2 * i].tolist(), "bias": self.params_[2 * i + 1].tolist()}
                for i in range(len(self.params_) // 2)
            ],
            "loss_curve": list(self.loss_curve_),
        }

    def set_state(self, state: dict):
        self.classes_ = np.array(state["classes"])
        self.n_features_in_ = state["n_features"]
        params = []
        for layer in state["layers"]:
            params.append(np.array(layer["weights"], dtype=float).reshape(-1, len(layer["bias"])))
            params.append(np.array(layer["bias"], dtype=float))
        self.params_ = params
        self.loss_curve_ = state["loss_curve"]
        return self
