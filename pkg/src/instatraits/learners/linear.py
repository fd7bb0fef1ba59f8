"""L2-regularised binomial and multinomial logistic regression (Newton / IRLS).

Both minimise the *mean* negative log-likelihood plus ``alpha / 2 * ||W||^2``
(intercepts unpenalised), so duplicating every training row leaves the fit
unchanged. Newton steps use backtracking, keeping the recorded loss
non-increasing.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit, log_expit, logsumexp, softmax
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..errors import ConfigurationError, ValidationError
from .validation import check_features, check_training_data


def binomial_loss_grad(theta, X, y, alpha):
    """Loss and gradient at ``theta = [b, w_1..w_d]`` for 0/1 targets ``y``."""
    z = theta[0] + X @ theta[1:]
    w = theta[1:]
    # -[y log s(z) + (1-y) log s(-z)]
    loss = -np.mean(y * log_expit(z) + (1 - y) * log_expit(-z)) + 0.5 * alpha * w @ w
    r = (expit(z) - y) / X.shape[0]
    grad = np.concatenate(([r.sum()], X.T @ r + alpha * w))
    return float(loss), grad


def binomial_hessian(theta, X, alpha):
    n = X.shape[0]
    p = expit(theta[0] + X @ theta[1:])
    s = p * (1 - p) / n
    A = np.hstack([np.ones((n, 1)), X])
    H = (A * s[:, None]).T @ A
    H[1:, 1:] += alpha * np.eye(X.shape[1])
    return H


def multinomial_loss_grad(theta, X, Y, alpha):
    """Loss and gradient for one-hot targets ``Y`` (n x K).

    ``theta`` is the flattened (d + 1) x K matrix whose first row holds the
    intercepts.
    """
    n, d = X.shape
    K = Y.shape[1]
    T = theta.reshape(d + 1, K)
    Z = T[0] + X @ T[1:]
    logp = Z - logsumexp(Z, axis=1, keepdims=True)
    W = T[1:]
    loss = -np.sum(Y * logp) / n + 0.5 * alpha * np.sum(W * W)
    R = (np.exp(logp) - Y) / n
    G = np.vstack([R.sum(axis=0), X.T @ R + alpha * W])
    return float(loss), G.ravel()


def multinomial_hessian(theta, X, K, alpha):
    n, d = X.shape
    T = theta.reshape(d + 1, K)
    P = softmax(T[0] + X @ T[1:], axis=1)
    A = np.hstack([np.ones((n, 1)), X])
    H = np.zeros((d + 1, K, d + 1, K))
    for a in range(K):
        for b in range(a, K):
            wts = P[:, a] * ((a == b) - P[:, b]) / n
            block = (A * wts[:, None]).T @ A
            H[:, a, :, b] = block
            H[:, b, :, a] = block.T
    H = H.reshape((d + 1) * K, (d + 1) * K)
    reg = np.zeros((d + 1, K))
    reg[1:] = alpha
    H[np.diag_indices_from(H)] += reg.ravel()
    return H


def newton(loss_grad, hessian, theta0, tol=1e-8, max_iter=500):
    """Damped Newton minimisation. Returns ``(theta, loss_path, n_iter, converged)``."""
    theta = theta0.copy()
    loss, grad = loss_grad(theta)
    path = [loss]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        H = hessian(theta)
        step = np.linalg.lstsq(H, grad, rcond=None)[0]
        if not np.all(np.isfinite(step)) or grad @ step <= 0:
            step = grad
        t = 1.0
        while True:
            cand = theta - t * step
            new_loss, new_grad = loss_grad(cand)
            if new_loss <= loss - 1e-4 * t * (grad @ step) or t < 1e-10:
                break
            t *= 0.5
        if new_loss > loss:
            converged = True
            break
        delta = np.max(np.abs(cand - theta))
        theta, loss, grad = cand, new_loss, new_grad
        path.append(loss)
        if delta < tol:
            converged = True
            break
    return theta, path, it, converged


class _LogisticBase(ClassifierMixin, BaseEstimator):
    def __init__(self, alpha=1e-2, tol=1e-8, max_iter=500):
        self.alpha = alpha
        self.tol = tol
        self.max_iter = max_iter

    def _check_params(self):
        if self.alpha < 0:
            raise ConfigurationError("alpha must be non-negative")
        if int(self.max_iter) < 1:
            raise ConfigurationError("max_iter must be at least 1")

    def _fit_binomial(self, X, y_enc):
        a = float(self.alpha)
        theta, path, it, conv = newton(
            lambda th: binomial_loss_grad(th, X, y_enc, a),
            lambda th: binomial_hessian(th, X, a),
            np.zeros(X.shape[1] + 1), self.tol, int(self.max_iter),
        )
        self.intercept_ = np.array([theta[0]])
        self.coef_ = theta[1:][None, :]
        self._record(path, it, conv)

    def _record(self, path, it, conv):
        self.loss_path_ = path
        self.n_iter_ = it
        self.converged_ = conv

    def _fit_single_class(self, X):
        self.intercept_ = np.zeros(1)
        self.coef_ = np.zeros((1, X.shape[1]))
        self._record([0.0], 0, True)

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_features(self, X)
        Z = X @ self.coef_.T + self.intercept_
        return Z[:, 0] if Z.shape[1] == 1 else Z

    def predict_proba(self, X):
        Z = self.decision_function(X)
        if len(self.classes_) == 1:
            return np.ones((Z.shape[0], 1))
        if Z.ndim == 1:
            p = expit(Z)
            return np.column_stack([1 - p, p])
        return softmax(Z, axis=1)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def get_state(self) -> dict:
        return {
            "classes": self.classes_.tolist(),
            "n_features": self.n_features_in_,
            "intercept": self.intercept_.tolist(),
            "coef": self.coef_.tolist(),
            "n_iter": self.n_iter_,
            "converged": self.converged_,
            "loss_path": list(self.loss_path_),
        }

    def set_state(self, state: dict):
        self.classes_ = np.array(state["classes"])
        self.n_features_in_ = state["n_features"]
        self.intercept_ = np.array(state["intercept"], dtype=float)
        self.coef_ = np.array(state["coef"], dtype=float).reshape(len(self.intercept_), self.n_features_in_)
        self.n_iter_ = state["n_iter"]
        self.converged_ = state["converged"]
        self.loss_path_ = state["loss_path"]
        return self


class LogisticRegression(_LogisticBase):
    """Binary logistic regression (binomial family, logit link)."""

    def fit(self, X, y):
        self._check_params()
        X, y = check_training_data(self, X, y)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) > 2:
            raise ValidationError("logistic regression is binary; got more than two classes")
        if len(self.classes_) == 1:
            self._fit_single_class(X)
            return self
        self._fit_binomial(X, y_enc.astype(float))
        return self


class GLMClassifier(_LogisticBase):
    """Logistic GLM: binomial for two classes, multinomial (softmax) beyond."""

    def fit(self, X, y):
        self._check_params()
        X, y = check_training_data(self, X, y)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        K = len(self.classes_)
        if K == 1:
            self._fit_single_class(X)
        elif K == 2:
            self._fit_binomial(X, y_enc.astype(float))
        else:
            a = float(self.alpha)
            Y = np.eye(K)[y_enc]
            theta, path, it, conv = newton(
                lambda th: multinomial_loss_grad(th, X, Y, a),
                lambda th: multinomial_hessian(th, X, K, a),
                np.zeros((X.shape[1] + 1) * K), self.tol, int(self.max_iter),
            )
            T = theta.reshape(X.shape[1] + 1, K)
            self.intercept_ = T[0].copy()
            self.coef_ = T[1:].T.copy()
            self._record(path, it, conv)
        return self
