"""Deterministic L2-regularized logistic regression.

Full-batch Newton updates with step halving: no stochastic optimizer, no
randomness, so refitting on the same data is byte-for-byte reproducible.
The small default penalty keeps separable inputs from driving weights to
infinity. Features are standardized internally for conditioning; fitted
weights are reported in the original feature scale.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_binary_labels, check_feature_count, check_matrix
from .errors import ArgumentError


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LogisticRegression(BaseEstimator):
    """Binary logistic regression trained to a gradient-norm tolerance."""

    def __init__(self, l2: float = 1e-4, tol: float = 1e-8, max_iter: int = 100):
        self.l2 = l2
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X = check_matrix(X)
        y = check_binary_labels(y, X.shape[0]).astype(np.float64)
        if np.unique(y).size < 2:
            raise ArgumentError("logistic regression needs both classes present")
        n, d = X.shape

        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0.0] = 1.0
        Z = (X - mean) / scale

        w = np.zeros(d)
        b = 0.0
        lam = float(self.l2)

        def loss_grad(w, b):
            z = Z @ w + b
            p = _sigmoid(z)
            eps = 1e-12
            nll = -(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)).sum()
            loss = nll + 0.5 * lam * (w @ w)
            resid = p - y
            grad_w = Z.T @ resid + lam * w
            grad_b = resid.sum()
            return loss, grad_w, grad_b, p

        loss, grad_w, grad_b, p = loss_grad(w, b)
        self.converged_ = False
        for _ in range(self.max_iter):
            gnorm = float(np.sqrt(grad_w @ grad_w + grad_b * grad_b))
            if gnorm <= self.tol:
                self.converged_ = True
                break
            r = p * (1.0 - p)
            # Newton system over [w, b]; ridge on weights only
            H = np.empty((d + 1, d + 1))
            ZR = Z * r[:, None]
            H[:d, :d] = Z.T @ ZR + lam * np.eye(d)
            H[:d, d] = ZR.sum(axis=0)
            H[d, :d] = H[:d, d]
            H[d, d] = r.sum() + 1e-12
            g = np.append(grad_w, grad_b)
            try:
                step = np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                step = g / (np.abs(H).sum(axis=1).max() + 1.0)
            # halve the step until the penalized loss stops increasing
            scale_step = 1.0
            for _ in range(50):
                w_new = w - scale_step * step[:d]
                b_new = b - scale_step * step[d]
                new_loss, new_gw, new_gb, new_p = loss_grad(w_new, b_new)
                if new_loss <= loss + 1e-12:
                    break
                scale_step *= 0.5
            w, b, loss, grad_w, grad_b, p = w_new, b_new, new_loss, new_gw, new_gb, new_p

        # map back to the raw feature scale
        self.weights_ = w / scale
        self.bias_ = float(b - (w * mean / scale).sum())
        self._mean = mean
        self._scale = scale
        self._w_std = w
        self._b_std = float(b)
        self.feature_count_ = d
        return self

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("LogisticRegression is not fitted")

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_matrix(X)
        check_feature_count(X, self.feature_count_)
        return ((X - self._mean) / self._scale) @ self._w_std + self._b_std

    def predict_proba(self, X) -> np.ndarray:
        """P(class=1) per row."""
        return _sigmoid(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int64)
