"""L2-regularized logistic regression ranker.

The objective is 0.5*||w||^2 + C * sum_i log(1 + exp(-y_i * (x_i.w + b)))
with y in {-1, +1}; the bias is unregularized. Optimization starts from the
zero vector and stops when the gradient max-norm drops below ``tol`` or after
``max_iter`` iterations, so training is deterministic for fixed inputs.
Training succeeds even when only one class is present: the regularizer
anchors the weights, which matters in early review rounds that have found
only positives.
"""

from __future__ import annotations

import numpy as np
import scipy.optimize
import scipy.sparse as sp
from scipy.special import expit

from ..dataset import Corpus
from ..errors import NotTrainedError
from .base import Component, Role

__all__ = ["logistic_objective", "LogisticRegressionRanker"]


def logistic_objective(wb: np.ndarray, X, y_pm: np.ndarray, c: float) -> tuple[float, np.ndarray]:
    """Loss and gradient at ``wb`` = [w..., b] for labels ``y_pm`` in {-1,+1}."""
    w, b = wb[:-1], wb[-1]
    z = X @ w + b
    t = -y_pm * z
    loss = 0.5 * float(w @ w) + c * float(np.logaddexp(0.0, t).sum())
    # d/dz of log(1+exp(-y z)) is -y * sigmoid(-y z)
    dz = -y_pm * expit(t)
    grad_w = w + c * (X.T @ dz)
    grad_b = c * float(dz.sum())
    return loss, np.concatenate([np.asarray(grad_w).ravel(), [grad_b]])


class LogisticRegressionRanker(Component):
    """Scores documents with a logistic model trained on the labeled set."""

    roles = frozenset({Role.RANKER})
    name = "logreg"

    def __init__(self, c: float = 1.0, tol: float = 1e-6, max_iter: int = 1000):
        self.c = float(c)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.weights_: np.ndarray | None = None
        self.bias_: float | None = None

    @property
    def trained(self) -> bool:
        return self.weights_ is not None

    def fit(self, X, y) -> "LogisticRegressionRanker":
        """Train on labeled rows; ``y`` is boolean."""
        X = sp.csr_matrix(X, dtype=np.float64) if sp.issparse(X) else np.asarray(X, dtype=np.float64)
        if X.shape[0] < 1:
            raise ValueError("at least one labeled example required")
        data = X.data if sp.issparse(X) else X
        if not np.all(np.isfinite(data)):
            raise ValueError("non-finite feature values")
        y_pm = np.where(np.asarray(y, dtype=bool), 1.0, -1.0)
        if y_pm.shape[0] != X.shape[0]:
            raise ValueError("X and y must align")

        x0 = np.zeros(X.shape[1] + 1)
        result = scipy.optimize.minimize(
            logistic_objective,
            x0,
            args=(X, y_pm, self.c),
            jac=True,
            method="L-BFGS-B",
            options={"gtol": self.tol, "ftol": 1e-15, "maxiter": self.max_iter},
        )
        self.weights_ = result.x[:-1]
        self.bias_ = float(result.x[-1])
        return self

    def score(self, X) -> np.ndarray:
        """Per-row probability-of-relevance scores, each in (0, 1)."""
        if not self.trained:
            raise NotTrainedError("ranker has not been trained")
        return expit(X @ self.weights_ + self.bias_)

    def score_all(self, corpus: Corpus) -> np.ndarray:
        """Scores aligned with corpus doc order."""
        return self.score(corpus.features)

    def get_params(self) -> dict:
        return {"c": self.c, "tol": self.tol, "max_iter": self.max_iter}
