"""Offline uplift estimators scored on a holdout set"""
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.linear_model import LogisticRegression

from .errors import FitError, ModelStateError
from .models import EstimatorKind, ForestParams
from .uplift_baseline import UpliftData, UpliftForest, fit_forest


class TwoModelEstimator:
    """Separate response models per arm; uplift is the difference of their probabilities"""

    def __init__(self, base_model: Optional[BaseEstimator] = None):
        self.base_model = base_model if base_model is not None else LogisticRegression(max_iter=1000)
        self.model_0 = None
        self.model_1 = None

    def fit(self, X: np.ndarray, arm: np.ndarray, y: np.ndarray) -> "TwoModelEstimator":
        X, arm, y = np.asarray(X), np.asarray(arm), np.asarray(y)
        for value in (0, 1):
            if len(np.unique(y[arm == value])) < 2:
                raise FitError(f"arm {value} needs both responders and non-responders")
        self.model_0 = clone(self.base_model).fit(X[arm == 0], y[arm == 0])
        self.model_1 = clone(self.base_model).fit(X[arm == 1], y[arm == 1])
        return self

    def predict_uplift(self, X: np.ndarray) -> np.ndarray:
        if self.model_0 is None or self.model_1 is None:
            raise ModelStateError("two-model estimator is not fitted")
        return self.model_1.predict_proba(X)[:, 1] - self.model_0.predict_proba(X)[:, 1]


class ForestEstimator:
    def __init__(self, params: Optional[ForestParams] = None, seed: int = 0):
        self.params = params or ForestParams()
        self.seed = seed
        self.forest: Optional[UpliftForest] = None

    def fit(self, X: np.ndarray, arm: np.ndarray, y: np.ndarray) -> "ForestEstimator":
        self.forest = fit_forest(UpliftData.from_arrays(X, arm, y), params=self.params, seed=self.seed)
        return self

    def predict_uplift(self, X: np.ndarray) -> np.ndarray:
        if self.forest is None:
            raise ModelStateError("uplift forest is not fitted")
        return self.forest.predict(np.asarray(X, dtype=np.float64))


def make_estimator(kind: EstimatorKind, params: Optional[ForestParams] = None, seed: int = 0):
    if EstimatorKind(kind) == EstimatorKind.TWO_MODEL:
        return TwoModelEstimator()
    return ForestEstimator(params, seed)
