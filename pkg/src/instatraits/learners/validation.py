import numpy as np
from sklearn.utils.validation import check_array, check_X_y

from ..errors import ValidationError


def check_training_data(estimator, X, y):
    X, y = check_X_y(X, y, dtype=np.float64, order="C")
    estimator.n_features_in_ = X.shape[1]
    return X, y


def check_features(estimator, X):
    X = check_array(X, dtype=np.float64, order="C")
    if X.shape[1] != estimator.n_features_in_:
        raise ValidationError(f"expected {estimator.n_features_in_} features, got {X.shape[1]}")
    return X
