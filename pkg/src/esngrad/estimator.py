"""scikit-learn wrapper around the training loop.

Rows of ``X`` are consecutive frames of one stream, so row order matters and
shuffling splitters will destroy the temporal structure the model relies on.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dataio import FrameDataset
from .reservoir import EsnConfig, init_network
from .trainer import LearnMode, fit, predict_scores


class EchoStateClassifier(ClassifierMixin, BaseEstimator):
    """Frame classifier: sigmoid reservoir plus ridge readout on ``[h; x]``.

    ``mode`` picks what is trained beyond the readout: ``"fixed"``,
    ``"learn-w"`` (input weights) or ``"learn-w-wrec"`` (input and recurrent
    weights). ``validation_fraction`` holds out the tail of the stream for
    choosing the best epoch; with 0 the last epoch is kept.
    """

    def __init__(self, hidden_dim=100, mode="learn-w-wrec", epochs=20, bptt_depth=1, lam=3.9,
                 mu=1e-8, alpha=0.07, washout=50, density=0.02, input_scale=0.1,
                 clip_threshold=10.0, validation_fraction=0.0, random_state=0):
        self.hidden_dim = hidden_dim
        self.mode = mode
        self.epochs = epochs
        self.bptt_depth = bptt_depth
        self.lam = lam
        self.mu = mu
        self.alpha = alpha
        self.washout = washout
        self.density = density
        self.input_scale = input_scale
        self.clip_threshold = clip_threshold
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _config(self, n_features, n_classes):
        return EsnConfig(
            input_dim=n_features, hidden_dim=self.hidden_dim, output_dim=n_classes, lam=self.lam,
            mu=self.mu, alpha=self.alpha, bptt_depth=self.bptt_depth, washout=self.washout,
            density=self.density, input_scale=self.input_scale,
            clip_threshold=self.clip_threshold, seed=self.random_state,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("need at least two classes")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")
        mode = LearnMode.parse(self.mode)
        self.n_features_in_ = X.shape[1]
        cfg = self._config(self.n_features_in_, self.classes_.size)

        n_valid = int(round(self.validation_fraction * len(y)))
        cut = len(y) - n_valid
        if cut <= cfg.washout:
            raise ValueError(f"need more than washout={cfg.washout} training rows, got {cut}")
        train = FrameDataset(X[:cut].T, codes[:cut], self.classes_.size)
        valid = FrameDataset(X[cut:].T, codes[cut:], self.classes_.size) if n_valid else None
        self.params_, self.report_ = fit(init_network(cfg), train, valid, cfg, mode, epochs=self.epochs)
        return self

    def decision_function(self, X):
        """Readout scores, one column per class."""
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, the model was fitted with {self.n_features_in_}")
        return predict_scores(self.params_, X.T).T

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]
