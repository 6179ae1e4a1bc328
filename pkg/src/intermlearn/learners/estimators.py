"""scikit-learn style wrappers around the functional learners.

These are for offline use (notebooks, pipelines, the acceptance checks); the
simulator drives the functional API directly so each learn can be split into
sub-steps.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .features import FeatureSet, extract_features
from .kmeans import KmModel, MinMaxBounds, km_infer, km_learn_step, label_clusters, remap_rows
from .knn import ABNORMAL, KnnModel, knn_anomaly_score, knn_learn


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Map raw sample windows (one per row) to feature vectors.

    Parameters
    ----------
    features : str or FeatureSet
        Preset name (``"air"``, ``"rf"``, ``"vibration"``), a comma-separated
        list such as ``"mean,std,zcr"``, or a :class:`FeatureSet`.
    """

    def __init__(self, features="air"):
        self.features = features

    def _flags(self) -> FeatureSet:
        if isinstance(self.features, FeatureSet):
            return self.features
        return FeatureSet.parse(self.features)

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        self.feature_names_ = self._flags().names()
        return self

    def transform(self, X):
        check_is_fitted(self, "feature_names_")
        X = check_array(X)
        flags = self._flags()
        return np.vstack([extract_features(row, flags) for row in X])

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "feature_names_")
        return np.array(self.feature_names_, dtype=object)


class RunningMinMaxScaler(TransformerMixin, BaseEstimator):
    """Scale each feature onto [-1, 1] from bounds seen so far.

    ``partial_fit`` widens the bounds; ``fit`` resets them first.
    """

    def fit(self, X, y=None):
        for attr in ("bounds_", "n_features_in_"):
            self.__dict__.pop(attr, None)
        return self.partial_fit(X)

    def partial_fit(self, X, y=None):
        X = check_array(X)
        bounds = getattr(self, "bounds_", None) or MinMaxBounds.empty(X.shape[1])
        for row in X:
            bounds = bounds.update(row)
        self.bounds_ = bounds
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "bounds_")
        return self.bounds_.normalize(check_array(X))

    def inverse_transform(self, X):
        check_is_fitted(self, "bounds_")
        return self.bounds_.denormalize(check_array(X))


class KnnAnomalyDetector(ClassifierMixin, BaseEstimator):
    """Online kNN anomaly detector (label 1 = abnormal, 0 = normal).

    Examples are learned one at a time in row order, so with more rows than
    ``capacity`` only the most recent ``capacity`` rows are kept.

    Parameters
    ----------
    n_neighbors : int
    capacity : int
        Size of the learned example store.
    percentile : float
        Percentile of member scores used as the anomaly threshold.
    """

    def __init__(self, n_neighbors=5, capacity=30, percentile=90.0):
        self.n_neighbors = n_neighbors
        self.capacity = capacity
        self.percentile = percentile

    def fit(self, X, y=None):
        X = check_array(X)
        self.model_ = KnnModel.empty(X.shape[1], k=self.n_neighbors, capacity=self.capacity,
                                     percentile=self.percentile)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([0, 1])
        return self.partial_fit(X)

    def partial_fit(self, X, y=None):
        check_is_fitted(self, "model_")
        for row in check_array(X):
            self.model_ = knn_learn(self.model_, row)
        return self

    @property
    def threshold_(self):
        check_is_fitted(self, "model_")
        return self.model_.threshold

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return np.array([knn_anomaly_score(row, self.model_) for row in check_array(X)])

    def predict(self, X):
        if self.threshold_ is None:
            raise ValueError("detector needs more than n_neighbors examples before predicting")
        scores = self.decision_function(X)
        return np.where(scores > self.threshold_, ABNORMAL, 1 - ABNORMAL)


class CompetitiveKMeans(ClusterMixin, BaseEstimator):
    """Winner-take-all online k-means with optional cluster-then-label.

    Inputs pass through running min-max bounds before the network sees them.
    In ``fit(X, y)`` rows with ``y >= 0`` are the labeled subset used to name
    clusters; ``-1`` marks an unlabeled row. ``predict`` returns the 0-based
    cluster index, ``predict_label`` the cluster's label.

    Parameters
    ----------
    n_clusters : int
    eta : float
        Learning rate.
    harmonic : bool
        Use the per-row step ``max(eta, 1/wins)``.
    normalize : bool
        Apply running min-max bounds to the inputs.
    """

    def __init__(self, n_clusters=2, eta=0.05, harmonic=False, normalize=True):
        self.n_clusters = n_clusters
        self.eta = eta
        self.harmonic = harmonic
        self.normalize = normalize

    def fit(self, X, y=None):
        X = check_array(X)
        self.model_ = KmModel.zeros(self.n_clusters, X.shape[1], eta=self.eta, harmonic=self.harmonic)
        self.bounds_ = MinMaxBounds.empty(X.shape[1])
        self.n_features_in_ = X.shape[1]
        return self.partial_fit(X, y)

    def partial_fit(self, X, y=None):
        check_is_fitted(self, "model_")
        X = check_array(X)
        for row in X:
            self._learn_one(row)
        if y is not None:
            y = np.asarray(y).ravel()
            labeled = [(self._scale(x), int(t)) for x, t in zip(X, y) if t >= 0]
            self.model_ = label_clusters(self.model_, labeled)
        return self

    def _scale(self, x):
        return self.bounds_.normalize(x) if self.normalize else np.asarray(x, dtype=float)

    def _learn_one(self, x):
        if self.normalize:
            new = self.bounds_.update(x)
            self.model_ = remap_rows(self.model_, self.bounds_, new)
            self.bounds_ = new
        self.model_ = km_learn_step(self.model_, self._scale(x))

    @property
    def cluster_centers_(self):
        """Winner rows mapped back to raw feature units."""
        check_is_fitted(self, "model_")
        w = self.model_.weights
        return self.bounds_.denormalize(w) if self.normalize else w.copy()

    def transform(self, X):
        """Activations of every cluster row."""
        check_is_fitted(self, "model_")
        Z = np.array([self._scale(x) for x in check_array(X)])
        return Z @ self.model_.weights.T

    def predict(self, X):
        check_is_fitted(self, "model_")
        return np.array([km_infer(self.model_, self._scale(x))[0] - 1 for x in check_array(X)])

    def predict_label(self, X):
        """Cluster label per row, ``-1`` where the cluster has none."""
        check_is_fitted(self, "model_")
        out = []
        for x in check_array(X):
            _, lab = km_infer(self.model_, self._scale(x))
            out.append(-1 if lab is None else lab)
        return np.array(out)
