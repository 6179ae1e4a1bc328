from .estimators import CompetitiveKMeans, FeatureExtractor, KnnAnomalyDetector, RunningMinMaxScaler
from .features import FEATURE_ORDER, PRESETS, FeatureSet, extract_features
from .kmeans import KmModel, MinMaxBounds, km_activation, km_infer, km_learn_step, label_clusters, remap_rows
from .knn import ABNORMAL, NORMAL, KnnModel, feature_distance, knn_anomaly_score, knn_infer, knn_learn, nearest_rank

__all__ = [
    "ABNORMAL", "NORMAL", "FEATURE_ORDER", "PRESETS",
    "CompetitiveKMeans", "FeatureExtractor", "FeatureSet", "KmModel", "KnnAnomalyDetector", "KnnModel",
    "MinMaxBounds", "RunningMinMaxScaler",
    "extract_features", "feature_distance", "km_activation", "km_infer", "km_learn_step",
    "knn_anomaly_score", "knn_infer", "knn_learn", "label_clusters", "nearest_rank", "remap_rows",
]
