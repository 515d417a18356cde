from .bundle import (
    Predictor,
    SurrogateBundle,
    ensemble_variance,
    load,
    persist,
    predict,
    train_select,
)
from .models import (
    ForestClassifier,
    ForestRegressor,
    GradientBoostedClassifier,
    GradientBoostedRegressor,
    RidgeClassifier,
    RidgeRegressor,
)

__all__ = [
    "Predictor",
    "SurrogateBundle",
    "train_select",
    "predict",
    "ensemble_variance",
    "persist",
    "load",
    "ForestRegressor",
    "ForestClassifier",
    "GradientBoostedRegressor",
    "GradientBoostedClassifier",
    "RidgeRegressor",
    "RidgeClassifier",
]
