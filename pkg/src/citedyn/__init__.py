"""Citation-dynamics toolkit: histories, shape classes, model fits and forecast errors."""

from .citation_data import CitationHistory, build_histories, filter_sample, ingest
from .clustering import class_statistics, kmeans_cluster, make_shapes, top_decile_odds
from .evaluation import binned_scatter, mape, pw_distribution, weighted_ks
from .fitting import FitConfig, FitResult, fit_cohort, fit_model, predict
from .models import (
    ArimaParams,
    NaiveParams,
    SirParams,
    WsbParams,
    naive_counts,
    sir_counts,
    sir_integrate,
    wsb_counts,
)
from .arima import arima_fit_forecast

__version__ = "0.1.0"
