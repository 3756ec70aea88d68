"""Autoencoder network-anomaly detection with KernelSHAP-based unsupervised
feature selection."""

from .autoencoder import AEConfig, AEModel, init_model, reconstruction_error, score_batch, train
from .data import CleanDataset, ScalerParams, clean, load_csv, synth_generate
from .evaluation import classify, confusion, metrics, optimal_threshold, roc
from .kmeans import BackgroundSet, kmeans_summarize
from .selection import FeatureRanking, aggregate, top_k
from .shap import ExplainerConfig, ShapExplanation, explain_batch, explain_instance

__version__ = "0.1.0"
