"""Gradient-boosted trees with native missing values, exact Tree SHAP, and the
preprocessing-vs-raw ablation harness for myocardial infarction mortality."""

__version__ = "0.1.0"
