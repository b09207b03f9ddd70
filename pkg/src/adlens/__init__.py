"""adlens: engagement scoring, debiasing, and tuning for promotional images."""

__version__ = "0.1.0"
