"""Cross-type multilevel attention for speech-based depression detection, with
an EEG spectral-perturbation validation pipeline."""

__version__ = "0.1.0"
