"""Exposure-length change detection for free-span submarine cables from DAS records.

Pipeline: STFT frequency x distance features -> PLS latent features trained
against exposure length -> per-section one-class SVM anomaly scores.
"""

__version__ = "0.1.0"
