"""Audiovisual emotion-recognition heads over precomputed per-frame and
per-clip features: frame selection, temporal pooling, audio classifiers, late
fusion, seed ensembles, and small-validation-set model selection."""

__version__ = "0.1.0"
