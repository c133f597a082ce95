"""Zero-shot cross-lingual alignment losses for joint intent/slot models, at desk scale."""

__version__ = "0.1.0"
