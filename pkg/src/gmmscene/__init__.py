"""GMM soft-count and MAP-supervector embeddings with kernel SVMs for
acoustic scene classification and one-second-segment sound event detection."""

__version__ = "0.1.0"
