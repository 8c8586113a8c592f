"""watune: desk-scale harness for cooperative Wi-Fi Aware cross-layer
parameter selection (synthetic link model, context-aware reward,
reward-aligned head training, baselines, evaluation matrix)."""

__version__ = "0.1.0"
