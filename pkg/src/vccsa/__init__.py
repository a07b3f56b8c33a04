"""Video-aware comment sentiment analysis: model, data tools and experiment harness."""

__version__ = "0.1.0"
