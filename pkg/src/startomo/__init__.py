"""Star transform tools: forward models, singular-direction analysis and inversion."""

__version__ = "0.1.0"
