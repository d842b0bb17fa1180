"""Contact-aware generative motion modelling and control."""

__version__ = "0.1.0"
