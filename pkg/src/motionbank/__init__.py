"""Action-conditioned stochastic motion prediction with retrieval memory banks."""

__version__ = "0.1.0"
