"""Monte-Carlo tree search with exponential-weight bandits for phantom games."""

__version__ = "0.1.0"
