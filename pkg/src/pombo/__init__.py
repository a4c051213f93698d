"""Thompson sampling over large discrete domains via a trainable policy for the probability of maximality."""

__version__ = "0.1.0"
