"""Online supervised dimensionality reduction on the Grassmannian."""

__version__ = "0.1.0"
