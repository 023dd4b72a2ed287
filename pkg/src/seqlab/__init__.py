"""Configuration-driven neural sequence labeling and sentence classification."""

__version__ = "0.1.0"
