"""Stock-day insider communication networks under price stress."""

__version__ = "0.1.0"
