"""Local alignment under concave gap penalties and its large-deviation statistics."""

__version__ = "0.1.0"
