"""Dynamic-graph detector for coordinated spoofing in transaction streams."""

__version__ = "0.1.0"
