"""Multi-view cross-ratio gaze estimation simulator."""

__version__ = "0.1.0"
