"""Mining latency degradation patterns from distributed traces."""

__version__ = "0.1.0"
