"""sourcerank: recommend information sources for news topics from their quotes."""

__version__ = "0.1.0"
