"""Multi-scale semantics-guided network for skeleton-based action recognition."""

__version__ = "0.1.0"
