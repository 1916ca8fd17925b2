"""Bitcoin implied-volatility index (VXBT), alternative-data signals and
direction classification with gradient boosting."""

__version__ = "0.1.0"
