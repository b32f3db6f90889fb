"""Downlink FBMC-OQAM massive MIMO with fractionally spaced prefiltering."""

__version__ = "0.1.0"
