"""Thermal side-channel hardening toolkit for DVFS multi-core chips."""

__version__ = "0.1.0"
