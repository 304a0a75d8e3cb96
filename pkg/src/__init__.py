"""STFNN - Spatio-temporal field inference from station networks."""

__version__ = "0.1.0"
