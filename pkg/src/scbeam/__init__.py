"""Chance-constrained coordinated beamforming by stochastic DC programming."""
__version__ = "0.1.0"
