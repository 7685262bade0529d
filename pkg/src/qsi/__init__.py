"""Simulation and analysis toolkit for decoy-state BB84 secured ghost imaging."""

__version__ = "0.1.0"
