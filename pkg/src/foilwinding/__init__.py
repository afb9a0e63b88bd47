"""Frequency-domain simulation of foil windings with homogenized capacitive effects."""

__version__ = "0.1.0"
