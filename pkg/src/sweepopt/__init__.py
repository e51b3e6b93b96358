"""Sweeping-process optimal control with free final time: simulation, search and multiplier checks."""

__version__ = "0.1.0"
