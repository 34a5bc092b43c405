"""Teleoperation sandbox for a ceiling-mounted tip-everting vine robot."""

__version__ = "0.1.0"
