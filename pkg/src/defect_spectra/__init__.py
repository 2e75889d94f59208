"""Forward modeling and analysis of strain-broadened G-center emission."""

__version__ = "0.1.0"
