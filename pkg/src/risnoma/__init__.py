"""RIS-assisted NOMA multi-robot trajectory simulator and learning toolkit."""

__version__ = "0.1.0"
