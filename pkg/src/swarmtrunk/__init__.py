"""swarmtrunk: coordination engine for large swarms of scripted coding agents."""

__version__ = "0.1.0"
