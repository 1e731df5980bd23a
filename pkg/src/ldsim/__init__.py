"""Read-write Linked Data simulation of a smart building with agent benchmarking."""

__version__ = "0.1.0"
