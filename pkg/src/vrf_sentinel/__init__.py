"""Voter-file change monitoring: snapshot diffing, modification matrices,
anomaly ranking, sparse-noise evaluation, and maintenance-event labeling."""

__version__ = "0.1.0"
