"""Controllable, longitudinal chest X-ray report generation: data tooling and evaluation."""

__version__ = "0.1.0"
