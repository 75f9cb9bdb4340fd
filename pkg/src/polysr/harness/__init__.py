"""Experiment harness: synthetic sequences, metrics, frame I/O, configuration and CLI."""
