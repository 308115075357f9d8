"""Simulated scenes, noise, error metrics and benchmark sweeps."""
