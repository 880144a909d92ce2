"""Stability sweeps, audits and the command-line runner."""
