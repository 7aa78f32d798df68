"""Test package for fwformer."""
