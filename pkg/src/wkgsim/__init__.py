"""Radial wave / Klein-Gordon solver with hyperboloidal diagnostics."""

__version__ = "0.1.0"
