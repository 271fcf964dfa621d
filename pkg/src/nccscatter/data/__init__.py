"""Shipped parameter files."""
