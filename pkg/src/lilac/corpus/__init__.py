"""Shipped IR fixtures, data files and the example specification."""
