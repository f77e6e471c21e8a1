"""Exact algebra of graph complexes, Lie-type operads and Atiyah-class weights."""

__version__ = "0.1.0"
