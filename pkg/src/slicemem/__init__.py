"""Ontology-scoped shared semantic memory: simulator, trace checkers and benchmarks."""

__version__ = "0.1.0"
