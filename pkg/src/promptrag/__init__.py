"""Benchmark harness for RAG prompt templates on small language models."""

__version__ = "0.1.0"
