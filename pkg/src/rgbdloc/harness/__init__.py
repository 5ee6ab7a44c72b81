"""Benchmark harness: configuration, metrics, experiment runner and reports."""
