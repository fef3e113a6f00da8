"""Norm construction, evaluation and drift functionals."""
