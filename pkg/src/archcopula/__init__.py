"""Parametric estimation of Archimedean copulas in high dimensions."""
