"""Spectral subspace sparsification of weighted graphs."""
