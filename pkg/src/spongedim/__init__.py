"""Dimension of self-affine sponges via Bernoulli measures."""
