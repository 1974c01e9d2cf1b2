"""Regularized ptychographic reconstruction as a reusable Django app."""
