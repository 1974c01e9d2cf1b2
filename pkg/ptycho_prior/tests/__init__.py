"""Test cases for the ptycho_prior app."""
