"""Project initialization."""
