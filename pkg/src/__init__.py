"""Top-level package initialization."""
