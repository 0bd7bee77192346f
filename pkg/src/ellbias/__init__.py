"""Top-level package wiring (filled in as modules land)."""
