"""User-facing printing of solver and sweep results."""
