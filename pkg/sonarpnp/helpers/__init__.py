"""Cross-cutting helpers used throughout the package."""
