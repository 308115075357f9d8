"""The numerical stages of the pose solver."""
