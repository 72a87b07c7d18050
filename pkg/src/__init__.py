"""ReTM speaker separation - main package."""
