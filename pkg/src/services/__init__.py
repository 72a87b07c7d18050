"""Service layer orchestrating simulation, separation and evaluation."""
