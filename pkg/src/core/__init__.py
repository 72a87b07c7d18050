"""Core domain entities and interfaces."""

