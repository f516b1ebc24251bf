"""Tests for spraygeom."""
