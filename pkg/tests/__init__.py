"""Tests for the bd_cutoff package."""
