"""Tests for the cone-energy laboratory."""
