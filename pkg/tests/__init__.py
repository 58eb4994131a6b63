"""Tests for the CMC toolkit."""
