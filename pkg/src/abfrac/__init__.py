"""Fractional-in-time nonlocal parabolic toolkit."""
