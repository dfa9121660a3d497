"""
Spectral density implementations.
"""
