"""
stablefield - synthesis and regularity checks for harmonizable stable random fields.
"""

__version__ = '0.1.0'
