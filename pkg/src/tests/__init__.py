"""
Tests package
"""

# This file marks `src/tests` as a package so relative test imports resolve consistently.
