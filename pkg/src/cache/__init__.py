"""
Cache modules for reusing expensive spectral computations.
"""
