"""
Finite-difference spectral analysis of the drift-free Schrödinger operator.
"""
