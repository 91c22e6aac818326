"""
Domain types shared by the problem, spectral, Monte Carlo and verification modules.
"""
