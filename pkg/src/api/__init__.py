"""
Pipeline facade combining the problem, spectral and Monte Carlo modules.
"""
