"""
Verification harness cross-checking spectral predictions against simulation.
"""
