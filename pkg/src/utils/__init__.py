"""
Utility modules for configuration, logging and artifact output.
"""
