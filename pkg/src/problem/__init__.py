"""
Model definition checks: effective potential, standing assumptions and bound functions.
"""
