"""
Particle simulation of the branching diffusion and Feynman-Kac path estimators.
"""
