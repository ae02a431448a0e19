"""
Core modules: configuration, logging, errors and seeded randomness
"""
