"""
Error metrics, report tables and experiment drivers
"""
