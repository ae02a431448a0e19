"""
User interface modules
"""
