"""
Reverse-mode layer contract and finite-difference verification
"""
