"""
CTC, the two-headed model, training and inference
"""
