"""
k-means initialisation and the differentiable k-means bottleneck
"""
