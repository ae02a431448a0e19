"""
ISIB toolkit - differentiable k-means tokenization with multi-task L1/L2 CTC heads
"""

__version__ = "1.0.0"
__description__ = "Interlanguage speech intelligibility benefit modelling on synthetic accented speech"
