"""
On-disk formats for checkpoints, corpora and reports
"""
