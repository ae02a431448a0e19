"""
Synthetic languages, accents and corpora
"""
