"""
Paper PUF toolkit: norm-map simulation, verification and attacks.
"""

__version__ = "1.0.0"
