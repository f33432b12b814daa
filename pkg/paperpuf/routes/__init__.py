"""
Routes package for the verification server
"""
from paperpuf.routes import templates, verify

__all__ = ["templates", "verify"]
