"""
Two-atom photon coalescence simulation package
"""

__version__ = "0.1.0"
