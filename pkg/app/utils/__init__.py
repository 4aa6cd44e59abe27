"""
Utility functions for validation and file output
"""
