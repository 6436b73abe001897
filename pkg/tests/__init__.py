"""
Test package for iqestimation
"""
