"""
Core package for erpspeller.
"""
