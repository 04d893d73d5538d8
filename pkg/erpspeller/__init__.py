"""
erpspeller: simulation and analysis of ERP speller copy-spelling sessions.
"""

__version__ = "0.1.0"

import sys

from erpspeller.core.application import run_application

def main():
    """Entry point for the application."""
    sys.exit(run_application())
