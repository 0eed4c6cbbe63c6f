"""Transfer operators, linear response and Hoelder-breakdown experiments for skew products."""
__version__ = "0.1.0"
