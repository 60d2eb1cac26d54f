"""Pick-or-Mix dynamic channel sampling with analytic cost models and a desk-scale trainer."""

__version__ = "0.1.0"
