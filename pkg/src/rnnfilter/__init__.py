"""Small recurrent networks as noise filters for periodic time series."""

__version__ = "0.1.0"
