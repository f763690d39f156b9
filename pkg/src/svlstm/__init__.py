"""Hybrid stochastic-volatility / LSTM volatility forecasting toolkit."""

__version__ = "0.1.0"
