"""Bernstein and parametric vine copulas with GARCH margins, Monte-Carlo VaR and backtests."""

__version__ = "0.1.0"
