class RoughPortfolioError(Exception):
    """Base class for every error raised by rough_portfolio."""
