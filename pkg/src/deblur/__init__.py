"""Self-supervised blind image deblurring with an overspecified kernel size."""

__version__ = "0.1.0"
