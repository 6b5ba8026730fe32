"""Cold-start seller-product recommendation with weighted-average graph convolution."""

__version__ = "0.1.0"
