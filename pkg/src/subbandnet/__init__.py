"""Low-precision CNN training on Laplacian/Gaussian subbands with softmax fusion."""

__version__ = "0.1.0"
