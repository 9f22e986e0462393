"""Sound event detection with dilated convolutional recurrent neural networks."""

__version__ = "0.1.0"
