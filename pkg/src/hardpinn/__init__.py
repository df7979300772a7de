"""Hard-constraint physics-informed neural networks with extra fields."""

__version__ = "0.1.0"
