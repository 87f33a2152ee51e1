"""Space-filling-curve network-on-interposer design-space exploration."""

__version__ = "0.1.0"
