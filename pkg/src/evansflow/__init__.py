"""Evans-function toolkit for small-amplitude shocks of hyperbolically regularized conservation laws."""

__version__ = "0.1.0"
