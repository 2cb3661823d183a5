"""Public-modulus fault attack on left-to-right RSA exponentiation."""

__version__ = "0.1.0"
