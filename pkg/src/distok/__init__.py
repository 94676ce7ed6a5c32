"""Distribution-conditional creative token generation with a synthetic,
fully checkable semantic oracle."""

__version__ = "0.1.0"
