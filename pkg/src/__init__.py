from src import config  # noqa: F401

__version__ = '0.1.0'
