from .spsnn import SpSNN

__all__ = ['SpSNN']
