"""Last passage and first hitting times of linear diffusions to curved boundaries."""

__version__ = "0.1.0"
