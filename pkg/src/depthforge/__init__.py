"""Two-view reconstruction, learned quality ranking, and relative-depth dataset mining."""

__version__ = "0.1.0"
