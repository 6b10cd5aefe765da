"""Transparent-obstacle perception and navigation over multi-layer lidar intensity grids."""

from topgn.main import main

__all__ = ["main"]
