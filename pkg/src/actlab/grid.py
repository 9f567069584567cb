"""Torus lattice helpers.

Cells are addressed row-major: ``cell = row * width + col``. Neighbour
offsets are listed in a fixed canonical order; every "uniformly random
neighbour" choice in the models indexes into the candidates in this order.
"""
import numpy as np
from numba import njit

from .engine import ConfigurationError

# (drow, dcol), row-major order
MOORE = np.array(
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)], dtype=np.int64
)
# north, west, east, south
VON_NEUMANN = np.array([(-1, 0), (0, -1), (0, 1), (1, 0)], dtype=np.int64)


@njit(cache=True)
def wrap(cell, dr, dc, width, height):
    r = (cell // width + dr) % height
    c = (cell % width + dc) % width
    return r * width + c


@njit(cache=True)
def neighbours(cell, offsets, width, height, out):
    for k in range(offsets.shape[0]):
        out[k] = wrap(cell, offsets[k, 0], offsets[k, 1], width, height)


def moore_cells(cell: int, width: int, height: int) -> list[int]:
    out = np.empty(8, dtype=np.int64)
    neighbours(cell, MOORE, width, height, out)
    return out.tolist()


def von_neumann_cells(cell: int, width: int, height: int) -> list[int]:
    out = np.empty(4, dtype=np.int64)
    neighbours(cell, VON_NEUMANN, width, height, out)
    return out.tolist()


def check_dims(width: int, height: int) -> None:
    if width < 3 or height < 3:
        raise ConfigurationError(f"torus must be at least 3x3, got {width}x{height}")
