#!/usr/bin/env python3
"""
Binary cache of assembled Green matrices.

File layout (little-endian):

    header   magic b"GRNK", version u32, dim u32, s f64, variant u8,
             key 32 bytes, N u64
    entries  N*N f64, row-major
    diag     N f64 polar diagonal corrections

The key is sha256(grid hash + diagonal mode), so a hit requires the same
grid, rule version and diagonal treatment. Any header mismatch or short
file is logged and the matrix is rebuilt.

Usage:
    from kernel_cache import KernelCache
    cache = KernelCache("cache")
    matrix = cache.get_or_assemble(kernel, grid)
"""

import hashlib
import os
import struct
import tempfile
from typing import Optional

import numpy as np

from errors import CacheMismatchError
from green_kernel import GreenKernel
from green_operator import GreenMatrix, assemble
from logging_utils import setup_logging

MAGIC = b"GRNK"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIIdB32sQ")


def cache_key(grid_hash: bytes, diagonal: str) -> bytes:
    return hashlib.sha256(grid_hash + diagonal.encode("ascii")).digest()


class KernelCache:
    """
    Directory of cached Green matrices, one file per (kernel, grid, diagonal).

    Args:
        cache_dir: Directory holding *.grnk files (created on demand)
        logger: Optional logger; defaults to logs/kernel_cache.log
    """

    def __init__(self, cache_dir: str, logger=None):
        self.cache_dir = cache_dir
        self.logger = logger or setup_logging("logs/kernel_cache.log", __name__)
        self.stats = {"hits": 0, "misses": 0, "rebuilds": 0, "writes": 0}

    def path_for(self, kernel: GreenKernel, grid, diagonal: str = "balanced") -> str:
        name = "green_n{}_s{}_{}_{}.grnk".format(
            kernel.dim,
            format(kernel.order_s, ".6g"),
            kernel.variant.value,
            cache_key(grid.grid_hash, diagonal).hex()[:16],
        )
        return os.path.join(self.cache_dir, name)

    def _header(self, kernel: GreenKernel, grid, diagonal: str) -> bytes:
        return HEADER.pack(
            MAGIC,
            FORMAT_VERSION,
            kernel.dim,
            kernel.order_s,
            kernel.variant.code,
            cache_key(grid.grid_hash, diagonal),
            grid.size,
        )

    def read(self, path: str, kernel: GreenKernel, grid, diagonal: str = "balanced") -> GreenMatrix:
        """
        Read one cache file.

        Raises:
            CacheMismatchError: If the header differs from the request or
                the file is truncated
        """
        expected = self._header(kernel, grid, diagonal)
        size = grid.size
        with open(path, "rb") as handle:
            header = handle.read(HEADER.size)
            if header != expected:
                found = HEADER.unpack(header) if len(header) == HEADER.size else None
                raise CacheMismatchError(f"cache header of {path} does not match: {found}")
            entries = np.fromfile(handle, dtype="<f8", count=size * size)
            diag = np.fromfile(handle, dtype="<f8", count=size)
        if entries.size != size * size or diag.size != size:
            raise CacheMismatchError(f"cache file {path} is truncated")
        return GreenMatrix(
            grid, kernel, entries.reshape(size, size).astype(float), diag.astype(float), diagonal
        )

    def load(self, kernel: GreenKernel, grid, diagonal: str = "balanced") -> Optional[GreenMatrix]:
        """Cached matrix, or None when absent or mismatched."""
        path = self.path_for(kernel, grid, diagonal)
        if not os.path.exists(path):
            self.stats["misses"] += 1
            return None
        try:
            matrix = self.read(path, kernel, grid, diagonal)
        except CacheMismatchError as e:
            self.logger.warning(f"Rebuilding kernel cache: {e}")
            self.stats["rebuilds"] += 1
            return None
        self.stats["hits"] += 1
        self.logger.info(f"Loaded Green matrix from {path}")
        return matrix

    def store(self, matrix: GreenMatrix) -> str:
        """Write matrix atomically; returns the file path."""
        os.makedirs(self.cache_dir, exist_ok=True)
        path = self.path_for(matrix.kernel, matrix.grid, matrix.diagonal_mode)
        fd, temp_path = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(self._header(matrix.kernel, matrix.grid, matrix.diagonal_mode))
                handle.write(np.ascontiguousarray(matrix.entries, dtype="<f8").tobytes())
                handle.write(np.ascontiguousarray(matrix.diag_correction, dtype="<f8").tobytes())
            os.replace(temp_path, path)
        except OSError:
            if os.path.exists(temp_path):
                os.remove(temp_path)
            raise
        self.stats["writes"] += 1
        self.logger.info(f"Stored {matrix.size} x {matrix.size} Green matrix at {path}")
        return path

    def get_or_assemble(
        self,
        kernel: GreenKernel,
        grid,
        diagonal: str = "balanced",
        workers: Optional[int] = None,
    ) -> GreenMatrix:
        matrix = self.load(kernel, grid, diagonal)
        if matrix is None:
            matrix = assemble(kernel, grid, diagonal=diagonal, workers=workers)
            self.store(matrix)
        return matrix

