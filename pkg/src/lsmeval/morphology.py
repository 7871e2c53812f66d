"""Binary masks over a voxel universe and 3D morphology / blur on them.

All operations evaluate on the dense bounding box of the universe with
cells outside the universe treated as false (0 for the blur), and results
are restricted back to the occupied-voxel universe.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .errors import UniverseMismatchError, ValidationError

BOX_3X3X3 = np.ones((3, 3, 3), dtype=bool)


class BinaryMask:
    """Subset of a voxel universe, stored as flags over its sorted rows."""

    def __init__(self, universe: np.ndarray, flags: np.ndarray):
        flags = np.asarray(flags, dtype=bool)
        if flags.shape != (len(universe),):
            raise ValidationError(
                f"mask flags must have shape ({len(universe)},), got {flags.shape}"
            )
        flags.setflags(write=False)
        self.universe = universe
        self.flags = flags

    @classmethod
    def empty(cls, universe: np.ndarray) -> "BinaryMask":
        return cls(universe, np.zeros(len(universe), dtype=bool))

    @classmethod
    def full(cls, universe: np.ndarray) -> "BinaryMask":
        return cls(universe, np.ones(len(universe), dtype=bool))

    def __len__(self) -> int:
        return len(self.universe)

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    def positive_indices(self) -> np.ndarray:
        return self.universe[self.flags]

    def same_universe(self, other: "BinaryMask") -> bool:
        return self.universe is other.universe or np.array_equal(
            self.universe, other.universe
        )


def require_same_universe(a: BinaryMask, b: BinaryMask) -> None:
    if not a.same_universe(b):
        raise UniverseMismatchError("masks are defined over different voxel universes")


class _DenseFrame:
    """Dense view of a universe's bounding box for morphology kernels."""

    def __init__(self, universe: np.ndarray):
        if len(universe) == 0:
            raise ValidationError("morphology needs a non-empty universe")
        self.origin = universe.min(axis=0).astype(np.int64)
        extents = universe.max(axis=0).astype(np.int64) - self.origin + 1
        self.shape = tuple(int(e) for e in extents)
        self.cells = tuple(
            (universe[:, axis].astype(np.int64) - self.origin[axis])
            for axis in range(3)
        )

    def to_dense(self, values: np.ndarray, dtype) -> np.ndarray:
        dense = np.zeros(self.shape, dtype=dtype)
        dense[self.cells] = values
        return dense

    def from_dense(self, dense: np.ndarray) -> np.ndarray:
        return dense[self.cells]


def binary_dilation(mask: BinaryMask, iterations: int = 1) -> BinaryMask:
    """Dilate with the 3x3x3 box element; result clipped to the universe."""
    if iterations < 0:
        raise ValidationError("iterations must be >= 0")
    if iterations == 0 or mask.count == 0:
        return BinaryMask(mask.universe, mask.flags)
    frame = _DenseFrame(mask.universe)
    dense = frame.to_dense(mask.flags, bool)
    dense = ndimage.binary_dilation(dense, structure=BOX_3X3X3, iterations=iterations)
    return BinaryMask(mask.universe, frame.from_dense(dense))


def binary_erosion(mask: BinaryMask, iterations: int = 1) -> BinaryMask:
    """Erode with the 3x3x3 box element; outside the universe counts false."""
    if iterations < 0:
        raise ValidationError("iterations must be >= 0")
    if iterations == 0 or mask.count == 0:
        return BinaryMask(mask.universe, mask.flags)
    frame = _DenseFrame(mask.universe)
    dense = frame.to_dense(mask.flags, bool)
    dense = ndimage.binary_erosion(
        dense, structure=BOX_3X3X3, iterations=iterations, border_value=0
    )
    return BinaryMask(mask.universe, frame.from_dense(dense))


def binary_closing(mask: BinaryMask, iterations: int = 1) -> BinaryMask:
    """Dilation followed by erosion, applied ``iterations`` times."""
    if iterations < 0:
        raise ValidationError("iterations must be >= 0")
    if iterations == 0 or mask.count == 0:
        return BinaryMask(mask.universe, mask.flags)
    frame = _DenseFrame(mask.universe)
    out = mask
    for _ in range(iterations):
        dense = frame.to_dense(out.flags, bool)
        dense = ndimage.binary_dilation(dense, structure=BOX_3X3X3)
        dense = ndimage.binary_erosion(dense, structure=BOX_3X3X3, border_value=0)
        out = BinaryMask(out.universe, frame.from_dense(dense))
    return out


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Sampled Gaussian, radius ceil(3*sigma), renormalized to sum 1."""
    if sigma <= 0:
        return np.array([1.0])
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return kernel / kernel.sum()


def gaussian_blur(mask: BinaryMask, sigma: float) -> np.ndarray:
    """Blur the mask's indicator; returns floats over the universe rows.

    Separable convolution over the universe bounding box with zero padding,
    so isolated positives are attenuated and interior regions stay at 1.
    """
    if sigma < 0:
        raise ValidationError("blur sigma must be >= 0")
    indicator = mask.flags.astype(np.float64)
    if sigma == 0:
        return indicator
    frame = _DenseFrame(mask.universe)
    dense = frame.to_dense(indicator, np.float64)
    kernel = gaussian_kernel_1d(sigma)
    for axis in range(3):
        dense = ndimage.convolve1d(dense, kernel, axis=axis, mode="constant", cval=0.0)
    return frame.from_dense(dense)
