"""Exception types shared across the simulator."""


class VoxsimError(Exception):
    """Base class for all simulator errors."""


class DuplicateVoxel(VoxsimError):
    """A coordinate list contains the same voxel twice."""


class UnsupportedSymmetry(VoxsimError):
    """Half-kernel enumeration requested for a kernel without a center."""


class UnsupportedVariant(VoxsimError):
    """A search method was invoked with a convolution variant it cannot handle."""


class TableMismatch(VoxsimError):
    """A depth-encoding table does not describe the given coordinate stream."""


class InvalidPartition(VoxsimError):
    """A block partition does not fit the grid."""


class ShapeError(VoxsimError):
    """Feature/weight channel counts are inconsistent."""


class MapIndexError(VoxsimError):
    """An in-out map entry references a voxel index that does not exist."""


class OracleScaleError(VoxsimError):
    """The dense verification path was asked to densify an oversized grid."""


class CapacityError(VoxsimError):
    """A weight layout does not fit the memory-array geometry.

    Carries ``deficit``: how many cells (or PE slots) are missing.
    """

    def __init__(self, message, deficit=0):
        super().__init__(message)
        self.deficit = deficit


class BudgetError(VoxsimError):
    """Copy budget too small to place every active weight once."""


class ConfigError(VoxsimError):
    """A run configuration is malformed or references unknown names."""


class EmptySceneWarning(UserWarning):
    """Scene parameters produce an expected occupancy below one voxel."""
