"""Exceptions raised by voxreg. Every error carries a machine-readable kind."""


class VoxregError(Exception):
    """Base class for all toolkit errors."""
    kind = 'error'

    def record(self):
        """Machine-readable summary used by the command line."""
        rec = {'error': self.kind, 'message': str(self)}
        for attr in ('field', 'voxel', 'block', 'index', 'sweep'):
            value = getattr(self, attr, None)
            if value is not None:
                rec[attr] = value
        return rec


class ValidationError(VoxregError, ValueError):
    """Bad input: config, manifest, parameters. Exit code 1."""
    kind = 'validation'


class InvalidParameterError(ValidationError):
    kind = 'invalid-parameter'


class ConfigError(ValidationError):
    kind = 'config'

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ManifestError(ConfigError):
    kind = 'manifest'


class DatasetError(ValidationError):
    kind = 'dataset'


class InvalidFoldsError(ValidationError):
    kind = 'invalid-folds'


class InsufficientHistoryError(ValidationError):
    kind = 'insufficient-history'


class InsufficientDataError(ValidationError):
    kind = 'insufficient-data'


class OutOfRangeError(ValidationError, IndexError):
    kind = 'out-of-range'


class SingularDesignError(VoxregError):
    """X'X cannot be inverted; regularize instead."""
    kind = 'singular-design'


class SingularSystemError(VoxregError):
    kind = 'singular-system'


class DegenerateGcvError(VoxregError):
    """Every grid point interpolates the data (tr(H) = T)."""
    kind = 'degenerate-gcv'

    def __init__(self, message, voxel=None):
        super().__init__(message)
        self.voxel = voxel


class NoConvergenceError(VoxregError):
    kind = 'no-convergence'

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class NumericalBlowupError(VoxregError):
    kind = 'numerical-blowup'

    def __init__(self, message, block=None, index=None, sweep=None):
        super().__init__(message)
        self.block = block
        self.index = index
        self.sweep = sweep
