"""Exception hierarchy shared across the toolkit.

Every error raised on purpose derives from TapsCountError so the CLI can
map failure categories to exit codes (see cli.EXIT_CODES).
"""


class TapsCountError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(TapsCountError):
    """Invalid or inconsistent run configuration."""


class PlacementInfeasibleError(TapsCountError):
    """Requested more taps than the delay grid can hold collision-free."""


class GridLengthError(TapsCountError):
    """A tap delay falls outside the requested impulse-response grid."""


class ShapeMismatchError(TapsCountError):
    """Array shapes disagree with a layer, checkpoint or dataset contract."""


class DivergenceError(TapsCountError):
    """An iterative solver blew up (iterate norm above the divergence bound)."""


class ZeroEnergyError(TapsCountError):
    """An observation with no energy was handed to an identifier."""


class FileFormatError(TapsCountError):
    """Dataset or checkpoint file is corrupt: bad magic, bad version, truncated."""
