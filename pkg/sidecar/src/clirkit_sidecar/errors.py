"""Error hierarchy, mirroring the engine's three-way split so the CLI can
map failures to the same exit codes."""


class SidecarError(Exception):
    """Base class; internal failures raise this directly."""


class UsageError(SidecarError):
    """The caller violated a contract (bad argument, missing input)."""


class DataError(SidecarError):
    """An input file exists but its content is invalid."""
