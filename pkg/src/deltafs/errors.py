"""Exception hierarchy shared by every layer of the simulator."""


class DeltaFSError(Exception):
    """Base class for all simulator errors."""


# block device
class DeviceFull(DeltaFSError):
    pass


class InvalidRead(DeltaFSError):
    pass


class InvalidState(DeltaFSError):
    pass


class NothingToClean(DeltaFSError):
    pass


class ImageFormatError(DeltaFSError):
    pass


# page cache
class CachePressure(DeltaFSError):
    pass


# codec
class CorruptDelta(DeltaFSError):
    pass


# inline area
class OversizeDelta(DeltaFSError):
    pass


class CorruptInode(DeltaFSError):
    pass


# main-area delta maintenance
class CorruptMapping(DeltaFSError):
    pass


class MetaFull(DeltaFSError):
    pass


# hotness
class EmptyInput(DeltaFSError):
    pass


# file system facade
class Exists(DeltaFSError):
    pass


class NotFound(DeltaFSError):
    pass


class OutOfRange(DeltaFSError):
    pass


class FileTooLarge(DeltaFSError):
    pass


# harness
class TraceParse(DeltaFSError):
    def __init__(self, lineno, msg):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno
