"""Log-structured file system simulator with delta-compressed page updates."""

from .codec import DEFAULT_CODEC, ZeroRunCodec, ZlibCodec, delta_apply, delta_encode, recover_base
from .device import BlockDevice
from .fs import DeltaFS, FileHandle, FSConfig, WriteOutcome
from .hotness import Hcluster, HotnessClass
from .inline import InodeImage, LatencyModel, try_replace

__all__ = [
    "BlockDevice", "DeltaFS", "FSConfig", "FileHandle", "WriteOutcome", "Hcluster",
    "HotnessClass", "InodeImage", "LatencyModel", "try_replace", "DEFAULT_CODEC",
    "ZeroRunCodec", "ZlibCodec", "delta_encode", "delta_apply", "recover_base",
]
