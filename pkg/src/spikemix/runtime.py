"""Process-level performance knobs for the numpy-heavy hot paths."""

import ctypes
import os
import sys

__all__ = ["tune_allocator"]

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3
_tuned = False


def tune_allocator() -> bool:
    """Keep large allocations on the heap so freed tensor buffers are reused.

    glibc serves big blocks via mmap and returns them to the kernel on free;
    tensor workloads then spend most of their time in page faults. Raising
    the mmap/trim thresholds once per process removes that churn. No-op off
    glibc or with SPIKEMIX_NO_MALLOC_TUNE=1; trades peak RSS for speed.
    """
    global _tuned
    if _tuned:
        return True
    if os.environ.get("SPIKEMIX_NO_MALLOC_TUNE") == "1" or not sys.platform.startswith("linux"):
        return False
    try:
        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        libc.mallopt(_M_MMAP_THRESHOLD, 1 << 30)
        libc.mallopt(_M_TRIM_THRESHOLD, 1 << 30)
    except (OSError, AttributeError):
        return False
    _tuned = True
    return True
