import ctypes

# Keep large allocations on the heap so freed blocks are reused; some
# sandboxed kernels make fresh mmap pages very slow to fault in.  Harmless
# where unavailable.
try:
    _libc = ctypes.CDLL("libc.so.6")
    _libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
except OSError:
    pass
