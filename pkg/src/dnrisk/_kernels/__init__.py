"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

Callers go through the dispatch functions defined in each submodule; the
active flavour is chosen by :mod:`dnrisk._accel`.
"""
