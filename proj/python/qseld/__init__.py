"""Quaternion SELD: sound event localization and detection from B-format audio."""

try:
    from ._qseld import *  # noqa: F401,F403
    from ._qseld import __version__  # noqa: F401
except ImportError:
    # build-tree layout: the extension sits next to the package on sys.path
    from _qseld import *  # noqa: F401,F403
    from _qseld import __version__  # noqa: F401
