"""Hard-batch metric learning toolkit (C++ core)."""

from ._hardbatch import *  # noqa: F401,F403
from ._hardbatch import __doc__  # noqa: F401
