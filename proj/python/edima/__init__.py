"""Python bindings for the edima scan-detection library."""

from ._edima import *  # noqa: F401,F403
from ._edima import EdimaError, __doc__  # noqa: F401

TCP_SYN = 0x02
TCP_ACK = 0x10
