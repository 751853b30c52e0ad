"""pairgate: a dual-authorization access gateway.

Non-privileged staff can read sensitive clinical documents only after a
paired approver signs off on the specific request. Every security-relevant
event lands in a hash-chained append-only journal that doubles as the
system of record.
"""

__version__ = "0.1.0"

from pairgate.clock import Clock, ManualClock, SystemClock
from pairgate.config import Config
from pairgate.service import CoreService

__all__ = ["Clock", "ManualClock", "SystemClock", "Config", "CoreService", "__version__"]
