"""Stochastic capacity procurement toolkit.

Optimizes a capacity vector against Monte-Carlo-sampled chronological
uncertainty (unit outages, renewable profiles, load), evaluates each
scenario with an exact storage-aware dispatch LP, and statistically
validates the resulting decision's reliability (EUE, LOLE).
"""

__version__ = "0.1.0"
