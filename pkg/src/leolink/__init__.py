"""leolink: outside-in measurement of LEO satellite last-mile links.

The toolkit discovers satellite-routed customer endpoints in scan data,
isolates the satellite segment of the path with TTL-pinned probes,
quantifies latency and spike behaviour, and cross-checks observations
against a constellation geometry model.  A deterministic network
simulator makes the whole pipeline testable offline.
"""

__version__ = "0.1.0"
