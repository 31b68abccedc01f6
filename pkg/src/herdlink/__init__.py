"""herdlink: desk-scale cattle telemetry, end to end.

A deterministic herd simulator drives a virtual collar firmware (sensor
fusion, 31-byte frame encoding, energy accounting) through a lossy LoRa
link into a backend that decodes, stores, and analyzes activity.
"""

__version__ = "0.1.0"
