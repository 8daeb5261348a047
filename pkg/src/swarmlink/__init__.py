"""swarmlink: deterministic multi-UAV swarm simulator.

Covers link loss detection and reconnection timing, RSSI distance
estimation with interval-accuracy statistics, separation control,
broadcast-rate Q-learning, and 2D lidar occupancy-grid SLAM, with
reproducible CSV/PGM/figure reports.
"""

__version__ = "0.1.0"
