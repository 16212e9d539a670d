"""posedrift: simulator and defense toolkit for spoofed slow poses in
edge-offloaded visual-inertial odometry."""

__version__ = "0.1.0"
