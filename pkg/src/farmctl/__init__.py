"""farmctl: autonomous home-farm controller, verified against an embedded
chamber simulator instead of physical hardware."""

__version__ = "0.1.0"
