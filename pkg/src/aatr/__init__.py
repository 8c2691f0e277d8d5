"""Two-stage adaptive threat recognition for volumetric bag scans."""

__version__ = "0.1.0"
