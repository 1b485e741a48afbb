"""Planning-informed evaluation of trajectory predictions and detections."""

__version__ = "0.1.0"
