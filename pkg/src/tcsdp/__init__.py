"""Trace-constrained SDP relaxations with rank-1 refinement and optimality
certification, plus virtual-robot builders for pose estimation and
calibration problems."""

__version__ = "0.1.0"
