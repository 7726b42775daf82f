"""botlab: a desk-scale toolkit for hybrid human/machine bot detection.

Pieces: an agent-based platform simulator with adaptive influence
campaigns and a heterogeneous reporter pool; feature-based bot
detectors; report-aggregation and detector-fusion strategies; an
incremental retraining harness; and the statistical machinery used to
evaluate all of it.
"""

__version__ = "0.1.0"
