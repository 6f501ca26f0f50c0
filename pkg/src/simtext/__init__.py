"""Similar-mask scene text representation: labels, post-processing, losses, evaluation."""
from .geometry import (area_perimeter, centroid, k_of_delta, offset_expand_distance, offset_shrink_distance,
                       polygon_iou, polygon_offset, similar_expand, similar_shrink)
from .pipeline import (Annotation, Detection, ReconstructConfig, TimingReport, generate_offset_label,
                       generate_similar_label, reconstruct)

__version__ = "0.1.0"
