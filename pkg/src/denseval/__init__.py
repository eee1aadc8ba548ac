"""Evaluation toolkit for dense instance segmentation."""

__version__ = "0.1.0"

from .exceptions import DensevalError, FormatError, GeometryError, InputError, ParseError
from .structures import (AnnotationSet, Contour, InstanceMask, LabelMap, Polygon, Prediction,
                         PredictionSet)
from .geometry import (SimplificationParams, denormalize_polygon, mask_iou, nms,
                       normalize_polygon, rasterize_polygon, rle_decode, rle_encode,
                       simplify_polygon, trace_external_contour)
from .mask_io import (DatasetStats, compute_coverage, compute_split_stats, extract_instances,
                      load_label_map, load_polygon_labels, load_prediction_index,
                      write_polygon_labels)
from .matching import (ComputeProfile, MatchOutcome, MetricsReport, average_precision_50,
                       dataset_metrics, efficiency_metrics, match_instances, mean_image_f1)
from .sweeps import (SweepCurve, ThresholdSelection, confidence_sweep, degradation_stats,
                     iou_sweep, select_threshold)
from .error_analysis import (ErrorBreakdown, ErrorRules, LuminanceImage, categorize_errors,
                             local_contrast, neighborhood_density)
