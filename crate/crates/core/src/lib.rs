//! Food detection on tray images by fusing an object detector with a binary
//! food segmentation.
//!
//! * [`geometry`]: pixel boxes, contours and overlap measures.
//! * [`mask`]: binary masks, connected components, boundary tracing, hole filling.
//! * [`detection`]: raw detector output and confidence scoring.
//! * [`fusion`]: background removal and non-maximum suppression.
//! * [`metrics`]: pixel, region and detection metrics.
//! * [`pipeline`]: file formats and dataset-level runs.

pub mod detection;
pub mod fusion;
pub mod geometry;
pub mod mask;
pub mod metrics;
pub mod pipeline;

pub use detection::{confidence_score, filter_by_threshold, Detection, Objectness, ObjectnessKind, RawDetection};
pub use fusion::{
    background_removal, fuse_scored, fuse_with_mask, nms, BackgroundMode, FusionConfig, OverlapMode,
    SegmentationEvidence,
};
pub use geometry::{BBox, Contour, Point};
pub use mask::{connected_components, extract_regions, fill_holes, trace_boundary, BinaryMask, LabelMask, Region};
pub use metrics::{EvalReport, GroundTruthItem, MatchResult};
pub use pipeline::{run_pipeline, PipelineError, RunConfig, RunReport, Stages};
