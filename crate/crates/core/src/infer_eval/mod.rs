//! Label inference by clustering, and the evaluation metric suite.

mod align;
mod evaluate;
mod kmeans;
mod metrics;
mod pipeline;
mod predictions;
mod spectral;

pub use align::{align_labels, aligned_accuracy, contingency, LabelAlignment};
pub use evaluate::{evaluate, match_frame, read_truths, video_name, Report, REPORT_HEADER};
pub use kmeans::{elbow_k, kmeans, nearest, KMeans, KMEANS_MAX_ITERATIONS};
pub use metrics::{
    accuracy, average_precision, detection_map, matched_accuracy, mca, membership_accuracy,
    social_activity_accuracy, tube_matches, tube_overlap_frames, video_map, FrameKey, LabeledBox, MembershipCase,
    ScoredBox, Tube, IOU_THRESHOLD, TUBE_FRAME_FRACTION,
};
pub use pipeline::{infer_streams, ARCHITECTURE_KEYS, ActorObservation, FrameBlock, InferenceSummary, Inferencer, VideoFeatures};
pub use predictions::{Detection, Predictions, VideoPrediction, PREDICTIONS_HEADER};
pub use spectral::{eigengap_count, normalized_laplacian, spectral_clustering, EIGENGAP_WINDOW};
