//! Box-focused blob selection, baseline samplers and detector input export.

pub mod features;
pub mod field;
pub mod frustum;
pub mod sampler;

pub use features::{
    concat_features, decode_detector_input, detector_paths, encode_detector_input,
    export_detector_input, parse_detector_header, read_detector_input, DetectorHeader,
    FeatureMatrix, FEATURE_COLUMNS,
};
pub use field::{build_probability_field, ObjectProbabilityField, DEFAULT_P_BG};
pub use frustum::{blob_in_frustum, frustums_for_views, Frustum};
pub use sampler::{
    box_focused_sample, farthest_point_order, farthest_point_sample, random_sample, SampledScene,
    SamplerKind, SamplingMode,
};
