//! Confidence sets for the unknown transitions, intrinsic reward and utility.

mod confidence;
mod eluder;
mod features;
mod least_squares;
mod transitions;

pub use confidence::RewardConfidence;
pub use eluder::{
    eluder_sequence_length, eluder_sequence_length_features, is_independent, max_gap_linear,
};
pub use features::{
    log_covering_number, Family, FeatureSpec, Link, RewardClass, RewardSpec, SpecFamily,
    UtilityClass,
};
pub use least_squares::{beta_schedule, LeastSquaresState, Predictor, WidthRule};
pub use transitions::{
    confidence_radii, confidence_radius, episode_trigger, update_counts, TransitionConfidenceSet,
    TransitionCounts,
};
