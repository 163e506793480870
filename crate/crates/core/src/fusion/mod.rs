//! Fusing the four conspicuity maps into one saliency map.

pub mod baselines;
pub mod forest;
pub mod sampling;
pub mod serialize;

pub use baselines::{fit_lms_weights, fuse_fixed, gnlns_normalize, FusionMethod, METHOD_NAMES};
pub use forest::{
    bootstrap_indices, out_of_bag_indices, rf_oob_importance, rf_predict, rf_train, Node, RandomForestModel,
    RegressionTree, RfParams, NUM_FEATURES,
};
pub use sampling::{sample_pixels, sampled_frame_indices, PixelSample};
pub use serialize::FORMAT_TAG;
