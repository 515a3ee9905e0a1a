pub mod covariance;
pub mod data;
pub mod error;
pub mod linalg;
pub mod points;
pub mod vecchia;
pub mod exact;
pub mod metrics;
pub mod predict;
pub mod synthetic;
pub mod scoring;
pub mod estimate;
pub mod model_file;
pub mod mwgp;
pub mod pipeline;
