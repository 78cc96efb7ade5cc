pub mod dataio;
pub mod metrics;
pub mod model;
pub mod optimize;
pub mod predict;
pub mod synthetic;
