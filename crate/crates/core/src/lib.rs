//! Keypoint-guided point cloud sampling for lidar odometry.
//!
//! Range and signal images of a lidar sweep are preprocessed, expanded into
//! image variants (2x super-resolution, colorization), and searched for
//! keypoints. Keypoints tracked between consecutive frames select the
//! cloud points that feed a scan-to-map ICP odometry.

pub mod codec;
pub mod config;
pub mod enhance;
pub mod error;
pub mod evaluation;
pub mod external;
pub mod features;
pub mod ingest;
pub mod odometry;
pub mod pipeline;
pub mod preprocess;
pub mod synth;
pub mod tracking;
pub mod types;

pub use error::{Error, Result};
