//! Extrinsic calibration between an event camera and a lidar.
//!
//! Lidar returns trigger events on the camera sensor, so over a static scene
//! the per-pixel event activity is statistically dependent on the intensity of
//! the lidar returns that land on that pixel. Calibration searches for the
//! rigid transform that maximizes the mutual information between the two,
//! averaged over a set of scenes.

pub mod calibrate;
pub mod error;
pub mod event_map;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod mi;
pub mod optimizer;
pub mod pointcloud;
pub mod synth;

pub use calibrate::{calibrate, CalibrationConfig};
pub use error::{Error, Result};
pub use event_map::{accumulate, smooth, AccumulatedEventMap, Event, Polarity};
pub use geometry::{project_cloud, project_point, ExtrinsicParams, Intrinsics, PixelCoord};
pub use mi::{evaluate_mi, evaluate_mi_multi, Bandwidth, MiConfig, Sampling};
pub use optimizer::{maximize, Bounds, Method, OptimizeOptions, OptimizeResult};
pub use pointcloud::{validate_scene, LidarPoint, PointCloudScene, ScenePair};
