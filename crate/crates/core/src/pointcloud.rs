//! Lidar scenes and scene validation.

use std::fmt;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::event_map::AccumulatedEventMap;
use crate::geometry::Intrinsics;

/// One lidar return: position in the lidar frame (meters) and 8-bit intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub position: Vector3<f64>,
    pub intensity: u8,
}

/// An unvalidated record as it comes off disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawLidarPoint {
    pub position: [f64; 3],
    pub intensity: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudScene {
    scene_id: String,
    points: Vec<LidarPoint>,
}

impl PointCloudScene {
    pub fn new(scene_id: impl Into<String>, points: Vec<LidarPoint>) -> Result<Self> {
        let scene_id = scene_id.into();
        let mut issues = Vec::new();
        if points.is_empty() {
            issues.push(ValidationIssue::EmptyCloud);
        }
        for (index, p) in points.iter().enumerate() {
            if !p.position.iter().all(|c| c.is_finite()) {
                issues.push(ValidationIssue::NonFiniteCoordinate { index });
            }
        }
        if issues.is_empty() {
            Ok(Self { scene_id, points })
        } else {
            Err(Error::Validation(ValidationReport { scene_id, issues }))
        }
    }

    /// Validates raw records, reporting every bad index at once.
    pub fn from_raw(scene_id: impl Into<String>, raw: &[RawLidarPoint]) -> Result<Self> {
        let scene_id = scene_id.into();
        let issues = raw_issues(raw);
        if !issues.is_empty() {
            return Err(Error::Validation(ValidationReport { scene_id, issues }));
        }
        Ok(Self {
            scene_id,
            points: raw.iter().map(to_point).collect(),
        })
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn points(&self) -> &[LidarPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_scene_id(mut self, scene_id: impl Into<String>) -> Self {
        self.scene_id = scene_id.into();
        self
    }
}

fn to_point(r: &RawLidarPoint) -> LidarPoint {
    LidarPoint {
        position: Vector3::from(r.position),
        intensity: r.intensity as u8,
    }
}

fn raw_issues(raw: &[RawLidarPoint]) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    if raw.is_empty() {
        issues.push(ValidationIssue::EmptyCloud);
    }
    for (index, p) in raw.iter().enumerate() {
        if !p.position.iter().all(|c| c.is_finite()) {
            issues.push(ValidationIssue::NonFiniteCoordinate { index });
        }
        if !(0..=255).contains(&p.intensity) {
            issues.push(ValidationIssue::IntensityOutOfRange {
                index,
                value: p.intensity,
            });
        }
    }
    issues
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    EmptyCloud,
    NonFiniteCoordinate { index: usize },
    IntensityOutOfRange { index: usize, value: i64 },
    DimensionMismatch { map: (u32, u32), intrinsics: (u32, u32) },
    InvalidIntrinsics(String),
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::EmptyCloud => write!(f, "point cloud is empty"),
            ValidationIssue::NonFiniteCoordinate { index } => {
                write!(f, "record {index}: non-finite coordinate")
            }
            ValidationIssue::IntensityOutOfRange { index, value } => {
                write!(f, "record {index}: intensity {value} outside [0, 255]")
            }
            ValidationIssue::DimensionMismatch { map, intrinsics } => write!(
                f,
                "event map is {}x{} but intrinsics are {}x{}",
                map.0, map.1, intrinsics.0, intrinsics.1
            ),
            ValidationIssue::InvalidIntrinsics(msg) => write!(f, "{msg}"),
        }
    }
}

/// Every invariant a scene violated.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub scene_id: String,
    pub issues: Vec<ValidationIssue>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scene `{}`: ", self.scene_id)?;
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// A lidar scan and the smoothed event map of the same static scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePair {
    pub cloud: PointCloudScene,
    pub map: AccumulatedEventMap,
}

impl ScenePair {
    pub fn scene_id(&self) -> &str {
        self.cloud.scene_id()
    }
}

/// Binds raw lidar records and an event map into a [`ScenePair`], or returns a
/// report of everything that is wrong with them.
pub fn validate_scene(
    scene_id: &str,
    raw: &[RawLidarPoint],
    map: AccumulatedEventMap,
    k: &Intrinsics,
) -> std::result::Result<ScenePair, ValidationReport> {
    let mut issues = Vec::new();
    if let Err(e) = k.validate() {
        issues.push(ValidationIssue::InvalidIntrinsics(e.to_string()));
    }
    if (map.width(), map.height()) != (k.width, k.height) {
        issues.push(ValidationIssue::DimensionMismatch {
            map: (map.width(), map.height()),
            intrinsics: (k.width, k.height),
        });
    }
    issues.extend(raw_issues(raw));
    if !issues.is_empty() {
        return Err(ValidationReport {
            scene_id: scene_id.to_string(),
            issues,
        });
    }
    Ok(ScenePair {
        cloud: PointCloudScene {
            scene_id: scene_id.to_string(),
            points: raw.iter().map(to_point).collect(),
        },
        map,
    })
}

/// Same as [`validate_scene`] for an already-parsed cloud.
pub fn pair_scene(
    cloud: PointCloudScene,
    map: AccumulatedEventMap,
    k: &Intrinsics,
) -> std::result::Result<ScenePair, ValidationReport> {
    if (map.width(), map.height()) != (k.width, k.height) {
        return Err(ValidationReport {
            scene_id: cloud.scene_id.clone(),
            issues: vec![ValidationIssue::DimensionMismatch {
                map: (map.width(), map.height()),
                intrinsics: (k.width, k.height),
            }],
        });
    }
    Ok(ScenePair { cloud, map })
}
