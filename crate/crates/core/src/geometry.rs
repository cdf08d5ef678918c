//! Rigid transforms and pinhole projection with Brown–Conrady distortion.
//!
//! Extrinsics map a lidar-frame point `P` into the camera frame as
//! `p_c = R·P + t`, where `R` is expanded from an axis-angle vector. The
//! camera frame follows the usual optical convention: `z` forward, `x` right,
//! `y` down.
//!
//! ```text
//! x' = p_c.x / p_c.z,  y' = p_c.y / p_c.z
//! r² = x'² + y'²
//! radial = 1 + k1·r² + k2·r⁴ + k3·r⁶
//! x_d = x'·radial + 2·p1·x'·y' + p2·(r² + 2·x'²)
//! y_d = y'·radial + p1·(r² + 2·y'²) + 2·p2·x'·y'
//! u = fx·x_d + cx,  v = fy·y_d + cy
//! ```

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::pointcloud::PointCloudScene;

/// Points with camera-frame depth at or below this (meters) never project.
pub const MIN_DEPTH: f64 = 1e-6;

const SMALL_ANGLE: f64 = 1e-10;

/// Six-parameter extrinsic calibration: translation in meters followed by an
/// axis-angle rotation in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtrinsicParams {
    pub translation: Vector3<f64>,
    pub rotation: Vector3<f64>,
}

impl ExtrinsicParams {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: Vector3::zeros(),
        }
    }

    /// Builds extrinsics from `(x, y, z, v1, v2, v3)`, rejecting non-finite
    /// components and rotation angles at or beyond π.
    pub fn new(params: [f64; 6]) -> Result<Self> {
        if let Some(i) = params.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!(
                "extrinsic component {i} is not finite ({})",
                params[i]
            )));
        }
        let theta = Self::from_array(params);
        let angle = theta.rotation.norm();
        if angle >= PI {
            return Err(Error::invalid(format!(
                "rotation angle {angle} rad is outside [0, pi)"
            )));
        }
        Ok(theta)
    }

    /// Unchecked conversion used on optimizer iterates.
    pub fn from_array(p: [f64; 6]) -> Self {
        Self {
            translation: Vector3::new(p[0], p[1], p[2]),
            rotation: Vector3::new(p[3], p[4], p[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
        ]
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        rodrigues(&self.rotation)
    }
}

impl Default for ExtrinsicParams {
    fn default() -> Self {
        Self::identity()
    }
}

/// Expands an axis-angle vector into a rotation matrix.
pub fn rotation_from_axis_angle(v: &Vector3<f64>) -> Result<Matrix3<f64>> {
    if !v.iter().all(|c| c.is_finite()) {
        return Err(Error::invalid(format!("axis-angle vector {v:?} is not finite")));
    }
    Ok(rodrigues(v))
}

fn rodrigues(v: &Vector3<f64>) -> Matrix3<f64> {
    let angle = v.norm();
    let k = skew(v);
    if angle < SMALL_ANGLE {
        // second-order series; no division by the angle
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let a = angle.sin() / angle;
    let b = (1.0 - angle.cos()) / (angle * angle);
    Matrix3::identity() + a * k + b * k * k
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Pinhole intrinsics with Brown–Conrady distortion and sensor size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    /// Undistorted pinhole intrinsics.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            p1: 0.0,
            p2: 0.0,
            width,
            height,
        }
    }

    /// Collects every violated invariant into one message.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let all = [
            self.fx, self.fy, self.cx, self.cy, self.k1, self.k2, self.k3, self.p1, self.p2,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            problems.push("non-finite parameter".to_string());
        }
        if !(self.fx > 0.0) {
            problems.push(format!("fx must be positive, got {}", self.fx));
        }
        if !(self.fy > 0.0) {
            problems.push(format!("fy must be positive, got {}", self.fy));
        }
        if self.width == 0 || self.height == 0 {
            problems.push(format!(
                "resolution must be positive, got {}x{}",
                self.width, self.height
            ));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            problems.push(format!("cx = {} outside [0, {})", self.cx, self.width));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            problems.push(format!("cy = {} outside [0, {})", self.cy, self.height));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(format!("intrinsics: {}", problems.join("; "))))
        }
    }

    /// Applies distortion to normalized image coordinates.
    pub fn distort(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xy = x * y;
        let xd = x * radial + 2.0 * self.p1 * xy + self.p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * xy;
        (xd, yd)
    }

    pub fn in_bounds(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64
    }
}

/// Continuous pixel coordinate with an image-bounds validity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
    pub valid: bool,
}

impl PixelCoord {
    fn invalid() -> Self {
        Self {
            u: f64::NAN,
            v: f64::NAN,
            valid: false,
        }
    }
}

/// Extrinsics expanded once for projecting many points.
#[derive(Debug, Clone, Copy)]
pub struct Projector<'a> {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    intrinsics: &'a Intrinsics,
}

impl<'a> Projector<'a> {
    pub fn new(theta: &ExtrinsicParams, intrinsics: &'a Intrinsics) -> Self {
        Self {
            rotation: theta.rotation_matrix(),
            translation: theta.translation,
            intrinsics,
        }
    }

    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> PixelCoord {
        let pc = self.rotation * p + self.translation;
        if !(pc.z > MIN_DEPTH) {
            return PixelCoord::invalid();
        }
        let k = self.intrinsics;
        let (xd, yd) = k.distort(pc.x / pc.z, pc.y / pc.z);
        let u = k.fx * xd + k.cx;
        let v = k.fy * yd + k.cy;
        PixelCoord {
            u,
            v,
            valid: k.in_bounds(u, v),
        }
    }
}

pub fn project_point(p: &Vector3<f64>, theta: &ExtrinsicParams, k: &Intrinsics) -> PixelCoord {
    Projector::new(theta, k).project(p)
}

/// Projects every point of a scene, keeping only valid projections in input
/// order together with their intensities.
pub fn project_cloud(
    scene: &PointCloudScene,
    theta: &ExtrinsicParams,
    k: &Intrinsics,
) -> Vec<(PixelCoord, u8)> {
    let projector = Projector::new(theta, k);
    scene
        .points()
        .iter()
        .filter_map(|pt| {
            let px = projector.project(&pt.position);
            px.valid.then_some((px, pt.intensity))
        })
        .collect()
}
